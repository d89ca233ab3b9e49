#include "mobileposer/train.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "mobileposer/error.hpp"
#include "mobileposer/nn/losses.hpp"

namespace mobileposer {

using nn::Seq;

void TrainConfig::validate() const {
  if (!(lr > 0) || batch < 1 || epochs < 0 || !(grad_clip > 0) || lambda_jerk < 0 || noise_sigma < 0 || max_steps < 0)
    fail(ErrorCode::kUsage, "training hyperparameters must be positive");
  if (horizons.empty()) fail(ErrorCode::kUsage, "at least one velocity horizon is required");
}

std::uint32_t required_channels(Head head) {
  switch (head) {
    case Head::kJoint: return kChannelInputs | kChannelJoints;
    case Head::kTheta: return kChannelInputs | kChannelJoints | kChannelRot6d;
    case Head::kContact: return kChannelInputs | kChannelJoints | kChannelContacts;
    case Head::kVelocity: return kChannelInputs | kChannelJoints | kChannelRootVel;
    case Head::kVelocityImu: return kChannelInputs | kChannelRootVel;
  }
  return kAllChannels;
}

Seq stack_windows(std::span<const LabeledWindow> windows, std::span<const int> order,
                  Eigen::MatrixXd LabeledWindow::*member) {
  const int batch = static_cast<int>(order.size());
  const auto& first = windows[static_cast<std::size_t>(order[0])].*member;
  const int steps = static_cast<int>(first.rows());
  Seq s(static_cast<int>(first.cols()), steps, batch);
  for (int b = 0; b < batch; ++b) {
    const auto& m = windows[static_cast<std::size_t>(order[b])].*member;
    if (m.rows() != steps || m.cols() != first.cols()) fail(ErrorCode::kShapeMismatch, "windows differ in shape");
    for (int t = 0; t < steps; ++t) s.data.col(t * batch + b) = m.row(t).transpose();
  }
  return s;
}

Seq concat_features(const Seq& inputs, const Seq& joints) {
  Seq s(inputs.features() + joints.features(), inputs.steps, inputs.batch);
  s.data.topRows(inputs.features()) = inputs.data;
  s.data.bottomRows(joints.features()) = joints.data;
  return s;
}

namespace {

bool pose_conditioned(Head h) { return h == Head::kTheta || h == Head::kContact || h == Head::kVelocity; }

struct Batch {
  Seq input;
  Seq target;
  Seq gt_joints;  // theta only
};

Batch make_batch(Head head, std::span<const LabeledWindow> windows, std::span<const int> order, const Seq* joints_in) {
  Batch b;
  const Seq imu = stack_windows(windows, order, &LabeledWindow::inputs);
  if (pose_conditioned(head)) {
    b.input = concat_features(imu, *joints_in);
  } else {
    b.input = imu;
  }
  switch (head) {
    case Head::kJoint: b.target = stack_windows(windows, order, &LabeledWindow::joints); break;
    case Head::kTheta:
      b.target = stack_windows(windows, order, &LabeledWindow::rot6d);
      b.gt_joints = stack_windows(windows, order, &LabeledWindow::joints);
      break;
    case Head::kContact: b.target = stack_windows(windows, order, &LabeledWindow::contacts); break;
    case Head::kVelocity:
    case Head::kVelocityImu: b.target = stack_windows(windows, order, &LabeledWindow::root_vel); break;
  }
  return b;
}

nn::LossResult head_loss_value(Head head, const Seq& out, const Batch& b, const Rig& rig, const TrainConfig& config) {
  switch (head) {
    case Head::kJoint: return nn::loss_joint(out, b.target);
    case Head::kTheta: {
      nn::RotationLoss r = nn::loss_rotation(out, b.target, b.gt_joints, rig, config.lambda_jerk);
      return {r.total, std::move(r.grad)};
    }
    case Head::kContact: return nn::loss_contact(out, b.target);
    case Head::kVelocity:
    case Head::kVelocityImu: return nn::loss_velocity_cumulative(out, b.target, config.horizons);
  }
  fail(ErrorCode::kRuntime, "unknown head");
}

}  // namespace

TrainResult train_heads(ModelBundle& bundle, const Dataset& data, std::span<const Head> heads, const Rig& rig,
                        const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (data.windows.empty()) fail(ErrorCode::kUsage, "dataset has no windows");
  const std::span<const LabeledWindow> windows(data.windows);
  const int count = static_cast<int>(windows.size());

  TrainResult result;
  for (Head head : heads) {
    const std::uint32_t need = required_channels(head);
    if ((data.channels & need) != need)
      fail(ErrorCode::kChannelMissing, "dataset lacks channels required by the " + std::string(head_name(head)) + " head");

    nn::SeqModel& model = bundle.head(head);
    const int k = static_cast<int>(head);
    nn::Adam adam(model.params(), {config.lr});
    if (bundle.optimizer[k]) adam.restore(bundle.optimizer[k]->m, bundle.optimizer[k]->v, bundle.optimizer[k]->steps);

    const std::uint64_t head_seed = config.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(k) * 7919ull + 1;
    std::mt19937_64 shuffle_rng(head_seed);
    std::vector<int> order(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), 0);

    HeadTrainResult hr;
    hr.head = head;
    bool first = true;
    bool done = false;
    std::int64_t local_steps = 0;
    nn::Params grads = nn::Params::zeros(model.spec());

    for (int epoch = 0; epoch < config.epochs && !done; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      double epoch_loss = 0.0;
      int batches = 0;
      for (int start = 0; start < count && !done; start += config.batch) {
        const int end = std::min(count, start + config.batch);
        const std::span<const int> idx(order.data() + start, static_cast<std::size_t>(end - start));

        Seq noisy;
        if (pose_conditioned(head)) {
          noisy = stack_windows(windows, idx, &LabeledWindow::joints);
          add_joint_noise(noisy.data, config.noise_sigma, head_seed ^ (static_cast<std::uint64_t>(adam.steps()) * 0x100000001B3ull));
        }
        const Batch b = make_batch(head, windows, idx, &noisy);

        nn::SeqModel::Cache cache;
        const Seq out = model.forward(b.input, cache);
        const nn::LossResult loss = head_loss_value(head, out, b, rig, config);
        if (first) {
          hr.initial_loss = loss.value;
          first = false;
        }
        grads.set_zero();
        model.backward(cache, loss.grad, grads);
        nn::clip_grad_norm(grads, config.grad_clip);
        adam.step(model.params(), grads);

        epoch_loss += loss.value;
        ++batches;
        ++local_steps;
        if (config.max_steps > 0 && local_steps >= config.max_steps) done = true;
      }
      EpochRecord rec{head, epoch, adam.steps(), epoch_loss / std::max(1, batches)};
      hr.final_loss = rec.loss;
      result.epochs.push_back(rec);
      if (on_epoch) on_epoch(rec);
    }
    hr.steps = adam.steps();
    bundle.optimizer[k] = AdamSnapshot{adam.first_moment(), adam.second_moment(), adam.steps()};
    result.heads.push_back(hr);

    auto& hist = bundle.record["training"][std::string(head_name(head))];
    hist["steps"] = adam.steps();
    hist["final_loss"] = hr.final_loss;
    hist["lr"] = config.lr;
    hist["batch"] = config.batch;
    hist["grad_clip"] = config.grad_clip;
    hist["lambda_jerk"] = config.lambda_jerk;
    hist["noise_sigma"] = config.noise_sigma;
    hist["seed"] = config.seed;
  }
  return result;
}

double head_loss(const ModelBundle& bundle, Head head, std::span<const LabeledWindow> windows, const Rig& rig,
                 const TrainConfig& config, JointSource joints) {
  if (windows.empty()) fail(ErrorCode::kUsage, "no windows to evaluate");
  std::vector<int> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  Seq joints_in;
  if (pose_conditioned(head)) {
    if (joints == JointSource::kPredicted)
      joints_in = bundle.head(Head::kJoint).forward(stack_windows(windows, order, &LabeledWindow::inputs));
    else
      joints_in = stack_windows(windows, order, &LabeledWindow::joints);
  }
  const Batch b = make_batch(head, windows, order, &joints_in);
  const Seq out = bundle.head(head).forward(b.input);
  return head_loss_value(head, out, b, rig, config).value;
}

}  // namespace mobileposer
