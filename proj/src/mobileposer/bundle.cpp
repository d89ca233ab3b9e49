#include "mobileposer/bundle.hpp"

#include <fstream>
#include <map>

#include "mobileposer/binary_io.hpp"
#include "mobileposer/devconfig.hpp"
#include "mobileposer/error.hpp"
#include "mobileposer/synthesis.hpp"

namespace mobileposer {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kHeadCount> kHeadNames{"joint", "theta", "contact", "velocity", "velocity_imu"};

void put_tensor(std::ostream& os, const std::string& name, const nn::Mat& m) {
  bin::put_string(os, name);
  bin::put<std::uint32_t>(os, 2);
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(m.rows()));
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) bin::put_f32(os, m(r, c));
}

json spec_json(const BundleSpec& s) {
  return {{"hidden_dim", s.hidden_dim}, {"layers", s.layers}, {"imu_only_velocity", s.imu_only_velocity}};
}

BundleSpec spec_from_json(const json& j) {
  BundleSpec s;
  try {
    s.hidden_dim = j.at("hidden_dim").get<int>();
    s.layers = j.at("layers").get<int>();
    s.imu_only_velocity = j.value("imu_only_velocity", false);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("checkpoint spec: ") + e.what());
  }
  if (s.hidden_dim <= 0 || s.layers < 0) fail(ErrorCode::kParse, "checkpoint spec has invalid dims");
  return s;
}

}  // namespace

std::string_view head_name(Head head) { return kHeadNames[static_cast<int>(head)]; }

std::optional<Head> parse_head(std::string_view name) {
  for (int k = 0; k < kHeadCount; ++k)
    if (kHeadNames[k] == name) return static_cast<Head>(k);
  return std::nullopt;
}

nn::SeqModelSpec head_spec(Head head, const BundleSpec& spec) {
  nn::SeqModelSpec s;
  switch (head) {
    case Head::kJoint:
      s = {kInputDim, spec.hidden_dim, kJointDim, spec.layers, nn::Direction::kBi};
      break;
    case Head::kTheta:
      s = {kPoseConditionedDim, spec.hidden_dim, kRot6dDim, spec.layers, nn::Direction::kBi};
      break;
    case Head::kContact:
      s = {kPoseConditionedDim, spec.hidden_dim, 2, spec.layers, nn::Direction::kBi};
      break;
    case Head::kVelocity:
      s = {kPoseConditionedDim, spec.hidden_dim, 3, spec.layers, nn::Direction::kUni};
      break;
    case Head::kVelocityImu:
      s = {kInputDim, spec.hidden_dim, 3, spec.layers, nn::Direction::kUni};
      break;
  }
  return s;
}

ModelBundle ModelBundle::create(const BundleSpec& spec, std::uint64_t seed) {
  ModelBundle b;
  b.spec = spec;
  for (int k = 0; k < kHeadCount; ++k) {
    const Head h = static_cast<Head>(k);
    if (h == Head::kVelocityImu && !spec.imu_only_velocity) continue;
    b.heads[k] = nn::SeqModel::initialized(head_spec(h, spec), seed * 1000003ull + static_cast<std::uint64_t>(k) + 1);
  }
  b.record["spec"] = spec_json(spec);
  b.record["seed"] = seed;
  return b;
}

ModelBundle ModelBundle::zeros(const BundleSpec& spec) {
  ModelBundle b;
  b.spec = spec;
  for (int k = 0; k < kHeadCount; ++k) {
    const Head h = static_cast<Head>(k);
    if (h == Head::kVelocityImu && !spec.imu_only_velocity) continue;
    b.heads[k] = nn::SeqModel(head_spec(h, spec));
  }
  b.record["spec"] = spec_json(spec);
  return b;
}

const nn::SeqModel& ModelBundle::head(Head h) const {
  const auto& m = heads[static_cast<int>(h)];
  if (!m) fail(ErrorCode::kChannelMissing, "bundle has no " + std::string(head_name(h)) + " head");
  return *m;
}

nn::SeqModel& ModelBundle::head(Head h) {
  auto& m = heads[static_cast<int>(h)];
  if (!m) fail(ErrorCode::kChannelMissing, "bundle has no " + std::string(head_name(h)) + " head");
  return *m;
}

void round_to_f32(ModelBundle& bundle) {
  for (auto& m : bundle.heads) {
    if (!m) continue;
    m->params().for_each([](const std::string&, nn::Mat& w) {
      for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = static_cast<double>(static_cast<float>(w.data()[k]));
    });
  }
}

void save_bundle(const ModelBundle& bundle, const std::string& path, bool with_optimizer) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::kIo, "cannot write " + path);
  json record = bundle.record;
  record["spec"] = spec_json(bundle.spec);
  json steps = json::object();
  for (int k = 0; k < kHeadCount; ++k)
    if (bundle.optimizer[k]) steps[std::string(kHeadNames[k])] = bundle.optimizer[k]->steps;
  record["optimizer_steps"] = steps;

  std::vector<std::pair<std::string, const nn::Mat*>> table;
  for (int k = 0; k < kHeadCount; ++k) {
    if (!bundle.heads[k]) continue;
    const std::string head(kHeadNames[k]);
    bundle.heads[k]->params().for_each(
        [&](const std::string& name, const nn::Mat& m) { table.emplace_back(head + "/" + name, &m); });
    if (with_optimizer && bundle.optimizer[k]) {
      bundle.optimizer[k]->m.for_each(
          [&](const std::string& name, const nn::Mat& m) { table.emplace_back("adam.m/" + head + "/" + name, &m); });
      bundle.optimizer[k]->v.for_each(
          [&](const std::string& name, const nn::Mat& m) { table.emplace_back("adam.v/" + head + "/" + name, &m); });
    }
  }
  if (!with_optimizer) record.erase("optimizer_steps");

  bin::put_magic(os, "MPCK");
  bin::put<std::uint32_t>(os, kCheckpointVersion);
  bin::put_string(os, record.dump());
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(table.size()));
  for (const auto& [name, m] : table) put_tensor(os, name, *m);
  if (!os) fail(ErrorCode::kIo, "failed writing " + path);
}

ModelBundle load_bundle(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kIo, "cannot open " + path);
  bin::expect_magic(is, "MPCK", "checkpoint");
  const auto version = bin::get<std::uint32_t>(is, "checkpoint version");
  if (version > kCheckpointVersion)
    fail(ErrorCode::kVersionUnsupported, "checkpoint version " + std::to_string(version) + " is newer than supported " +
                                             std::to_string(kCheckpointVersion));
  json record;
  try {
    record = json::parse(bin::get_string(is, "checkpoint record"));
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("checkpoint record: ") + e.what());
  }

  std::map<std::string, nn::Mat> tensors;
  const auto count = bin::get<std::uint32_t>(is, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = bin::get_string(is, "tensor name", 4096);
    const auto ndims = bin::get<std::uint32_t>(is, "tensor rank");
    if (ndims != 2) fail(ErrorCode::kParse, "tensor " + name + " has unsupported rank");
    const auto rows = bin::get<std::uint32_t>(is, "tensor dims");
    const auto cols = bin::get<std::uint32_t>(is, "tensor dims");
    if (static_cast<std::uint64_t>(rows) * cols > (1ull << 28)) fail(ErrorCode::kParse, "tensor " + name + " too large");
    nn::Mat m(rows, cols);
    for (std::uint32_t c = 0; c < cols; ++c)
      for (std::uint32_t r = 0; r < rows; ++r) m(r, c) = bin::get_f32(is, "tensor payload");
    tensors.emplace(std::move(name), std::move(m));
  }

  ModelBundle b;
  b.spec = spec_from_json(record.at("spec"));
  b.record = record;
  const json steps = record.value("optimizer_steps", json::object());
  b.record.erase("optimizer_steps");

  auto fill = [&](nn::Params& params, const std::string& prefix) {
    params.for_each([&](const std::string& name, nn::Mat& m) {
      auto it = tensors.find(prefix + name);
      if (it == tensors.end()) fail(ErrorCode::kParse, "checkpoint is missing tensor " + prefix + name);
      if (it->second.rows() != m.rows() || it->second.cols() != m.cols())
        fail(ErrorCode::kDimMismatch, "tensor " + prefix + name + " has unexpected shape");
      m = it->second;
    });
  };

  for (int k = 0; k < kHeadCount; ++k) {
    const Head h = static_cast<Head>(k);
    const std::string head(kHeadNames[k]);
    if (!tensors.contains(head + "/out.w")) continue;
    nn::SeqModel model(head_spec(h, b.spec));
    fill(model.params(), head + "/");
    b.heads[k] = std::move(model);
    if (steps.contains(head) && tensors.contains("adam.m/" + head + "/out.w")) {
      AdamSnapshot snap;
      snap.m = nn::Params::zeros(head_spec(h, b.spec));
      snap.v = nn::Params::zeros(head_spec(h, b.spec));
      fill(snap.m, "adam.m/" + head + "/");
      fill(snap.v, "adam.v/" + head + "/");
      snap.steps = steps.at(head).get<std::int64_t>();
      b.optimizer[k] = std::move(snap);
    }
  }
  for (Head h : kPipelineHeads)
    if (!b.has(h)) fail(ErrorCode::kParse, "checkpoint is missing the " + std::string(head_name(h)) + " head");
  return b;
}

}  // namespace mobileposer
