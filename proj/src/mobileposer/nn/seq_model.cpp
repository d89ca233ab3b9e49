#include "mobileposer/nn/seq_model.hpp"

#include <cmath>
#include <random>

#include "mobileposer/error.hpp"

namespace mobileposer::nn {

namespace {

// Both activations go through exp, which Eigen vectorizes for doubles.
template <typename Derived>
void sigmoid_inplace(Eigen::ArrayBase<Derived>&& z) {
  z = 1.0 / (1.0 + (-z).exp());
}

template <typename Derived>
void tanh_inplace(Eigen::ArrayBase<Derived>&& z) {
  z = 2.0 / (1.0 + (-2.0 * z).exp()) - 1.0;
}

// Runs one LSTM direction over the whole input. Writes hidden states into
// `out` (H x TB) and fills `cache` when given.
void run_cell(const LstmCell& cell, const Seq& x, bool reverse, Eigen::Ref<Mat> out, SeqModel::Cache::CellCache* cache) {
  const int hidden = static_cast<int>(cell.w_hh.cols());
  const int steps = x.steps;
  const int batch = x.batch;

  Mat pre = cell.w_ih * x.data;
  pre.colwise() += cell.b.col(0);

  if (cache) {
    cache->cell.resize(hidden, steps * batch);
    cache->tanh_c.resize(hidden, steps * batch);
  }

  Mat h = Mat::Zero(hidden, batch);
  Mat c = Mat::Zero(hidden, batch);
  Mat tc(hidden, batch);
  for (int k = 0; k < steps; ++k) {
    const int t = reverse ? steps - 1 - k : k;
    auto z = pre.middleCols(t * batch, batch);
    z.noalias() += cell.w_hh * h;
    sigmoid_inplace(z.topRows(2 * hidden).array());
    tanh_inplace(z.middleRows(2 * hidden, hidden).array());
    sigmoid_inplace(z.bottomRows(hidden).array());
    c.array() = z.middleRows(hidden, hidden).array() * c.array() +
                z.topRows(hidden).array() * z.middleRows(2 * hidden, hidden).array();
    tc = c;
    tanh_inplace(tc.array());
    h.array() = z.bottomRows(hidden).array() * tc.array();
    out.middleCols(t * batch, batch) = h;
    if (cache) {
      cache->cell.middleCols(t * batch, batch) = c;
      cache->tanh_c.middleCols(t * batch, batch) = tc;
    }
  }
  if (cache) cache->gates = std::move(pre);
}

// BPTT through one direction. `grad_h` is dL/dh for every step (H x TB).
// Accumulates parameter gradients and adds dL/dx into `grad_x`.
void backprop_cell(const LstmCell& cell, const SeqModel::Cache::CellCache& cache, const Seq& x, const Mat& hidden_out,
                   bool reverse, const Eigen::Ref<const Mat>& grad_h, LstmCell& grads, Mat& grad_x) {
  const int hidden = static_cast<int>(cell.w_hh.cols());
  const int steps = x.steps;
  const int batch = x.batch;

  Mat dz_all(4 * hidden, steps * batch);
  Mat dh_next = Mat::Zero(hidden, batch);
  Mat dc_next = Mat::Zero(hidden, batch);
  const Mat zeros = Mat::Zero(hidden, batch);

  for (int k = steps - 1; k >= 0; --k) {
    const int t = reverse ? steps - 1 - k : k;
    const int prev = reverse ? t + 1 : t - 1;
    const bool has_prev = k > 0;

    const auto gates = cache.gates.middleCols(t * batch, batch);
    const auto i = gates.topRows(hidden).array();
    const auto f = gates.middleRows(hidden, hidden).array();
    const auto g = gates.middleRows(2 * hidden, hidden).array();
    const auto o = gates.bottomRows(hidden).array();
    const auto tc = cache.tanh_c.middleCols(t * batch, batch).array();
    const Mat c_prev = has_prev ? Mat(cache.cell.middleCols(prev * batch, batch)) : zeros;
    const Mat h_prev = has_prev ? Mat(hidden_out.middleCols(prev * batch, batch)) : zeros;

    const Mat dh = grad_h.middleCols(t * batch, batch) + dh_next;
    const Mat dc = (dc_next.array() + dh.array() * o * (1.0 - tc.square())).matrix();

    auto dz = dz_all.middleCols(t * batch, batch);
    dz.topRows(hidden) = (dc.array() * g * i * (1.0 - i)).matrix();
    dz.middleRows(hidden, hidden) = (dc.array() * c_prev.array() * f * (1.0 - f)).matrix();
    dz.middleRows(2 * hidden, hidden) = (dc.array() * i * (1.0 - g.square())).matrix();
    dz.bottomRows(hidden) = (dh.array() * tc * o * (1.0 - o)).matrix();

    dc_next = (dc.array() * f).matrix();
    dh_next.noalias() = cell.w_hh.transpose() * dz;
    if (has_prev) grads.w_hh.noalias() += dz * h_prev.transpose();
  }
  grads.w_ih.noalias() += dz_all * x.data.transpose();
  grads.b += dz_all.rowwise().sum();
  grad_x.noalias() += cell.w_ih.transpose() * dz_all;
}

}  // namespace

Seq Seq::from_rows(const Mat& rows) {
  Seq s;
  s.steps = static_cast<int>(rows.rows());
  s.batch = 1;
  s.data = rows.transpose();
  return s;
}

Mat Seq::rows(int b) const {
  Mat out(steps, features());
  for (int t = 0; t < steps; ++t) out.row(t) = data.col(t * batch + b).transpose();
  return out;
}

void SeqModelSpec::validate() const {
  if (input_dim <= 0 || output_dim <= 0 || hidden_dim <= 0 || layers < 0)
    fail(ErrorCode::kShapeMismatch, "model dims must be positive");
}

Params Params::zeros(const SeqModelSpec& spec) {
  spec.validate();
  Params p;
  p.directions = spec.directions();
  const int h = spec.hidden_dim;
  for (int l = 0; l < spec.layers; ++l)
    for (int d = 0; d < spec.directions(); ++d)
      p.cells.push_back({Mat::Zero(4 * h, spec.layer_input(l)), Mat::Zero(4 * h, h), Mat::Zero(4 * h, 1)});
  p.out_w = Mat::Zero(spec.output_dim, spec.feature_width());
  p.out_b = Mat::Zero(spec.output_dim, 1);
  return p;
}

void Params::for_each(const std::function<void(const std::string&, Mat&)>& fn) {
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const std::size_t layer = k / static_cast<std::size_t>(directions);
    const bool backward = k % static_cast<std::size_t>(directions) == 1;
    const std::string prefix = "lstm" + std::to_string(layer) + (backward ? ".bwd." : ".fwd.");
    fn(prefix + "w_ih", cells[k].w_ih);
    fn(prefix + "w_hh", cells[k].w_hh);
    fn(prefix + "b", cells[k].b);
  }
  fn("out.w", out_w);
  fn("out.b", out_b);
}

void Params::for_each(const std::function<void(const std::string&, const Mat&)>& fn) const {
  const_cast<Params*>(this)->for_each([&](const std::string& name, Mat& m) { fn(name, m); });
}

std::size_t Params::count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Mat& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

void Params::set_zero() {
  for_each([](const std::string&, Mat& m) { m.setZero(); });
}

SeqModel::SeqModel(const SeqModelSpec& spec) : spec_(spec), params_(Params::zeros(spec)) {}

SeqModel SeqModel::initialized(const SeqModelSpec& spec, std::uint64_t seed) {
  SeqModel m(spec);
  std::mt19937_64 rng(seed);
  auto fill = [&](Mat& w, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = u(rng);
  };
  const int h = spec.hidden_dim;
  for (auto& cell : m.params_.cells) {
    fill(cell.w_ih, static_cast<int>(cell.w_ih.cols()));
    fill(cell.w_hh, h);
    cell.b.setZero();
    cell.b.middleRows(h, h).setOnes();
  }
  fill(m.params_.out_w, spec.feature_width());
  m.params_.out_b.setZero();
  return m;
}

Seq SeqModel::forward(const Seq& input) const {
  Cache cache;
  return forward(input, cache);
}

Seq SeqModel::forward(const Seq& input, Cache& cache) const {
  if (input.features() != spec_.input_dim)
    fail(ErrorCode::kShapeMismatch, "model expects input width " + std::to_string(spec_.input_dim) + ", got " +
                                        std::to_string(input.features()));
  if (input.data.cols() != static_cast<Eigen::Index>(input.steps) * input.batch)
    fail(ErrorCode::kShapeMismatch, "sequence layout does not match steps x batch");

  const int h = spec_.hidden_dim;
  const int dirs = spec_.directions();
  cache.layer_inputs.clear();
  cache.cells.assign(static_cast<std::size_t>(spec_.layers * dirs), {});
  cache.layer_inputs.push_back(input);
  for (int l = 0; l < spec_.layers; ++l) {
    const Seq& x = cache.layer_inputs.back();
    Seq y(h * dirs, x.steps, x.batch);
    for (int d = 0; d < dirs; ++d) {
      const std::size_t k = static_cast<std::size_t>(l * dirs + d);
      run_cell(params_.cells[k], x, d == 1, y.data.middleRows(d * h, h), &cache.cells[k]);
    }
    cache.layer_inputs.push_back(std::move(y));
  }
  const Seq& feat = cache.layer_inputs.back();
  Seq out;
  out.steps = feat.steps;
  out.batch = feat.batch;
  out.data = params_.out_w * feat.data;
  out.data.colwise() += params_.out_b.col(0);
  return out;
}

Seq SeqModel::backward(const Cache& cache, const Seq& grad_output, Params& grads) const {
  const int h = spec_.hidden_dim;
  const int dirs = spec_.directions();
  const Seq& feat = cache.layer_inputs.back();
  if (grad_output.features() != spec_.output_dim || grad_output.data.cols() != feat.data.cols())
    fail(ErrorCode::kShapeMismatch, "gradient shape does not match model output");

  grads.out_w.noalias() += grad_output.data * feat.data.transpose();
  grads.out_b += grad_output.data.rowwise().sum();
  Mat grad = params_.out_w.transpose() * grad_output.data;

  for (int l = spec_.layers - 1; l >= 0; --l) {
    const Seq& x = cache.layer_inputs[static_cast<std::size_t>(l)];
    const Seq& y = cache.layer_inputs[static_cast<std::size_t>(l + 1)];
    Mat grad_x = Mat::Zero(x.features(), x.data.cols());
    for (int d = 0; d < dirs; ++d) {
      const std::size_t k = static_cast<std::size_t>(l * dirs + d);
      const Mat hidden_out = y.data.middleRows(d * h, h);
      backprop_cell(params_.cells[k], cache.cells[k], x, hidden_out, d == 1, grad.middleRows(d * h, h), grads.cells[k],
                    grad_x);
    }
    grad = std::move(grad_x);
  }
  Seq out;
  out.steps = grad_output.steps;
  out.batch = grad_output.batch;
  out.data = std::move(grad);
  return out;
}

SeqModel::State SeqModel::initial_state() const {
  State s;
  for (int l = 0; l < spec_.layers; ++l) {
    s.h.push_back(Eigen::VectorXd::Zero(spec_.hidden_dim));
    s.c.push_back(Eigen::VectorXd::Zero(spec_.hidden_dim));
  }
  return s;
}

Eigen::VectorXd SeqModel::step(State& state, const Eigen::VectorXd& input) const {
  if (spec_.direction != Direction::kUni) fail(ErrorCode::kShapeMismatch, "step() requires a unidirectional model");
  if (input.size() != spec_.input_dim) fail(ErrorCode::kShapeMismatch, "step input width mismatch");
  const int h = spec_.hidden_dim;
  Eigen::VectorXd x = input;
  for (int l = 0; l < spec_.layers; ++l) {
    const auto& cell = params_.cells[static_cast<std::size_t>(l)];
    Eigen::VectorXd z = cell.w_ih * x + cell.b.col(0);
    z.noalias() += cell.w_hh * state.h[static_cast<std::size_t>(l)];
    sigmoid_inplace(z.head(2 * h).array());
    tanh_inplace(z.segment(2 * h, h).array());
    sigmoid_inplace(z.tail(h).array());
    auto& c = state.c[static_cast<std::size_t>(l)];
    c.array() = z.segment(h, h).array() * c.array() + z.head(h).array() * z.segment(2 * h, h).array();
    Eigen::VectorXd tc = c;
    tanh_inplace(tc.array());
    state.h[static_cast<std::size_t>(l)] = (z.tail(h).array() * tc.array()).matrix();
    x = state.h[static_cast<std::size_t>(l)];
  }
  return params_.out_w * x + params_.out_b.col(0);
}

}  // namespace mobileposer::nn
