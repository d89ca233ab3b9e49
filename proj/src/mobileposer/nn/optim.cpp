#include "mobileposer/nn/optim.hpp"

#include <cmath>

#include "mobileposer/error.hpp"

namespace mobileposer::nn {

namespace {

std::vector<Mat*> tensors(Params& p) {
  std::vector<Mat*> out;
  p.for_each([&](const std::string&, Mat& m) { out.push_back(&m); });
  return out;
}

std::vector<const Mat*> tensors(const Params& p) {
  std::vector<const Mat*> out;
  p.for_each([&](const std::string&, const Mat& m) { out.push_back(&m); });
  return out;
}

}  // namespace

double grad_norm(const Params& grads) {
  double sq = 0.0;
  for (const Mat* g : tensors(grads)) sq += g->squaredNorm();
  return std::sqrt(sq);
}

double clip_grad_norm(Params& grads, double max_norm) {
  const double norm = grad_norm(grads);
  if (!std::isfinite(norm)) fail(ErrorCode::kNonFiniteGradient, "gradient contains NaN or Inf");
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Mat* g : tensors(grads)) *g *= scale;
  }
  return norm;
}

Adam::Adam(const Params& shape, AdamConfig config) : config_(config), m_(shape), v_(shape) {
  m_.set_zero();
  v_.set_zero();
}

void Adam::step(Params& params, const Params& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  auto p = tensors(params);
  auto g = tensors(grads);
  auto m = tensors(m_);
  auto v = tensors(v_);
  if (p.size() != g.size() || p.size() != m.size()) fail(ErrorCode::kShapeMismatch, "optimizer state does not match model");
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k]->rows() != g[k]->rows() || p[k]->cols() != g[k]->cols())
      fail(ErrorCode::kShapeMismatch, "gradient tensor shape does not match parameter");
    m[k]->array() = config_.beta1 * m[k]->array() + (1.0 - config_.beta1) * g[k]->array();
    v[k]->array() = config_.beta2 * v[k]->array() + (1.0 - config_.beta2) * g[k]->array().square();
    p[k]->array() -= config_.lr * (m[k]->array() / c1) / ((v[k]->array() / c2).sqrt() + config_.eps);
  }
}

void Adam::restore(Params m, Params v, std::int64_t steps) {
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = steps;
}

}  // namespace mobileposer::nn
