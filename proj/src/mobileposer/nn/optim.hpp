#pragma once

#include <cstdint>
#include <vector>

#include "mobileposer/nn/seq_model.hpp"

namespace mobileposer::nn {

/// Global L2 norm over every gradient tensor.
double grad_norm(const Params& grads);

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping. Throws NonFiniteGradient on NaN/Inf.
double clip_grad_norm(Params& grads, double max_norm);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(const Params& shape, AdamConfig config);

  /// One bias-corrected update of `params` from `grads`.
  void step(Params& params, const Params& grads);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  Params& first_moment() { return m_; }
  Params& second_moment() { return v_; }
  const Params& first_moment() const { return m_; }
  const Params& second_moment() const { return v_; }
  void restore(Params m, Params v, std::int64_t steps);

 private:
  AdamConfig config_;
  Params m_;
  Params v_;
  std::int64_t t_ = 0;
};

}  // namespace mobileposer::nn
