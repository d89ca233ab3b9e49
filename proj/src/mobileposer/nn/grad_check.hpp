#pragma once

#include <functional>
#include <string>

#include "mobileposer/nn/losses.hpp"
#include "mobileposer/nn/seq_model.hpp"

namespace mobileposer::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

using LossFn = std::function<LossResult(const Seq& output)>;

/// Compares backward() against central differences of `loss` for every
/// parameter. Relative error is |a - n| / max(|a| + |n|, floor).
GradCheckResult grad_check(SeqModel& model, const LossFn& loss, const Seq& input, double step = 1e-5,
                           double floor = 1e-8);

}  // namespace mobileposer::nn
