#include "mobileposer/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace mobileposer::nn {

GradCheckResult grad_check(SeqModel& model, const LossFn& loss, const Seq& input, double step, double floor) {
  SeqModel::Cache cache;
  const Seq out = model.forward(input, cache);
  const LossResult base = loss(out);
  Params grads = Params::zeros(model.spec());
  model.backward(cache, base.grad, grads);

  std::vector<std::pair<std::string, Mat*>> analytic;
  grads.for_each([&](const std::string& name, Mat& m) { analytic.emplace_back(name, &m); });

  GradCheckResult result;
  std::size_t idx = 0;
  model.params().for_each([&](const std::string& name, Mat& w) {
    const Mat& g = *analytic[idx++].second;
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      const double orig = w.data()[k];
      w.data()[k] = orig + step;
      const double up = loss(model.forward(input)).value;
      w.data()[k] = orig - step;
      const double down = loss(model.forward(input)).value;
      w.data()[k] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = g.data()[k];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor);
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_tensor = name;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  });
  return result;
}

}  // namespace mobileposer::nn
