#include "semlink/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace semlink {

GradCheckReport grad_check(
    const std::function<Tensor<double>(std::vector<Tensor<double>>&)>& f,
    std::vector<Tensor<double>> inputs, double step) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }

  Tensor<double> out = f(inputs);
  if (out.size() != 1) throw std::invalid_argument("grad_check: function output must be scalar");
  out.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs) {
    if (in.has_grad())
      analytic.emplace_back(in.grad().begin(), in.grad().end());
    else
      analytic.emplace_back(in.size(), 0.0);
  }

  const auto eval = [&]() {
    NoGradGuard guard;
    return f(inputs).item();
  };

  GradCheckReport report;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto data = inputs[t].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + 2.0 * step;
      const double fp2 = eval();
      data[i] = saved + step;
      const double fp1 = eval();
      data[i] = saved - step;
      const double fm1 = eval();
      data[i] = saved - 2.0 * step;
      const double fm2 = eval();
      data[i] = saved;
      // five-point central difference, O(step^4) truncation
      const double fd = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * step);
      const double g = analytic[t][i];
      const double abs_err = std::abs(g - fd);
      const double denom = std::max({std::abs(g), std::abs(fd), 1e-4});
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      report.max_rel_err = std::max(report.max_rel_err, abs_err / denom);
    }
  }
  return report;
}

double grad_rel_diff(std::span<const float> got, std::span<const double> want, double floor) {
  if (got.size() != want.size()) throw std::invalid_argument("grad_rel_diff: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double g = static_cast<double>(got[i]);
    const double w = want[i];
    const double denom = std::max({std::abs(g), std::abs(w), floor});
    worst = std::max(worst, std::abs(g - w) / denom);
  }
  return worst;
}

}  // namespace semlink
