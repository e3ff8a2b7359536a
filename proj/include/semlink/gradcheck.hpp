// Finite-difference gradient verification. Differences are evaluated in
// 64-bit; 32-bit backward passes are checked against their 64-bit mirror.
#pragma once

#include <functional>
#include <vector>

#include "semlink/tensor.hpp"

namespace semlink {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  bool pass(double tol) const { return max_rel_err < tol; }
};

// f must return a scalar tensor built from the handed-in inputs. Analytic
// gradients from one backward() run are compared against five-point central
// differences with the given step.
GradCheckReport grad_check(
    const std::function<Tensor<double>(std::vector<Tensor<double>>&)>& f,
    std::vector<Tensor<double>> inputs, double step = 1e-3);

// Max relative difference between two gradient vectors (e.g. an f32 backward
// against its f64 mirror). Denominator floored so near-zero entries are
// compared absolutely.
double grad_rel_diff(std::span<const float> got, std::span<const double> want,
                     double floor = 1e-4);

}  // namespace semlink
