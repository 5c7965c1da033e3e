#pragma once

// Central finite-difference oracle for gradient checks. The loss closure is
// re-invoked after every coordinate nudge, so the computation graph is
// rebuilt from the perturbed leaves each time (define-by-run). Checks run
// on double tensors: a 64-bit replay of the same op sequence keeps the
// difference quotient well inside the 1e-3 relative budget at eps = 1e-3.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "bundleforge/tensor.hpp"

namespace testsupport {

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Relative error with an absolute floor: coordinates where both gradients
// are below 1e-6 in magnitude count as exact agreement.
inline double rel_error(double analytic, double fd) {
  const double mag = std::max(std::abs(analytic), std::abs(fd));
  if (mag < 1e-6) return 0.0;
  return std::abs(analytic - fd) / mag;
}

inline FdReport check_gradients(
    std::vector<bundleforge::num::Tensor<double>> leaves,
    const std::function<bundleforge::num::Tensor<double>()>& loss_fn,
    double eps = 1e-3) {
  using bundleforge::num::backward;
  for (auto& l : leaves) l.zero_grad();
  auto loss = loss_fn();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto& l : leaves)
    analytic.push_back(l.has_grad() ? l.grad() : std::vector<double>(l.size(), 0.0));

  FdReport rep;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].raw_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + eps;
      const double lp = loss_fn().item();
      vals[i] = orig - eps;
      const double lm = loss_fn().item();
      vals[i] = orig;
      const double fd = (lp - lm) / (2.0 * eps);
      rep.max_rel_error = std::max(rep.max_rel_error, rel_error(analytic[li][i], fd));
      ++rep.checked;
    }
  }
  return rep;
}

}  // namespace testsupport
