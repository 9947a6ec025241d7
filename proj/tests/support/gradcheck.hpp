#pragma once

// Test-only finite-difference oracle. Central differences at 64-bit with step
// 1e-5; stays independent of the backward pass it checks.

#include "mmt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace testsupport {

using Tape = mmt::TapeT<double>;
using TensorPtr = mmt::TensorPtrT<double>;

struct GradCheckResult {
  double max_rel = 0.0;  // over entries whose magnitude clears rel_floor
  double max_abs = 0.0;  // over connected entries below rel_floor
  long checked = 0;
};

inline double rel_err(double a, double b) {
  const double m = std::max(std::abs(a), std::abs(b));
  return m == 0.0 ? 0.0 : std::abs(a - b) / m;
}

/// forward_loss must be a pure function of the current parameter values: it
// takes a fresh tape and returns the scalar loss tensor. The difference
// quotient carries roundoff near 1e-11 for unit-scale losses and truncation
// proportional to entry magnitude, so each entry is scored on exactly one
// criterion: relative error when its magnitude clears rel_floor, absolute
// error otherwise.
template <class F>
GradCheckResult gradcheck(F&& forward_loss, const std::vector<TensorPtr>& params,
                          double h = 1e-5, double rel_floor = 1e-4) {
  for (const auto& p : params) p->zero_grad();
  Tape tape;
  auto loss = forward_loss(tape);
  tape.backward(loss);
  std::vector<Eigen::VectorXd> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    analytic.push_back(p->grad.size() > 0 ? Eigen::VectorXd(p->grad)
                                          : Eigen::VectorXd(Eigen::VectorXd::Zero(p->numel())));
  }

  GradCheckResult r;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    for (Eigen::Index i = 0; i < p->numel(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      Tape t_up;
      const double up = forward_loss(t_up)->scalar();
      p->value[i] = orig - h;
      Tape t_dn;
      const double dn = forward_loss(t_dn)->scalar();
      p->value[i] = orig;
      const double fd = (up - dn) / (2.0 * h);
      const double a = analytic[pi][i];
      const double mag = std::max(std::abs(a), std::abs(fd));
      if (mag == 0.0) continue;
      if (mag >= rel_floor) {
        r.max_rel = std::max(r.max_rel, rel_err(a, fd));
      } else {
        r.max_abs = std::max(r.max_abs, std::abs(a - fd));
      }
      ++r.checked;
    }
  }
  return r;
}

}  // namespace testsupport
