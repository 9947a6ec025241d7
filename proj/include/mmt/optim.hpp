#pragma once

#include "mmt/autodiff.hpp"

#include <cmath>
#include <vector>

namespace mmt {

// Adam with bias correction. Moment arrays are aligned index-for-index with
// the parameter list handed to init(); the step counter is shared.
template <class S>
struct AdamStateT {
  S lr = S(0.0004);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
  long step = 0;
  std::vector<EVec<S>> m;
  std::vector<EVec<S>> v;

  void init(const std::vector<TensorPtrT<S>>& params) {
    m.clear();
    v.clear();
    step = 0;
    for (const auto& p : params) {
      m.push_back(EVec<S>::Zero(p->numel()));
      v.push_back(EVec<S>::Zero(p->numel()));
    }
  }
};

// Scales all gradients uniformly so the global L2 norm of their concatenation
// is at most max_norm; returns the applied factor (1 when no clipping).
// Parameters without an accumulated gradient count as zero.
template <class S>
S clip_grad_norm(const std::vector<TensorPtrT<S>>& params, S max_norm) {
  S sq = S(0);
  for (const auto& p : params) {
    if (p->grad.size() > 0) sq += p->grad.squaredNorm();
  }
  const S norm = std::sqrt(sq);
  if (norm <= max_norm || norm == S(0)) return S(1);
  const S factor = max_norm / norm;
  for (const auto& p : params) {
    if (p->grad.size() > 0) p->grad *= factor;
  }
  return factor;
}

// One Adam update over the full parameter list. Parameters whose gradient was
// never touched this pass decay their moments and stay put once the moments
// are zero.
template <class S>
void adam_step(const std::vector<TensorPtrT<S>>& params, AdamStateT<S>& state) {
  if (params.size() != state.m.size()) {
    throw ContractError("adam_step: state tracks " + std::to_string(state.m.size()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  ++state.step;
  const S bc1 = S(1) - std::pow(state.beta1, S(state.step));
  const S bc2 = S(1) - std::pow(state.beta2, S(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    if (state.m[i].size() != p.numel()) {
      throw ContractError("adam_step: moment shape drift for parameter " + std::to_string(i));
    }
    if (p.grad.size() > 0) {
      state.m[i] = state.beta1 * state.m[i] + (S(1) - state.beta1) * p.grad;
      state.v[i] = state.beta2 * state.v[i] +
                   (S(1) - state.beta2) * p.grad.cwiseProduct(p.grad);
    } else {
      state.m[i] *= state.beta1;
      state.v[i] *= state.beta2;
    }
    p.value.array() -= state.lr * (state.m[i].array() / bc1) /
                       ((state.v[i].array() / bc2).sqrt() + state.eps);
  }
}

}  // namespace mmt
