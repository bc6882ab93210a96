#ifndef GMA_ADAMAX_HPP
#define GMA_ADAMAX_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gma/tensor.hpp"

namespace gma {

/// Adamax: the infinity-norm Adam variant with bias-corrected first moment.
/// One state object drives a whole parameter set; per-parameter buffers are
/// registered up front so the step counter stays shared.
template <class R = double>
struct AdamaxState {
  struct Slot {
    std::vector<R> m;  // first moment
    std::vector<R> u;  // infinity-norm accumulator, non-negative
  };

  R lr;
  R beta1 = R(0.9);
  R beta2 = R(0.999);
  R eps = R(1e-8);
  int64_t t = 0;
  std::vector<Slot> slots;

  explicit AdamaxState(R learning_rate) : lr(learning_rate) {
    if (!(lr > R(0))) throw std::invalid_argument("AdamaxState: lr <= 0");
  }

  size_t add_slot(size_t n) {
    slots.push_back({std::vector<R>(n, R(0)), std::vector<R>(n, R(0))});
    return slots.size() - 1;
  }
};

/// One optimizer step over a parameter list; grads[i] must match params[i]
/// element-for-element and slot i must have been registered with the same
/// size.  theta <- theta - lr/(1-beta1^t) * m/(u+eps).
template <class R>
void adamax_step(std::vector<Tensor<R>*> params,
                 const std::vector<const std::vector<R>*>& grads,
                 AdamaxState<R>& state) {
  if (!(state.lr > R(0))) throw std::invalid_argument("adamax_step: lr <= 0");
  if (params.size() != grads.size() || params.size() != state.slots.size())
    throw std::invalid_argument("adamax_step: params/grads/state disagree");
  state.t += 1;
  R correction = R(1) - static_cast<R>(std::pow(
                            static_cast<double>(state.beta1),
                            static_cast<double>(state.t)));
  R step = state.lr / correction;
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor<R>& theta = *params[p];
    const std::vector<R>& g = *grads[p];
    auto& slot = state.slots[p];
    if (g.size() != theta.size() || slot.m.size() != theta.size())
      throw std::invalid_argument("adamax_step: shape mismatch at slot " +
                                  std::to_string(p));
    for (size_t i = 0; i < g.size(); ++i) {
      slot.m[i] = state.beta1 * slot.m[i] + (R(1) - state.beta1) * g[i];
      slot.u[i] = std::max(state.beta2 * slot.u[i],
                           static_cast<R>(std::fabs(
                               static_cast<double>(g[i]))));
      theta.data[i] -= step * slot.m[i] / (slot.u[i] + state.eps);
    }
  }
}

}  // namespace gma

#endif  // GMA_ADAMAX_HPP
