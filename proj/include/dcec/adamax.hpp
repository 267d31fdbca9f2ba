#ifndef DCEC_ADAMAX_HPP
#define DCEC_ADAMAX_HPP

#include <cmath>
#include <vector>

#include "dcec/tensor.hpp"

namespace dcec {

template <typename Scalar>
struct AdamaxConfig {
  Scalar lr = Scalar(0.001);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
};

// Per-parameter AdaMax moments; one shared step counter.
template <typename Scalar>
struct AdamaxState {
  AdamaxConfig<Scalar> config;
  long step = 0;
  std::vector<Tensor<Scalar>> m;  // first moment
  std::vector<Tensor<Scalar>> u;  // exponentially weighted infinity norm

  AdamaxState() = default;
  explicit AdamaxState(const std::vector<Tensor<Scalar>*>& params, AdamaxConfig<Scalar> cfg = {})
      : config(cfg) {
    m.reserve(params.size());
    u.reserve(params.size());
    for (const Tensor<Scalar>* p : params) {
      m.emplace_back(p->shape());
      u.emplace_back(p->shape());
    }
  }
};

// One AdaMax update across all parameters:
//   m <- b1*m + (1-b1)*g;  u <- max(b2*u, |g|);
//   theta <- theta - lr/(1-b1^t) * m / (u + eps).
// A zero gradient leaves its parameter bit-identical.
template <typename Scalar>
void adamax_step(const std::vector<Tensor<Scalar>*>& params,
                 const std::vector<const Tensor<Scalar>*>& grads, AdamaxState<Scalar>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adamax_step: parameter/gradient/state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape() || params[i]->shape() != state.m[i].shape())
      throw ShapeError("adamax_step: shape mismatch at parameter " + std::to_string(i));
    if (!grads[i]->all_finite())
      throw NumericError("adamax_step: non-finite gradient at parameter " + std::to_string(i));
  }

  ++state.step;
  const Scalar b1 = state.config.beta1;
  const Scalar b2 = state.config.beta2;
  const Scalar rate =
      state.config.lr / (Scalar(1) - Scalar(std::pow(double(b1), double(state.step))));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = grads[i]->vec().array();
    auto mi = state.m[i].vec().array();
    auto ui = state.u[i].vec().array();
    mi = b1 * mi + (Scalar(1) - b1) * g;
    ui = (b2 * ui).max(g.abs());
    params[i]->vec().array() -= rate * mi / (ui + state.config.epsilon);
  }
}

}  // namespace dcec

#endif  // DCEC_ADAMAX_HPP
