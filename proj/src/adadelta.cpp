#include "setsum/adadelta.hpp"

#include <cmath>
#include <stdexcept>

#include "setsum/errors.hpp"

namespace setsum {

AdadeltaState::AdadeltaState(const ParameterStore& params, AdadeltaOptions options)
    : options_(options),
      mean_sq_grad_(zero_gradients(params)),
      mean_sq_update_(zero_gradients(params)) {
  if (!(options.rho > 0.0 && options.rho < 1.0)) {
    throw std::invalid_argument("adadelta rho must lie in (0,1)");
  }
  if (!(options.epsilon > 0.0)) throw std::invalid_argument("adadelta epsilon must be positive");
}

void adadelta_step(ParameterStore& params, const GradientMap& grads, AdadeltaState& state) {
  if (grads.size() != params.size() || state.mean_sq_grad_.size() != params.size()) {
    throw ShapeError("adadelta_step: parameter, gradient and state counts differ");
  }
  const double rho = state.options_.rho;
  const double eps = state.options_.epsilon;
  const double lr = state.options_.learning_rate;
  for (std::size_t slot = 0; slot < params.size(); ++slot) {
    Tensor& p = params.value(slot);
    const Tensor& g = grads[slot];
    Tensor& eg = state.mean_sq_grad_[slot];
    Tensor& edx = state.mean_sq_update_[slot];
    if (g.shape() != p.shape() || eg.shape() != p.shape()) {
      throw ShapeError("adadelta_step: shape mismatch for parameter " + params.name(slot));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      eg[i] = rho * eg[i] + (1.0 - rho) * g[i] * g[i];
      const double dx = -std::sqrt(edx[i] + eps) / std::sqrt(eg[i] + eps) * g[i];
      edx[i] = rho * edx[i] + (1.0 - rho) * dx * dx;
      p[i] += lr * dx;
    }
  }
}

}  // namespace setsum
