#pragma once

#include "setsum/graph.hpp"

namespace setsum {

struct AdadeltaOptions {
  double rho = 0.95;
  double epsilon = 1e-6;
  // Multiplier on the Adadelta step; 1.0 is the plain method.
  double learning_rate = 1.0;
};

// Running averages E[g^2] and E[dx^2], one tensor per parameter.
class AdadeltaState {
 public:
  AdadeltaState(const ParameterStore& params, AdadeltaOptions options = {});

  const AdadeltaOptions& options() const noexcept { return options_; }
  const GradientMap& mean_square_gradient() const noexcept { return mean_sq_grad_; }
  const GradientMap& mean_square_update() const noexcept { return mean_sq_update_; }

 private:
  friend void adadelta_step(ParameterStore&, const GradientMap&, AdadeltaState&);

  AdadeltaOptions options_;
  GradientMap mean_sq_grad_;
  GradientMap mean_sq_update_;
};

//   E[g²]  <- rho E[g²] + (1-rho) g²
//   dx     = -sqrt(E[dx²] + eps) / sqrt(E[g²] + eps) * g
//   E[dx²] <- rho E[dx²] + (1-rho) dx²
//   param  += learning_rate * dx
void adadelta_step(ParameterStore& params, const GradientMap& grads, AdadeltaState& state);

}  // namespace setsum
