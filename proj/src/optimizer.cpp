#include "uasabi/error.hpp"
#include "uasabi/neural.hpp"

#include <cmath>
#include <numbers>

namespace uasabi {

void adam_step(AdamState& state, ParamsRef params, const Eigen::VectorXd& grad, double lr) {
  if (state.m.size() != params.size()) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
    state.step = 0;
  }
  if (grad.size() != params.size()) throw DimensionMismatch("adam: gradient size mismatch");
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + state.eps);
}

double cosine_lr(long step, long total_steps, double lr0, double alpha) {
  if (total_steps <= 0) throw InvalidParameter("cosine_lr: total steps must be positive");
  if (step < 0) step = 0;
  if (step >= total_steps) return lr0 * alpha;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * alpha + 0.5 * lr0 * (1.0 - alpha) * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace uasabi
