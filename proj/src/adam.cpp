#include "layervec/adam.hpp"

#include <algorithm>
#include <cmath>

#include "layervec/error.hpp"

namespace layervec {

void AdamState::add_group(std::size_t count, double learning_rate, double lo, double hi) {
  lr.insert(lr.end(), count, learning_rate);
  lower.insert(lower.end(), count, lo);
  upper.insert(upper.end(), count, hi);
  m.insert(m.end(), count, 0.0);
  v.insert(v.end(), count, 0.0);
}

std::size_t adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != state.size() || grads.size() != state.size())
    throw Error(ErrorKind::shape, "adam_step: parameter, gradient and state sizes differ");
  ++state.step;
  const auto& h = state.hyper;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    if (!std::isfinite(g)) {
      ++skipped;
      continue;
    }
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= state.lr[i] * mhat / (std::sqrt(vhat) + h.eps);
    params[i] = std::clamp(params[i], state.lower[i], state.upper[i]);
  }
  state.skipped += skipped;
  return skipped;
}

}  // namespace layervec
