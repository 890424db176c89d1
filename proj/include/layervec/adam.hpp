#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace layervec {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam with a learning rate and box bounds per parameter.
struct AdamState {
  AdamHyper hyper;
  std::vector<double> lr;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  std::size_t skipped = 0;  // non-finite gradient entries seen so far

  std::size_t size() const { return lr.size(); }

  /// Appends a parameter group sharing one learning rate and bound.
  void add_group(std::size_t count, double learning_rate,
                 double lo = -std::numeric_limits<double>::infinity(),
                 double hi = std::numeric_limits<double>::infinity());
};

/// One update in place. Entries with a non-finite gradient are left
/// untouched (moments included) and counted in state.skipped. Returns the
/// number skipped in this call.
std::size_t adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

}  // namespace layervec
