#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "diffetm/autodiff.hpp"

namespace diffetm::grad {

/// Builds a scalar loss on the given tape from the store's current values.
/// Must be deterministic: any noise has to be re-drawn from a fixed seed.
using LossBuilder = std::function<Var(Tape&, ParamStore&)>;

struct FiniteDiffOptions {
  double step = 1e-5;
  /// Coordinates checked per parameter; 0 checks every coordinate.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct FiniteDiffResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

/// Compares the tape gradient of `loss` with respect to parameter `name`
/// against central differences. Relative error per coordinate is
/// |a - n| / max(1e-8, |a| + |n|); the maximum is returned. The store's
/// values are restored and its gradients left zeroed.
FiniteDiffResult finite_diff_check(ParamStore& store, const std::string& name,
                                   const LossBuilder& loss, const FiniteDiffOptions& opts = {});

/// Evaluates the loss without recording gradients.
double evaluate_loss(ParamStore& store, const LossBuilder& loss);

}  // namespace diffetm::grad
