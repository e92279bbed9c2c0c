#pragma once

#include <cstdint>
#include <vector>

#include "diffetm/autodiff.hpp"

namespace diffetm::grad {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moments are laid out parallel to a ParamStore's
/// entries; step() zeroes the gradients it consumed.
class Adam {
 public:
  Adam(const ParamStore& params, AdamOptions opts);

  void step(ParamStore& params);

  std::uint64_t steps() const { return t_; }
  const AdamOptions& options() const { return opts_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamOptions opts_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

/// Global L2 norm of all gradient buffers.
double gradient_norm(const ParamStore& params);

/// Rescales all gradients so their global norm is at most max_norm.
void clip_gradient_norm(ParamStore& params, double max_norm);

}  // namespace diffetm::grad
