#include "diffetm/optim.hpp"

#include <cmath>

#include "diffetm/errors.hpp"

namespace diffetm::grad {

Adam::Adam(const ParamStore& params, AdamOptions opts) : opts_(opts) {
  if (!(opts_.lr >= 0.0)) throw InvalidConfig("adam: learning rate must be >= 0");
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params.entries()) {
    m_.push_back(Tensor::zeros_like(p.value));
    v_.push_back(Tensor::zeros_like(p.value));
  }
}

void Adam::step(ParamStore& params) {
  if (params.size() != m_.size()) throw ShapeMismatch("adam: parameter set changed");
  ++t_;
  const double b1 = opts_.beta1, b2 = opts_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  auto& entries = params.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor& w = entries[k].value;
    Tensor& g = entries[k].grad;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    if (!w.same_shape(m)) throw ShapeMismatch("adam: shape of '" + entries[k].name + "' changed");
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= opts_.lr * m_hat / (std::sqrt(v_hat) + opts_.eps);
    }
    g.fill(0.0);
  }
}

double gradient_norm(const ParamStore& params) {
  double s = 0.0;
  for (const auto& p : params.entries()) {
    for (double g : p.grad.data()) s += g * g;
  }
  return std::sqrt(s);
}

void clip_gradient_norm(ParamStore& params, double max_norm) {
  const double norm = gradient_norm(params);
  if (!(norm > max_norm) || max_norm <= 0.0) return;
  const double f = max_norm / norm;
  for (auto& p : params.entries()) {
    for (double& g : p.grad.data()) g *= f;
  }
}

}  // namespace diffetm::grad
