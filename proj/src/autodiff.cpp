#include "diffetm/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "diffetm/errors.hpp"

namespace diffetm::grad {

// ---- ParamStore ------------------------------------------------------------

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  if (index_.contains(name)) throw DomainError("parameter '" + name + "' already exists");
  index_.emplace(name, params_.size());
  Tensor g = Tensor::zeros_like(init);
  params_.push_back(Parameter{name, std::move(init), std::move(g)});
  return params_.back().value;
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DomainError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

// ---- Tape ------------------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::push(Tensor value, std::vector<std::size_t> parents, BackwardFn fn) {
  debug_check_finite(value, "tape");
  Node node;
  node.value = std::move(value);
  if (record_) {
    node.requires_grad = std::any_of(parents.begin(), parents.end(),
                                     [&](std::size_t p) { return nodes_[p].requires_grad; });
    if (node.requires_grad) node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return push(std::move(value), {}, nullptr); }

Var Tape::param(ParamStore& store, const std::string& name) {
  const std::size_t idx = store.index_of(name);
  Node node;
  node.value = store.entries()[idx].value;
  node.requires_grad = record_;
  if (record_) {
    node.backward = [&store, idx](Tape& t, std::size_t self) {
      Tensor& dst = store.entries()[idx].grad;
      const Tensor& g = t.grad_at(self);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    };
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value)) {
    n.grad = Tensor::zeros_like(n.value);
  }
  return n.grad;
}

void Tape::backward(Var output) {
  if (output.tape_ != this) throw DomainError("backward: variable belongs to another tape");
  if (value(output).size() != 1) {
    throw NotScalar("backward: output has shape " + value(output).shape_str());
  }
  if (!record_) throw DomainError("backward: tape was built without gradient recording");
  if (consumed_) throw DomainError("backward: tape already differentiated");
  consumed_ = true;
  if (!nodes_[output.id_].requires_grad) return;

  grad_buffer(output.id_)[0] = 1.0;
  for (std::size_t i = output.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, i);
  }
}

// ---- primitives ------------------------------------------------------------

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw DomainError(std::string(op) + ": operands on different tapes");
  }
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch(std::string(op) + ": " + a.shape_str() + " vs " + b.shape_str());
  }
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

}  // namespace

Var affine(Var x, Var w, Var b) {
  Tape& t = same_tape(x, w, "affine");
  same_tape(x, b, "affine");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw ShapeMismatch("affine: X" + xv.shape_str() + " W" + wv.shape_str() + " b" +
                        bv.shape_str());
  }
  Tensor out;
  matmul(xv, wv, out);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  const std::size_t xi = x.id(), wi = w.id(), bi = b.id();
  return t.push(std::move(out), {xi, wi, bi}, [xi, wi, bi](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (tp.requires_grad_at(wi)) matmul_tn(tp.value_at(xi), g, tp.grad_buffer(wi), true);
    if (tp.requires_grad_at(xi)) matmul_nt(g, tp.value_at(wi), tp.grad_buffer(xi), true);
    if (tp.requires_grad_at(bi)) {
      Tensor& db = tp.grad_buffer(bi);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
      }
    }
  });
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  Tensor out;
  matmul(a.value(), b.value(), out);
  const std::size_t ai = a.id(), bi = b.id();
  return t.push(std::move(out), {ai, bi}, [ai, bi](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (tp.requires_grad_at(ai)) matmul_nt(g, tp.value_at(bi), tp.grad_buffer(ai), true);
    if (tp.requires_grad_at(bi)) matmul_tn(tp.value_at(ai), g, tp.grad_buffer(bi), true);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul_nt");
  Tensor out;
  matmul_nt(a.value(), b.value(), out, false);
  const std::size_t ai = a.id(), bi = b.id();
  return t.push(std::move(out), {ai, bi}, [ai, bi](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    // out = A B^T: dA = G B, dB = G^T A
    if (tp.requires_grad_at(ai)) {
      Tensor tmp;
      grad::matmul(g, tp.value_at(bi), tmp);
      Tensor& da = tp.grad_buffer(ai);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += tmp[i];
    }
    if (tp.requires_grad_at(bi)) matmul_tn(g, tp.value_at(ai), tp.grad_buffer(bi), true);
  });
}

Var relu(Var x) {
  Tape& t = *x.tape();
  Tensor out = map(x.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  const std::size_t xi = x.id();
  return t.push(std::move(out), {xi}, [xi](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& xv = tp.value_at(xi);
    Tensor& dx = tp.grad_buffer(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xv[i] > 0.0) dx[i] += g[i];
    }
  });
}

Var exp(Var x) {
  Tape& t = *x.tape();
  Tensor out = map(x.value(), [](double v) { return std::exp(v); });
  const std::size_t xi = x.id();
  return t.push(std::move(out), {xi}, [xi](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& y = tp.value_at(self);
    Tensor& dx = tp.grad_buffer(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * y[i];
  });
}

Var log(Var x, double floor) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  Tensor out = Tensor::zeros_like(xv);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    double v = xv[i];
    if (floor > 0.0) {
      v = std::max(v, floor);
    } else if (!(v > 0.0)) {
      throw DomainError("log: nonpositive entry " + std::to_string(v) + " at flat index " +
                        std::to_string(i));
    }
    out[i] = std::log(v);
  }
  const std::size_t xi = x.id();
  return t.push(std::move(out), {xi}, [xi, floor](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& xv = tp.value_at(xi);
    Tensor& dx = tp.grad_buffer(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xv[i] > floor) dx[i] += g[i] / xv[i];
    }
  });
}

Var weighted_log_sum(Var x, const Tensor& weights, double floor) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  if (!xv.same_shape(weights)) {
    throw ShapeMismatch("weighted_log_sum " + xv.shape_str() + " vs weights " +
                        weights.shape_str());
  }
  if (floor <= 0.0) {
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (!(xv[i] > 0.0)) {
        throw DomainError("log: nonpositive entry " + std::to_string(xv[i]) +
                          " at flat index " + std::to_string(i));
      }
    }
  }
  std::vector<std::size_t> nz;
  std::vector<double> w;
  // Wide accumulator: near-equal terms otherwise round in the same direction.
  long double s = 0.0L;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] == 0.0) continue;
    nz.push_back(i);
    w.push_back(weights[i]);
    s += weights[i] * std::log(floor > 0.0 ? std::max(xv[i], floor) : xv[i]);
  }
  const std::size_t xi = x.id();
  return t.push(Tensor(1, 1, static_cast<double>(s)), {xi},
                [xi, floor, nz = std::move(nz), w = std::move(w)](Tape& tp, std::size_t self) {
                  const double g = tp.grad_at(self)[0];
                  const Tensor& xv = tp.value_at(xi);
                  Tensor& dx = tp.grad_buffer(xi);
                  for (std::size_t k = 0; k < nz.size(); ++k) {
                    const std::size_t i = nz[k];
                    if (xv[i] > floor) dx[i] += g * w[k] / xv[i];
                  }
                });
}

Var softmax_rows(Var x) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  Tensor out = Tensor::zeros_like(xv);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    auto o = out.row(r);
    if (in.empty()) continue;
    const double m = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - m);
      s += o[c];
    }
    const double inv = 1.0 / s;
    for (double& v : o) v *= inv;
  }
  const std::size_t xi = x.id();
  return t.push(std::move(out), {xi}, [xi](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& y = tp.value_at(self);
    Tensor& dx = tp.grad_buffer(xi);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      auto dr = dx.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += gr[c] * yr[c];
      for (std::size_t c = 0; c < yr.size(); ++c) dr[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = same_tape(a, b, "hadamard");
  require_same_shape(a.value(), b.value(), "hadamard");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out = Tensor::zeros_like(av);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return t.push(std::move(out), {ai, bi}, [ai, bi](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    // Read both values before touching either buffer: a and b may alias.
    const Tensor& av = tp.value_at(ai);
    const Tensor& bv = tp.value_at(bi);
    if (tp.requires_grad_at(ai)) {
      Tensor& da = tp.grad_buffer(ai);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (tp.requires_grad_at(bi)) {
      Tensor& db = tp.grad_buffer(bi);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

namespace {

Var add_signed(Var a, Var b, double sign, const char* op) {
  Tape& t = same_tape(a, b, op);
  require_same_shape(a.value(), b.value(), op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out = Tensor::zeros_like(av);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + sign * bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return t.push(std::move(out), {ai, bi}, [ai, bi, sign](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (tp.requires_grad_at(ai)) {
      Tensor& da = tp.grad_buffer(ai);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i];
    }
    if (tp.requires_grad_at(bi)) {
      Tensor& db = tp.grad_buffer(bi);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += sign * g[i];
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return add_signed(a, b, 1.0, "add"); }
Var sub(Var a, Var b) { return add_signed(a, b, -1.0, "sub"); }

Var scale(Var x, double c) {
  Tape& t = *x.tape();
  Tensor out = map(x.value(), [c](double v) { return c * v; });
  const std::size_t xi = x.id();
  return t.push(std::move(out), {xi}, [xi, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    Tensor& dx = tp.grad_buffer(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += c * g[i];
  });
}

Var add_scalar(Var x, double c) {
  Tape& t = *x.tape();
  Tensor out = map(x.value(), [c](double v) { return v + c; });
  const std::size_t xi = x.id();
  return t.push(std::move(out), {xi}, [xi](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    Tensor& dx = tp.grad_buffer(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
  });
}

Var square(Var x) {
  Tape& t = *x.tape();
  Tensor out = map(x.value(), [](double v) { return v * v; });
  const std::size_t xi = x.id();
  return t.push(std::move(out), {xi}, [xi](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& xv = tp.value_at(xi);
    Tensor& dx = tp.grad_buffer(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 2.0 * xv[i] * g[i];
  });
}

Var sum_all(Var x) {
  Tape& t = *x.tape();
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t xi = x.id();
  return t.push(Tensor(1, 1, s), {xi}, [xi](Tape& tp, std::size_t self) {
    const double g = tp.grad_at(self)[0];
    Tensor& dx = tp.grad_buffer(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
  });
}

}  // namespace diffetm::grad
