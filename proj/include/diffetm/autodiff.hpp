#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "diffetm/tensor.hpp"

namespace diffetm::grad {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Named trainable arrays, each with a gradient buffer of the same shape.
/// Iteration order is insertion order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init);

  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index_of(const std::string& name) const;

  Tensor& value(const std::string& name) { return params_[index_of(name)].value; }
  const Tensor& value(const std::string& name) const { return params_[index_of(name)].value; }
  Tensor& grad(const std::string& name) { return params_[index_of(name)].grad; }
  const Tensor& grad(const std::string& name) const { return params_[index_of(name)].grad; }

  std::vector<Parameter>& entries() { return params_; }
  const std::vector<Parameter>& entries() const { return params_; }
  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; it and references to its value
/// stay valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run computation trace. Build a fresh tape for every evaluation,
/// call backward() once on a scalar output, and gradients are accumulated
/// into the ParamStore buffers of every parameter the output depends on.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(ParamStore& store, const std::string& name);

  void backward(Var output);

  const Tensor& value(Var v) const { return nodes_.at(v.id_).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id_).requires_grad; }
  bool recording() const { return record_; }

  // Used by op implementations.
  Var push(Tensor value, std::vector<std::size_t> parents, BackwardFn fn);
  const Tensor& value_at(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad_at(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad_at(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of node `id`, allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;  // stable addresses: values outlive later pushes
  bool record_;
  bool consumed_ = false;
};

// Forward primitives. Each records its own backward rule.

/// x[n x d] * w[d x h] + b[1 x h], bias broadcast over rows.
Var affine(Var x, Var w, Var b);
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var relu(Var x);
Var exp(Var x);
/// Elementwise log. With floor > 0 inputs are clamped to floor (and the
/// clamped entries pass no gradient); with floor == 0 a nonpositive entry is a
/// DomainError.
Var log(Var x, double floor = 0.0);
/// 1x1 Σ_i w_i log x_i over the nonzero weights, with the same floor rule as
/// log(). The weights are constants.
Var weighted_log_sum(Var x, const Tensor& weights, double floor = 0.0);
/// Row-wise softmax with max subtraction.
Var softmax_rows(Var x);
Var hadamard(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var square(Var x);
/// 1x1 sum of all entries.
Var sum_all(Var x);

}  // namespace diffetm::grad
