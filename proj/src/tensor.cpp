#include "diffetm/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "diffetm/errors.hpp"

namespace diffetm::grad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

ConstMap view(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

Map view(Tensor& t) {
  return Map(t.data().data(), static_cast<Eigen::Index>(t.rows()),
             static_cast<Eigen::Index>(t.cols()));
}

void ensure_shape(Tensor& out, std::size_t rows, std::size_t cols, bool accumulate,
                  const char* op) {
  if (accumulate) {
    if (out.rows() != rows || out.cols() != cols) {
      throw ShapeMismatch(std::string(op) + ": accumulator has shape " + out.shape_str());
    }
  } else if (out.rows() != rows || out.cols() != cols) {
    out = Tensor(rows, cols);
  }
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeMismatch("tensor data length " + std::to_string(data_.size()) +
                        " does not match " + shape_str());
  }
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeMismatch("ragged tensor literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.cols() != b.rows()) {
    throw ShapeMismatch("matmul " + a.shape_str() + " * " + b.shape_str());
  }
  ensure_shape(out, a.rows(), b.cols(), false, "matmul");
  view(out).noalias() = view(a) * view(b);
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  if (a.rows() != b.rows()) {
    throw ShapeMismatch("matmul_tn " + a.shape_str() + "^T * " + b.shape_str());
  }
  ensure_shape(out, a.cols(), b.cols(), accumulate, "matmul_tn");
  if (accumulate) {
    view(out).noalias() += view(a).transpose() * view(b);
  } else {
    view(out).noalias() = view(a).transpose() * view(b);
  }
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  if (a.cols() != b.cols()) {
    throw ShapeMismatch("matmul_nt " + a.shape_str() + " * " + b.shape_str() + "^T");
  }
  ensure_shape(out, a.rows(), b.rows(), accumulate, "matmul_nt");
  if (accumulate) {
    view(out).noalias() += view(a) * view(b).transpose();
  } else {
    view(out).noalias() = view(a) * view(b).transpose();
  }
}

void debug_check_finite([[maybe_unused]] const Tensor& t, [[maybe_unused]] const char* where) {
#ifndef NDEBUG
  if (!t.all_finite()) throw DomainError(std::string(where) + ": non-finite entry");
#endif
}

}  // namespace diffetm::grad
