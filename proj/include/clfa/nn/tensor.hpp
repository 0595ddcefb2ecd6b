#pragma once
// tensor.hpp - dense row-major double tensors with Eigen matrix views.
//
// Shapes are small (rank <= 4). Feature batches are [N, D]; image batches
// are NHWC so convolution lowers to one GEMM per layer without layout
// permutes.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <numeric>
#include <vector>

#include "clfa/common.hpp"

namespace clfa::nn {

using Scalar = double;
using EMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMatMap = Eigen::Map<EMat>;
using EMatCMap = Eigen::Map<const EMat>;
using EVecMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
using EVecCMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (int d : shape_) {
      require_arg(d > 0, "tensor dims must be positive");
      n *= static_cast<std::size_t>(d);
    }
    data_.assign(n, Scalar(0));
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, Scalar v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static Tensor scalar(Scalar v) { return full({1}, v); }

  static Tensor from(std::vector<int> shape, std::vector<Scalar> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    std::size_t n = 1;
    for (int d : t.shape_) n *= static_cast<std::size_t>(d);
    require_arg(n == values.size(), "tensor shape/values mismatch");
    t.data_ = std::move(values);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  // [N, D] helpers; a rank-1 tensor reads as a single row
  int rows() const { return rank() >= 2 ? dim(0) : 1; }
  int cols() const {
    if (rank() == 0) return 0;
    int c = 1;
    for (int i = rank() >= 2 ? 1 : 0; i < rank(); ++i) c *= dim(i);
    return c;
  }

  EMatMap mat() { return EMatMap(data(), rows(), cols()); }
  EMatCMap mat() const { return EMatCMap(data(), rows(), cols()); }
  EMatMap mat_as(int r, int c) {
    require_arg(static_cast<std::size_t>(r) * c == numel(), "bad matrix view");
    return EMatMap(data(), r, c);
  }
  EMatCMap mat_as(int r, int c) const {
    require_arg(static_cast<std::size_t>(r) * c == numel(), "bad matrix view");
    return EMatCMap(data(), r, c);
  }
  EVecMap vec() { return EVecMap(data(), static_cast<Eigen::Index>(numel())); }
  EVecCMap vec() const { return EVecCMap(data(), static_cast<Eigen::Index>(numel())); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (Scalar v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  void add_(const Tensor& o) {
    require_arg(same_shape(o), "add_: shape mismatch");
    vec() += o.vec();
  }

 private:
  std::vector<int> shape_;
  std::vector<Scalar> data_;
};

// A named learnable tensor. Gradients accumulate here after Tape::backward.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor::zeros(value.shape());
  }
  void zero_grad() { grad.fill(0); }
  std::size_t numel() const { return value.numel(); }
};

}  // namespace clfa::nn
