#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fusionet {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised when operand extents disagree. The message names every offending shape.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an input lies outside an operation's domain (e.g. log of a non-positive value).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

inline Index num_elements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

/// Dense row-major tensor.
///
/// Storage is an Eigen matrix whose column count is the innermost extent and
/// whose row count is the product of the outer extents, so a [H, W, C] image is
/// held as an (H*W) x C matrix and a [1, d] row vector as a 1 x d matrix. The
/// gradient buffer has the same layout and is allocated on first use.
template <typename Scalar>
class Tensor {
 public:
  using Mat = Matrix<Scalar>;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : shape_(std::move(shape)), requires_grad_(requires_grad) {
    validate_shape();
    data_ = Mat::Zero(outer(), inner());
  }

  Tensor(Shape shape, Mat data, bool requires_grad = false)
      : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad) {
    validate_shape();
    if (data_.rows() != outer() || data_.cols() != inner()) {
      throw DimensionError("tensor storage " + std::to_string(data_.rows()) + "x" +
                           std::to_string(data_.cols()) + " does not match shape " +
                           to_string(shape_));
    }
  }

  static Tensor from_matrix(Mat m, bool requires_grad = false) {
    Shape shape{m.rows(), m.cols()};
    return Tensor(std::move(shape), std::move(m), requires_grad);
  }

  const Shape& shape() const { return shape_; }
  Index size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  Index rows() const { return data_.rows(); }
  Index cols() const { return data_.cols(); }

  Mat& data() { return data_; }
  const Mat& data() const { return data_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return grad_.size() == data_.size() && grad_.size() > 0; }

  Mat& grad() {
    if (!has_grad()) grad_ = Mat::Zero(data_.rows(), data_.cols());
    return grad_;
  }
  const Mat& grad() const { return grad_; }

  void zero_grad() {
    if (has_grad()) grad_.setZero();
  }
  void release_grad() { grad_.resize(0, 0); }

  bool all_finite() const { return data_.allFinite(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>(), requires_grad_);
  }

 private:
  Index inner() const { return shape_.empty() ? 1 : shape_.back(); }
  Index outer() const { return shape_.empty() ? 1 : num_elements(shape_) / shape_.back(); }

  void validate_shape() const {
    for (Index extent : shape_) {
      if (extent <= 0) throw DimensionError("non-positive extent in shape " + to_string(shape_));
    }
  }

  Shape shape_{1};
  Mat data_ = Mat::Zero(1, 1);
  Mat grad_;
  bool requires_grad_ = false;
};

}  // namespace fusionet
