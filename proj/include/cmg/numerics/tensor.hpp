#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>

namespace cmg::numerics {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Boolean masks: true marks a live (non-padding) entry.
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A dense row-major value with an accumulated gradient of the same shape.
// Vectors are stored as 1 x n rows.
template <typename Scalar>
struct Tensor {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  bool requires_grad = true;

  Tensor() = default;
  explicit Tensor(Matrix<Scalar> v, bool trainable = true)
      : value(std::move(v)),
        grad(Matrix<Scalar>::Zero(value.rows(), value.cols())),
        requires_grad(trainable) {}

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }
  Index size() const { return value.size(); }

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// A trainable tensor with a stable name, as stored in checkpoints.
template <typename Scalar>
struct NamedTensor {
  std::string name;
  Tensor<Scalar> tensor;
};

}  // namespace cmg::numerics
