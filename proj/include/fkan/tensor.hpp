#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fkan/error.hpp"

namespace fkan {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape);

/// Dense row-major N-dimensional array backed by an Eigen column vector.
template <typename Scalar>
class Tensor {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(Storage::Zero(numel(shape_))) {}

  Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape), Storage(Eigen::Map<const Storage>(values.begin(),
                                                                   static_cast<Index>(values.size())))) {}

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor constant(Shape shape, Scalar value) {
    const Index n = numel(shape);
    return Tensor(std::move(shape), Storage::Constant(n, value));
  }
  static Tensor scalar(Scalar value) { return Tensor(Shape{}, Storage::Constant(1, value)); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0 && shape_.empty(); }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> span() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> span() const { return {data_.data(), static_cast<std::size_t>(data_.size())}; }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  /// Scalar value of a single-element tensor.
  Scalar item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
    return data_[0];
  }

  template <typename... Ix>
  Scalar& at(Ix... ix) {
    return data_[offset({static_cast<Index>(ix)...})];
  }
  template <typename... Ix>
  Scalar at(Ix... ix) const {
    return data_[offset({static_cast<Index>(ix)...})];
  }

  /// View of a rank-2 tensor as a row-major matrix.
  Eigen::Map<RowMajorMatrix> matrix() {
    require_rank(2);
    return {data_.data(), shape_[0], shape_[1]};
  }
  Eigen::Map<const RowMajorMatrix> matrix() const {
    require_rank(2);
    return {data_.data(), shape_[0], shape_[1]};
  }

  Tensor reshaped(Shape shape) const {
    if (numel(shape) != size()) {
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.isFinite().all(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  Index offset(std::initializer_list<Index> ix) const {
    if (static_cast<Index>(ix.size()) != rank()) {
      throw ShapeError("index rank mismatch for shape " + to_string(shape_));
    }
    Index off = 0;
    std::size_t axis = 0;
    for (Index i : ix) off = off * shape_[axis++] + i;
    return off;
  }

  void require_rank(Index r) const {
    if (rank() != r) {
      throw ShapeError("expected rank " + std::to_string(r) + ", got shape " + to_string(shape_));
    }
  }

  Shape shape_;
  Storage data_;
};

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

}  // namespace fkan
