#ifndef DCEC_TENSOR_HPP
#define DCEC_TENSOR_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dcec {

using Index = Eigen::Index;

// Operand shapes violate an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced or received non-finite values, or diverged.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatrixXfRM = MatrixRM<float>;
using MatrixXdRM = MatrixRM<double>;

inline std::string shape_string(const std::vector<Index>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline Index shape_numel(const std::vector<Index>& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

// Dense n-dimensional array, row-major (last extent fastest), backed by an
// Eigen vector so ops can expose flat or matrix views without copying.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    check_shape();
    storage_ = VectorX<Scalar>::Zero(shape_numel(shape_));
  }

  Tensor(std::vector<Index> shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape), std::vector<Scalar>(values)) {}

  Tensor(std::vector<Index> shape, const std::vector<Scalar>& values) : shape_(std::move(shape)) {
    check_shape();
    if (static_cast<Index>(values.size()) != shape_numel(shape_))
      throw ShapeError("tensor " + shape_string(shape_) + " expects " +
                       std::to_string(shape_numel(shape_)) + " values, got " +
                       std::to_string(values.size()));
    storage_ = Eigen::Map<const VectorX<Scalar>>(values.data(), values.size());
  }

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Index size() const { return storage_.size(); }
  bool empty() const { return storage_.size() == 0; }

  Scalar* data() { return storage_.data(); }
  const Scalar* data() const { return storage_.data(); }

  Scalar& operator[](Index i) { return storage_[i]; }
  Scalar operator[](Index i) const { return storage_[i]; }

  // Multi-index access; mainly for tests and small fixtures.
  Scalar& at(std::initializer_list<Index> idx) { return storage_[flat_index(idx)]; }
  Scalar at(std::initializer_list<Index> idx) const { return storage_[flat_index(idx)]; }

  // Flat view over all elements.
  Eigen::Map<VectorX<Scalar>> vec() { return {storage_.data(), storage_.size()}; }
  Eigen::Map<const VectorX<Scalar>> vec() const { return {storage_.data(), storage_.size()}; }

  // 2-D view with the requested factorisation of the element count.
  Eigen::Map<MatrixRM<Scalar>> matrix(Index rows, Index cols) {
    check_matrix_view(rows, cols);
    return {storage_.data(), rows, cols};
  }
  Eigen::Map<const MatrixRM<Scalar>> matrix(Index rows, Index cols) const {
    check_matrix_view(rows, cols);
    return {storage_.data(), rows, cols};
  }

  // View of a rank-2 tensor with its own extents.
  Eigen::Map<MatrixRM<Scalar>> matrix() {
    check_rank2();
    return {storage_.data(), shape_[0], shape_[1]};
  }
  Eigen::Map<const MatrixRM<Scalar>> matrix() const {
    check_rank2();
    return {storage_.data(), shape_[0], shape_[1]};
  }

  void set_zero() { storage_.setZero(); }
  void fill(Scalar v) { storage_.setConstant(v); }

  bool all_finite() const { return storage_.allFinite(); }

  // Same data, new extents; element count must be preserved.
  Tensor reshaped(std::vector<Index> shape) const {
    if (shape_numel(shape) != size())
      throw ShapeError("reshape " + shape_string(shape_) + " -> " + shape_string(shape) +
                       " changes element count");
    Tensor out;
    out.shape_ = std::move(shape);
    out.storage_ = storage_;
    out.check_shape();
    return out;
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape_ = shape_;
    out.storage_ = storage_.template cast<T>();
    return out;
  }

 private:
  template <typename T>
  friend class Tensor;

  void check_shape() const {
    for (Index e : shape_)
      if (e < 1) throw ShapeError("tensor extents must be >= 1, got " + shape_string(shape_));
  }
  void check_rank2() const {
    if (shape_.size() != 2)
      throw ShapeError("expected rank-2 tensor, got " + shape_string(shape_));
  }
  void check_matrix_view(Index rows, Index cols) const {
    if (rows < 0 || cols < 0 || rows * cols != size())
      throw ShapeError("cannot view " + shape_string(shape_) + " as " + std::to_string(rows) +
                       "x" + std::to_string(cols) + " matrix");
  }
  Index flat_index(std::initializer_list<Index> idx) const {
    if (static_cast<Index>(idx.size()) != rank())
      throw ShapeError("index rank mismatch for " + shape_string(shape_));
    Index flat = 0;
    Index axis = 0;
    for (Index i : idx) {
      if (i < 0 || i >= shape_[static_cast<std::size_t>(axis)])
        throw ShapeError("index out of bounds for " + shape_string(shape_));
      flat = flat * shape_[static_cast<std::size_t>(axis)] + i;
      ++axis;
    }
    return flat;
  }

  std::vector<Index> shape_;
  VectorX<Scalar> storage_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Copies the selected rows of a [n, ...] tensor into a [idx.size(), ...] batch.
template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& src, const std::vector<Index>& idx) {
  if (src.rank() < 1) throw ShapeError("gather_rows needs rank >= 1");
  const Index n = src.dim(0);
  const Index row = src.size() / n;
  std::vector<Index> shape = src.shape();
  shape[0] = static_cast<Index>(idx.size());
  Tensor<Scalar> out(shape);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Index i = idx[r];
    if (i < 0 || i >= n) throw ShapeError("gather_rows index out of range");
    std::copy(src.data() + i * row, src.data() + (i + 1) * row,
              out.data() + static_cast<Index>(r) * row);
  }
  return out;
}

}  // namespace dcec

#endif  // DCEC_TENSOR_HPP
