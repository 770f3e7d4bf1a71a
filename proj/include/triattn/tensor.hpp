#pragma once

#include <string>
#include <type_traits>
#include <utility>

#include "triattn/common.hpp"

namespace triattn {

// Dense order-3 tensor with row-major storage: entry (i, j, k) of a
// d1 x d2 x d3 tensor lives at flat offset (i * d2 + j) * d3 + k.
// Mode-3 fibers (i, j, :) are therefore contiguous, which makes the
// mode-3 matricization a zero-copy reinterpretation of the buffer.
template <typename Scalar>
class Tensor3 {
 public:
  Tensor3() = default;

  Tensor3(Index d1, Index d2, Index d3)
      : d1_(d1), d2_(d2), d3_(d3), data_(VectorX<Scalar>::Zero(d1 * d2 * d3)) {
    if (d1 < 0 || d2 < 0 || d3 < 0) {
      throw ShapeError("Tensor3: negative dimension");
    }
  }

  static Tensor3 Constant(Index d1, Index d2, Index d3, Scalar value) {
    Tensor3 t(d1, d2, d3);
    t.data_.setConstant(value);
    return t;
  }

  Index dim1() const { return d1_; }
  Index dim2() const { return d2_; }
  Index dim3() const { return d3_; }
  Index size() const { return d1_ * d2_ * d3_; }

  // 1-based mode index, matching the usual n-mode product convention.
  Index dim(int mode) const {
    switch (mode) {
      case 1: return d1_;
      case 2: return d2_;
      case 3: return d3_;
      default:
        throw ShapeError("Tensor3::dim: mode must be 1, 2 or 3, got " +
                         std::to_string(mode));
    }
  }

  Scalar operator()(Index i, Index j, Index k) const {
    return data_[offset(i, j, k)];
  }
  Scalar& operator()(Index i, Index j, Index k) {
    return data_[offset(i, j, k)];
  }

  const Scalar* data() const { return data_.data(); }
  Scalar* data() { return data_.data(); }

  // Flat view of the buffer in storage order.
  const VectorX<Scalar>& vec() const { return data_; }
  VectorX<Scalar>& vec() { return data_; }

  bool allFinite() const { return data_.allFinite(); }

  void setZero() { data_.setZero(); }

 private:
  Index offset(Index i, Index j, Index k) const {
    return (i * d2_ + j) * d3_ + k;
  }

  Index d1_ = 0, d2_ = 0, d3_ = 0;
  VectorX<Scalar> data_;
};

namespace detail {

template <typename Scalar>
using RowMajorMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Mode-1 unfolding: d1 x (d2*d3), row r = vec of slab r in storage order.
template <typename Scalar>
Eigen::Map<const RowMajorMatrix<Scalar>> unfold1(const Tensor3<Scalar>& t) {
  return {t.data(), t.dim1(), t.dim2() * t.dim3()};
}

// Mode-3 unfolding: d3 x (d1*d2); column m is the fiber (i, j, :) with
// m = i * d2 + j. Falls out of the storage order as a column-major map.
template <typename Scalar>
Eigen::Map<const MatrixX<Scalar>> unfold3(const Tensor3<Scalar>& t) {
  return {t.data(), t.dim3(), t.dim1() * t.dim2()};
}

template <typename Scalar>
Eigen::Map<RowMajorMatrix<Scalar>> slab1(Tensor3<Scalar>& t, Index i) {
  return {t.data() + i * t.dim2() * t.dim3(), t.dim2(), t.dim3()};
}

template <typename Scalar>
Eigen::Map<const RowMajorMatrix<Scalar>> slab1(const Tensor3<Scalar>& t,
                                               Index i) {
  return {t.data() + i * t.dim2() * t.dim3(), t.dim2(), t.dim3()};
}

template <typename Scalar>
Tensor3<Scalar> nModeProductImpl(const Tensor3<Scalar>& x,
                                 const MatrixX<Scalar>& y, int mode) {
  const Index r = y.rows();
  switch (mode) {
    case 1: {
      Tensor3<Scalar> z(r, x.dim2(), x.dim3());
      Eigen::Map<RowMajorMatrix<Scalar>> zm(z.data(), r,
                                            x.dim2() * x.dim3());
      zm.noalias() = y * unfold1(x);
      return z;
    }
    case 2: {
      Tensor3<Scalar> z(x.dim1(), r, x.dim3());
      for (Index i = 0; i < x.dim1(); ++i) {
        slab1(z, i).noalias() = y * slab1(x, i);
      }
      return z;
    }
    default: {
      Tensor3<Scalar> z(x.dim1(), x.dim2(), r);
      Eigen::Map<MatrixX<Scalar>> zm(z.data(), r, x.dim1() * x.dim2());
      zm.noalias() = y * unfold3(x);
      return z;
    }
  }
}

}  // namespace detail

// Mode-n product. A matrix operand contracts dimension `mode` of `x` against
// its columns, so entry j of the result's mode-n dimension is
// sum_i x(..., i, ...) * y(j, i), and that dimension becomes y.rows().
// A vector operand is treated as the 1 x dim(mode) matrix y^T: the
// contracted dimension is kept with size 1 rather than dropped.
template <typename Scalar, typename Derived>
Tensor3<Scalar> nModeProduct(const Tensor3<Scalar>& x,
                             const Eigen::MatrixBase<Derived>& y, int mode) {
  static_assert(std::is_same_v<typename Derived::Scalar, Scalar>,
                "nModeProduct: operand scalar types must match");
  if (mode < 1 || mode > 3) {
    throw ShapeError("nModeProduct: mode must be 1, 2 or 3, got " +
                     std::to_string(mode));
  }
  if constexpr (Derived::ColsAtCompileTime == 1) {
    if (y.size() != x.dim(mode)) {
      throw ShapeError("nModeProduct: mode " + std::to_string(mode) +
                       " expects a vector of length " +
                       std::to_string(x.dim(mode)) + ", got " +
                       std::to_string(y.size()));
    }
    MatrixX<Scalar> row = y.transpose();
    return detail::nModeProductImpl(x, row, mode);
  } else {
    if (y.cols() != x.dim(mode)) {
      throw ShapeError("nModeProduct: mode " + std::to_string(mode) +
                       " expects a matrix with " +
                       std::to_string(x.dim(mode)) + " columns, got " +
                       std::to_string(y.cols()));
    }
    MatrixX<Scalar> ym = y;
    return detail::nModeProductImpl(x, ym, mode);
  }
}

// <q, k, c> = sum_d q_d * k_d * c_d.
template <typename DerivedQ, typename DerivedK, typename DerivedC>
typename DerivedQ::Scalar contextualInnerProduct(
    const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedK>& k,
    const Eigen::MatrixBase<DerivedC>& c) {
  if (q.size() != k.size() || q.size() != c.size()) {
    throw ShapeError("contextualInnerProduct: size mismatch " +
                     std::to_string(q.size()) + "/" + std::to_string(k.size()) +
                     "/" + std::to_string(c.size()));
  }
  return (q.derived().array() * k.derived().array() * c.derived().array())
      .sum();
}

// Superdiagonal D x D x D tensor: entry (d, d, d) = 1, all others 0.
template <typename Scalar>
Tensor3<Scalar> identityTensor(Index d) {
  if (d < 1) {
    throw std::invalid_argument("identityTensor: dimension must be >= 1, got " +
                                std::to_string(d));
  }
  Tensor3<Scalar> t(d, d, d);
  for (Index i = 0; i < d; ++i) t(i, i, i) = Scalar(1);
  return t;
}

// Mode-3 matricization of an I x J x D tensor: D x (I*J) matrix whose
// column m = i * J + j is the fiber (i, j, :).
template <typename Scalar>
MatrixX<Scalar> mode3Matricize(const Tensor3<Scalar>& t) {
  return detail::unfold3(t);
}

// Inverse of mode3Matricize for the given leading dimensions.
template <typename Derived>
Tensor3<typename Derived::Scalar> mode3Fold(
    const Eigen::MatrixBase<Derived>& m, Index d1, Index d2) {
  using Scalar = typename Derived::Scalar;
  if (m.cols() != d1 * d2) {
    throw ShapeError("mode3Fold: expected " + std::to_string(d1 * d2) +
                     " columns for a " + std::to_string(d1) + " x " +
                     std::to_string(d2) + " fold, got " +
                     std::to_string(m.cols()));
  }
  Tensor3<Scalar> t(d1, d2, m.rows());
  Eigen::Map<MatrixX<Scalar>>(t.data(), m.rows(), d1 * d2) = m;
  return t;
}

template <typename DerivedA, typename DerivedB>
VectorX<typename DerivedA::Scalar> hadamard(
    const Eigen::MatrixBase<DerivedA>& a,
    const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("hadamard: size mismatch " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  }
  return a.derived().cwiseProduct(b.derived());
}

// Row-major flattening of a matrix: entry (i, j) lands at i * cols + j.
template <typename Derived>
VectorX<typename Derived::Scalar> vecRowMajor(
    const Eigen::MatrixBase<Derived>& a) {
  MatrixX<typename Derived::Scalar> m = a;
  return m.template reshaped<Eigen::RowMajor>();
}

}  // namespace triattn
