#pragma once

#include <cmath>
#include <string>

#include "triattn/common.hpp"

namespace triattn {

// Two-factor scoring: each key is scored against the query alone.
enum class BiVariant { Add, DP, SDP, Bili };

// Only the blocks a variant reads need to be populated:
//   Add  -> W (Dh x D), U (Dh x D), p (Dh)
//   Bili -> W (D x D)
//   DP / SDP -> none
template <typename Scalar>
struct BiParams {
  MatrixX<Scalar> W;
  MatrixX<Scalar> U;
  VectorX<Scalar> p;
};

namespace detail {

template <typename Scalar>
VectorX<Scalar> biScoreImpl(BiVariant variant, const VectorX<Scalar>& q,
                            const MatrixX<Scalar>& K,
                            const BiParams<Scalar>& params) {
  const Index d = q.size();
  if (K.rows() != d) {
    throw ShapeError("biScore: query dim " + std::to_string(d) +
                     " vs key dim " + std::to_string(K.rows()));
  }
  if (!q.allFinite() || !K.allFinite()) {
    throw std::invalid_argument("biScore: non-finite input");
  }
  switch (variant) {
    case BiVariant::DP:
      return K.transpose() * q;
    case BiVariant::SDP:
      return (K.transpose() * q) / std::sqrt(Scalar(d));
    case BiVariant::Bili: {
      if (params.W.rows() != d || params.W.cols() != d) {
        throw ShapeError("biScore: Bili needs a " + std::to_string(d) + " x " +
                         std::to_string(d) + " W");
      }
      if (!params.W.allFinite()) {
        throw std::invalid_argument("biScore: non-finite W");
      }
      return K.transpose() * (params.W.transpose() * q);
    }
    case BiVariant::Add: {
      if (params.W.cols() != d || params.U.cols() != d ||
          params.W.rows() != params.U.rows() ||
          params.p.size() != params.W.rows()) {
        throw ShapeError("biScore: Add params disagree with query dim " +
                         std::to_string(d));
      }
      if (!params.W.allFinite() || !params.U.allFinite() ||
          !params.p.allFinite()) {
        throw std::invalid_argument("biScore: non-finite params");
      }
      const VectorX<Scalar> wq = params.W * q;
      const MatrixX<Scalar> uk = params.U * K;
      VectorX<Scalar> s(K.cols());
      for (Index i = 0; i < K.cols(); ++i) {
        s[i] = params.p.dot((wq + uk.col(i)).array().tanh().matrix());
      }
      return s;
    }
  }
  throw std::invalid_argument("biScore: unknown variant");
}

}  // namespace detail

// Scores s_i for query q against keys K (columns). Add uses
// p^T tanh(W q + U k_i); DP is q . k_i; SDP divides by sqrt(D);
// Bili is q^T W k_i.
template <typename DerivedQ, typename DerivedK>
VectorX<typename DerivedQ::Scalar> biScore(
    BiVariant variant, const Eigen::MatrixBase<DerivedQ>& q,
    const Eigen::MatrixBase<DerivedK>& K,
    const BiParams<typename DerivedQ::Scalar>& params) {
  using Scalar = typename DerivedQ::Scalar;
  const VectorX<Scalar> qv = q;
  const MatrixX<Scalar> km = K;
  return detail::biScoreImpl(variant, qv, km, params);
}

// Softmax with max subtraction, so arbitrarily shifted inputs are safe.
template <typename Derived>
VectorX<typename Derived::Scalar> softmaxNormalize(
    const Eigen::MatrixBase<Derived>& s_in) {
  using Scalar = typename Derived::Scalar;
  const VectorX<Scalar> s = s_in;
  if (s.size() == 0) {
    throw std::invalid_argument("softmaxNormalize: empty input");
  }
  if (!s.allFinite()) {
    throw std::invalid_argument("softmaxNormalize: non-finite input");
  }
  const Scalar m = s.maxCoeff();
  VectorX<Scalar> e = (s.array() - m).exp();
  return e / e.sum();
}

// q_new = V softmax(score(q, K)). K and V must agree in both dimensions.
template <typename DerivedQ, typename DerivedK, typename DerivedV>
VectorX<typename DerivedQ::Scalar> biAttend(
    BiVariant variant, const Eigen::MatrixBase<DerivedQ>& q,
    const Eigen::MatrixBase<DerivedK>& K,
    const Eigen::MatrixBase<DerivedV>& V,
    const BiParams<typename DerivedQ::Scalar>& params) {
  using Scalar = typename DerivedQ::Scalar;
  const VectorX<Scalar> qv = q;
  const MatrixX<Scalar> km = K;
  const MatrixX<Scalar> vm = V;
  if (vm.rows() != km.rows() || vm.cols() != km.cols()) {
    throw ShapeError("biAttend: V is " + std::to_string(vm.rows()) + " x " +
                     std::to_string(vm.cols()) + ", K is " +
                     std::to_string(km.rows()) + " x " +
                     std::to_string(km.cols()));
  }
  return vm * softmaxNormalize(detail::biScoreImpl(variant, qv, km, params));
}

}  // namespace triattn
