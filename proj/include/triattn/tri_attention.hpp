#pragma once

#include <cmath>
#include <string>

#include "triattn/bi_attention.hpp"
#include "triattn/common.hpp"
#include "triattn/tensor.hpp"

namespace triattn {

// Three-factor scoring: each (key, context) pair is scored jointly with the
// query. TDP/TSDP use the elementwise triple product, TriliFull a full cubic
// weight tensor, TriliEconomic per-factor projections feeding the triple
// product, TAdd a shared nonlinear projection.
enum class TriVariant { TAdd, TDP, TSDP, TriliFull, TriliEconomic };

// How value and context combine before aggregation.
enum class ValueIntegration { Additive, Multiplicative, Bilinear };

// TriliFull materializes a D x D x D weight cube; beyond this the memory and
// the gradient cost are no longer sane for a dense implementation.
inline constexpr Index kTriliFullMaxDim = 32;

// Block usage by variant / integration (unused blocks may stay empty):
//   TAdd          -> W, U, H (Dh x D), p (Dh)
//   TriliFull     -> Wt (D x D x D)
//   TriliEconomic -> W, U, H (Dp x D)
//   Bilinear integration -> Uv, Hc (Dv x D)
template <typename Scalar>
struct TriParams {
  MatrixX<Scalar> W;
  MatrixX<Scalar> U;
  MatrixX<Scalar> H;
  VectorX<Scalar> p;
  Tensor3<Scalar> Wt;
  MatrixX<Scalar> Uv;
  MatrixX<Scalar> Hc;
};

namespace detail {

template <typename Scalar>
void checkTriParams(const char* op, TriVariant variant, Index d,
                    const TriParams<Scalar>& params) {
  switch (variant) {
    case TriVariant::TDP:
    case TriVariant::TSDP:
      return;
    case TriVariant::TriliFull:
      if (d > kTriliFullMaxDim) {
        throw CapacityError(std::string(op) + ": TriliFull dim " +
                            std::to_string(d) + " exceeds cap " +
                            std::to_string(kTriliFullMaxDim));
      }
      if (params.Wt.dim1() != d || params.Wt.dim2() != d ||
          params.Wt.dim3() != d) {
        throw ShapeError(std::string(op) + ": TriliFull needs a " +
                         std::to_string(d) + "^3 weight tensor");
      }
      return;
    case TriVariant::TAdd:
      if (params.W.cols() != d || params.U.cols() != d ||
          params.H.cols() != d || params.W.rows() != params.U.rows() ||
          params.W.rows() != params.H.rows() ||
          params.p.size() != params.W.rows()) {
        throw ShapeError(std::string(op) +
                         ": TAdd params disagree with query dim " +
                         std::to_string(d));
      }
      return;
    case TriVariant::TriliEconomic:
      if (params.W.cols() != d || params.U.cols() != d ||
          params.H.cols() != d || params.W.rows() != params.U.rows() ||
          params.W.rows() != params.H.rows()) {
        throw ShapeError(std::string(op) +
                         ": TriliEconomic params disagree with query dim " +
                         std::to_string(d));
      }
      return;
  }
  throw std::invalid_argument(std::string(op) + ": unknown variant");
}

// Grid of triple products: out(i, j) = sum_m a_m * B(m, i) * E(m, j).
template <typename Scalar>
MatrixX<Scalar> tripleProductGrid(const VectorX<Scalar>& a,
                                  const MatrixX<Scalar>& B,
                                  const MatrixX<Scalar>& E) {
  return (B.array().colwise() * a.array()).matrix().transpose() * E;
}

template <typename Scalar>
MatrixX<Scalar> triScoreImpl(TriVariant variant, const VectorX<Scalar>& q,
                             const MatrixX<Scalar>& K,
                             const MatrixX<Scalar>& C,
                             const TriParams<Scalar>& params) {
  const Index d = q.size();
  if (K.rows() != d || C.rows() != d) {
    throw ShapeError("triScore: query dim " + std::to_string(d) +
                     " vs key dim " + std::to_string(K.rows()) +
                     " vs context dim " + std::to_string(C.rows()));
  }
  checkTriParams("triScore", variant, d, params);
  switch (variant) {
    case TriVariant::TDP:
      return tripleProductGrid(q, K, C);
    case TriVariant::TSDP:
      return tripleProductGrid(q, K, C) / std::sqrt(Scalar(d));
    case TriVariant::TriliFull: {
      // S = K^T M C with M = Wt contracted along mode 1 by q.
      MatrixX<Scalar> m = MatrixX<Scalar>::Zero(d, d);
      for (Index i = 0; i < d; ++i) {
        m += q[i] * slab1(params.Wt, i);
      }
      return K.transpose() * m * C;
    }
    case TriVariant::TriliEconomic:
      return tripleProductGrid<Scalar>(params.W * q, params.U * K,
                                       params.H * C);
    case TriVariant::TAdd: {
      const VectorX<Scalar> wq = params.W * q;
      const MatrixX<Scalar> uk = params.U * K;
      const MatrixX<Scalar> hc = params.H * C;
      MatrixX<Scalar> s(K.cols(), C.cols());
      for (Index j = 0; j < C.cols(); ++j) {
        const VectorX<Scalar> base = wq + hc.col(j);
        for (Index i = 0; i < K.cols(); ++i) {
          s(i, j) = params.p.dot((base + uk.col(i)).array().tanh().matrix());
        }
      }
      return s;
    }
  }
  throw std::invalid_argument("triScore: unknown variant");
}

template <typename Scalar>
MatrixX<Scalar> triNormalizeImpl(const MatrixX<Scalar>& s) {
  if (s.size() == 0) {
    throw std::invalid_argument("triNormalize: empty grid");
  }
  if (!s.allFinite()) {
    throw std::invalid_argument("triNormalize: non-finite grid");
  }
  const Scalar m = s.maxCoeff();
  MatrixX<Scalar> e = (s.array() - m).exp();
  return e / e.sum();
}

template <typename Scalar>
Tensor3<Scalar> contextualValueImpl(ValueIntegration integration,
                                    const MatrixX<Scalar>& V,
                                    const MatrixX<Scalar>& C,
                                    const TriParams<Scalar>& params) {
  const Index d = V.rows();
  if (C.rows() != d) {
    throw ShapeError("contextualValue: value dim " + std::to_string(d) +
                     " vs context dim " + std::to_string(C.rows()));
  }
  const Index i = V.cols();
  const Index j = C.cols();
  MatrixX<Scalar> a;
  MatrixX<Scalar> b;
  switch (integration) {
    case ValueIntegration::Additive:
    case ValueIntegration::Multiplicative:
      a = V;
      b = C;
      break;
    case ValueIntegration::Bilinear:
      if (params.Uv.cols() != d || params.Hc.cols() != d ||
          params.Uv.rows() != params.Hc.rows()) {
        throw ShapeError(
            "contextualValue: Bilinear projections disagree with inputs");
      }
      a = params.Uv * V;
      b = params.Hc * C;
      break;
  }
  Tensor3<Scalar> out(i, j, a.rows());
  for (Index vi = 0; vi < i; ++vi) {
    for (Index cj = 0; cj < j; ++cj) {
      Eigen::Map<VectorX<Scalar>> fiber(out.data() + (vi * j + cj) * a.rows(),
                                        a.rows());
      if (integration == ValueIntegration::Additive) {
        fiber = a.col(vi) + b.col(cj);
      } else {
        fiber = a.col(vi).cwiseProduct(b.col(cj));
      }
    }
  }
  return out;
}

}  // namespace detail

// Score grid S in R^{I x J}: S(i, j) scores key i against context j for the
// given query.
template <typename DerivedQ, typename DerivedK, typename DerivedC>
MatrixX<typename DerivedQ::Scalar> triScore(
    TriVariant variant, const Eigen::MatrixBase<DerivedQ>& q,
    const Eigen::MatrixBase<DerivedK>& K,
    const Eigen::MatrixBase<DerivedC>& C,
    const TriParams<typename DerivedQ::Scalar>& params) {
  using Scalar = typename DerivedQ::Scalar;
  const VectorX<Scalar> qv = q;
  const MatrixX<Scalar> km = K;
  const MatrixX<Scalar> cm = C;
  return detail::triScoreImpl(variant, qv, km, cm, params);
}

// Batched scores for queries Q (columns): N x I x J tensor whose slab n is
// the score grid of Q.col(n). TriliFull goes through the mode-product chain
// Wt x1 Q^T x2 K^T x3 C^T; the other variants share per-query projections.
template <typename DerivedQ, typename DerivedK, typename DerivedC>
Tensor3<typename DerivedQ::Scalar> triScoreBatched(
    TriVariant variant, const Eigen::MatrixBase<DerivedQ>& Q_in,
    const Eigen::MatrixBase<DerivedK>& K_in,
    const Eigen::MatrixBase<DerivedC>& C_in,
    const TriParams<typename DerivedQ::Scalar>& params) {
  using Scalar = typename DerivedQ::Scalar;
  const MatrixX<Scalar> Q = Q_in;
  const MatrixX<Scalar> K = K_in;
  const MatrixX<Scalar> C = C_in;
  const Index d = Q.rows();
  const Index n = Q.cols();
  const Index i = K.cols();
  const Index j = C.cols();
  if (K.rows() != d || C.rows() != d) {
    throw ShapeError("triScoreBatched: query dim " + std::to_string(d) +
                     " vs key dim " + std::to_string(K.rows()) +
                     " vs context dim " + std::to_string(C.rows()));
  }
  detail::checkTriParams("triScoreBatched", variant, d, params);
  if (variant == TriVariant::TriliFull) {
    return nModeProduct(
        nModeProduct(nModeProduct(params.Wt, MatrixX<Scalar>(Q.transpose()),
                                  1),
                     MatrixX<Scalar>(K.transpose()), 2),
        MatrixX<Scalar>(C.transpose()), 3);
  }
  const bool projected =
      variant == TriVariant::TAdd || variant == TriVariant::TriliEconomic;
  const MatrixX<Scalar> wq = projected ? MatrixX<Scalar>(params.W * Q)
                                       : MatrixX<Scalar>();
  const MatrixX<Scalar> uk = projected ? MatrixX<Scalar>(params.U * K)
                                       : MatrixX<Scalar>();
  const MatrixX<Scalar> hc = projected ? MatrixX<Scalar>(params.H * C)
                                       : MatrixX<Scalar>();
  Tensor3<Scalar> out(n, i, j);
  for (Index qn = 0; qn < n; ++qn) {
    MatrixX<Scalar> grid;
    switch (variant) {
      case TriVariant::TDP:
        grid = detail::tripleProductGrid<Scalar>(Q.col(qn), K, C);
        break;
      case TriVariant::TSDP:
        grid = detail::tripleProductGrid<Scalar>(Q.col(qn), K, C) /
               std::sqrt(Scalar(d));
        break;
      case TriVariant::TriliEconomic:
        grid = detail::tripleProductGrid<Scalar>(wq.col(qn), uk, hc);
        break;
      case TriVariant::TAdd: {
        grid.resize(i, j);
        for (Index cj = 0; cj < j; ++cj) {
          const VectorX<Scalar> base = wq.col(qn) + hc.col(cj);
          for (Index ki = 0; ki < i; ++ki) {
            grid(ki, cj) =
                params.p.dot((base + uk.col(ki)).array().tanh().matrix());
          }
        }
        break;
      }
      default:
        throw std::invalid_argument("triScoreBatched: unknown variant");
    }
    detail::slab1(out, qn) = grid;
  }
  return out;
}

// Joint softmax over every cell of the grid, with max subtraction. The
// result is a proper distribution over (key, context) pairs.
template <typename Derived>
MatrixX<typename Derived::Scalar> triNormalize(
    const Eigen::MatrixBase<Derived>& s) {
  const MatrixX<typename Derived::Scalar> sm = s;
  return detail::triNormalizeImpl(sm);
}

// Contextual values: fiber (i, j, :) combines value i with context j.
// Additive: v_i + c_j; Multiplicative: v_i .* c_j;
// Bilinear: (Uv v_i) .* (Hc c_j), fiber width Uv.rows().
template <typename DerivedV, typename DerivedC>
Tensor3<typename DerivedV::Scalar> contextualValue(
    ValueIntegration integration, const Eigen::MatrixBase<DerivedV>& V,
    const Eigen::MatrixBase<DerivedC>& C,
    const TriParams<typename DerivedV::Scalar>& params) {
  using Scalar = typename DerivedV::Scalar;
  const MatrixX<Scalar> vm = V;
  const MatrixX<Scalar> cm = C;
  return detail::contextualValueImpl(integration, vm, cm, params);
}

template <typename Scalar>
struct TriAttendResult {
  VectorX<Scalar> q_new;
  MatrixX<Scalar> weights;  // I x J, nonnegative, sums to 1
};

// Full step: score, jointly normalize, aggregate contextual values.
// q_new = Vc_(3) vec(A) where Vc_(3) is the mode-3 matricization and vec is
// row-major, so weight (i, j) multiplies fiber (i, j, :).
template <typename DerivedQ, typename DerivedK, typename DerivedV,
          typename DerivedC>
TriAttendResult<typename DerivedQ::Scalar> triAttendDetailed(
    TriVariant variant, ValueIntegration integration,
    const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedK>& K,
    const Eigen::MatrixBase<DerivedV>& V, const Eigen::MatrixBase<DerivedC>& C,
    const TriParams<typename DerivedQ::Scalar>& params) {
  using Scalar = typename DerivedQ::Scalar;
  const VectorX<Scalar> qv = q;
  const MatrixX<Scalar> km = K;
  const MatrixX<Scalar> vm = V;
  const MatrixX<Scalar> cm = C;
  if (vm.cols() != km.cols()) {
    throw ShapeError("triAttend: " + std::to_string(km.cols()) + " keys vs " +
                     std::to_string(vm.cols()) + " values");
  }
  TriAttendResult<Scalar> r;
  r.weights =
      detail::triNormalizeImpl(detail::triScoreImpl(variant, qv, km, cm,
                                                    params));
  const Tensor3<Scalar> vc =
      detail::contextualValueImpl(integration, vm, cm, params);
  r.q_new = mode3Matricize(vc) * vecRowMajor(r.weights);
  return r;
}

template <typename DerivedQ, typename DerivedK, typename DerivedV,
          typename DerivedC>
VectorX<typename DerivedQ::Scalar> triAttend(
    TriVariant variant, ValueIntegration integration,
    const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedK>& K,
    const Eigen::MatrixBase<DerivedV>& V, const Eigen::MatrixBase<DerivedC>& C,
    const TriParams<typename DerivedQ::Scalar>& params) {
  return triAttendDetailed(variant, integration, q, K, V, C, params).q_new;
}

// Pairing used throughout the stacked network unless overridden.
inline ValueIntegration defaultIntegration(TriVariant variant) {
  switch (variant) {
    case TriVariant::TAdd:
      return ValueIntegration::Additive;
    case TriVariant::TDP:
    case TriVariant::TSDP:
      return ValueIntegration::Multiplicative;
    case TriVariant::TriliFull:
    case TriVariant::TriliEconomic:
      return ValueIntegration::Bilinear;
  }
  return ValueIntegration::Multiplicative;
}

// Bi-attention variant with the same scoring family.
inline BiVariant matchedBiVariant(TriVariant variant) {
  switch (variant) {
    case TriVariant::TAdd:
      return BiVariant::Add;
    case TriVariant::TDP:
      return BiVariant::DP;
    case TriVariant::TSDP:
      return BiVariant::SDP;
    case TriVariant::TriliFull:
    case TriVariant::TriliEconomic:
      return BiVariant::Bili;
  }
  return BiVariant::DP;
}

}  // namespace triattn
