#pragma once

// Reference implementations used only by tests. Everything here is written
// as plain scalar loops straight off the defining sums, deliberately sharing
// no code path with the library implementations they check.

#include <cmath>
#include <random>

#include "triattn/bi_attention.hpp"
#include "triattn/tensor.hpp"
#include "triattn/tri_attention.hpp"

namespace oracle {

using triattn::Index;
using triattn::Matrixd;
using triattn::Tensor3;
using triattn::Vectord;

inline Tensor3<double> naiveNModeMatrix(const Tensor3<double>& x,
                                        const Matrixd& y, int mode) {
  const Index r = y.rows();
  Tensor3<double> z(mode == 1 ? r : x.dim1(), mode == 2 ? r : x.dim2(),
                    mode == 3 ? r : x.dim3());
  for (Index i = 0; i < z.dim1(); ++i) {
    for (Index j = 0; j < z.dim2(); ++j) {
      for (Index k = 0; k < z.dim3(); ++k) {
        double acc = 0.0;
        for (Index t = 0; t < x.dim(mode); ++t) {
          const double w = (mode == 1) ? y(i, t) : (mode == 2) ? y(j, t)
                                                               : y(k, t);
          const double v = (mode == 1)   ? x(t, j, k)
                           : (mode == 2) ? x(i, t, k)
                                         : x(i, j, t);
          acc += w * v;
        }
        z(i, j, k) = acc;
      }
    }
  }
  return z;
}

inline Tensor3<double> naiveNModeVector(const Tensor3<double>& x,
                                        const Vectord& y, int mode) {
  Matrixd row = y.transpose();
  return naiveNModeMatrix(x, row, mode);
}

inline Matrixd naiveTriScore(triattn::TriVariant variant, const Vectord& q,
                             const Matrixd& K, const Matrixd& C,
                             const triattn::TriParams<double>& params) {
  using triattn::TriVariant;
  const Index d = q.size();
  const Index ni = K.cols();
  const Index nj = C.cols();
  Matrixd s(ni, nj);
  for (Index i = 0; i < ni; ++i) {
    for (Index j = 0; j < nj; ++j) {
      double acc = 0.0;
      switch (variant) {
        case TriVariant::TDP:
        case TriVariant::TSDP:
          for (Index a = 0; a < d; ++a) acc += q[a] * K(a, i) * C(a, j);
          if (variant == TriVariant::TSDP) acc /= std::sqrt(double(d));
          break;
        case TriVariant::TriliFull:
          for (Index a = 0; a < d; ++a)
            for (Index b = 0; b < d; ++b)
              for (Index c = 0; c < d; ++c)
                acc += params.Wt(a, b, c) * q[a] * K(b, i) * C(c, j);
          break;
        case TriVariant::TriliEconomic: {
          const Index dp = params.W.rows();
          for (Index m = 0; m < dp; ++m) {
            double wq = 0.0, uk = 0.0, hc = 0.0;
            for (Index a = 0; a < d; ++a) {
              wq += params.W(m, a) * q[a];
              uk += params.U(m, a) * K(a, i);
              hc += params.H(m, a) * C(a, j);
            }
            acc += wq * uk * hc;
          }
          break;
        }
        case TriVariant::TAdd: {
          const Index dh = params.p.size();
          for (Index m = 0; m < dh; ++m) {
            double z = 0.0;
            for (Index a = 0; a < d; ++a) {
              z += params.W(m, a) * q[a] + params.U(m, a) * K(a, i) +
                   params.H(m, a) * C(a, j);
            }
            acc += params.p[m] * std::tanh(z);
          }
          break;
        }
      }
      s(i, j) = acc;
    }
  }
  return s;
}

inline Matrixd naiveGridSoftmax(const Matrixd& s) {
  double m = s(0, 0);
  for (Index i = 0; i < s.rows(); ++i)
    for (Index j = 0; j < s.cols(); ++j) m = std::max(m, s(i, j));
  Matrixd e(s.rows(), s.cols());
  double total = 0.0;
  for (Index i = 0; i < s.rows(); ++i) {
    for (Index j = 0; j < s.cols(); ++j) {
      e(i, j) = std::exp(s(i, j) - m);
      total += e(i, j);
    }
  }
  return e / total;
}

inline Vectord naiveTriAttend(triattn::TriVariant variant,
                              triattn::ValueIntegration integration,
                              const Vectord& q, const Matrixd& K,
                              const Matrixd& V, const Matrixd& C,
                              const triattn::TriParams<double>& params) {
  using triattn::ValueIntegration;
  const Matrixd a = naiveGridSoftmax(naiveTriScore(variant, q, K, C, params));
  const Matrixd av =
      integration == ValueIntegration::Bilinear ? Matrixd(params.Uv * V) : V;
  const Matrixd bc =
      integration == ValueIntegration::Bilinear ? Matrixd(params.Hc * C) : C;
  Vectord out = Vectord::Zero(av.rows());
  for (Index i = 0; i < V.cols(); ++i) {
    for (Index j = 0; j < C.cols(); ++j) {
      for (Index d = 0; d < av.rows(); ++d) {
        const double fiber = integration == ValueIntegration::Additive
                                 ? av(d, i) + bc(d, j)
                                 : av(d, i) * bc(d, j);
        out[d] += a(i, j) * fiber;
      }
    }
  }
  return out;
}

inline Vectord naiveBiAttend(triattn::BiVariant variant, const Vectord& q,
                             const Matrixd& K, const Matrixd& V,
                             const triattn::BiParams<double>& params) {
  using triattn::BiVariant;
  const Index d = q.size();
  const Index n = K.cols();
  Vectord s(n);
  for (Index i = 0; i < n; ++i) {
    double acc = 0.0;
    switch (variant) {
      case BiVariant::DP:
      case BiVariant::SDP:
        for (Index a = 0; a < d; ++a) acc += q[a] * K(a, i);
        if (variant == BiVariant::SDP) acc /= std::sqrt(double(d));
        break;
      case BiVariant::Bili:
        for (Index a = 0; a < d; ++a)
          for (Index b = 0; b < d; ++b) acc += q[a] * params.W(a, b) * K(b, i);
        break;
      case BiVariant::Add:
        for (Index m = 0; m < params.p.size(); ++m) {
          double z = 0.0;
          for (Index a = 0; a < d; ++a)
            z += params.W(m, a) * q[a] + params.U(m, a) * K(a, i);
          acc += params.p[m] * std::tanh(z);
        }
        break;
    }
    s[i] = acc;
  }
  const double m = s.maxCoeff();
  Vectord e = (s.array() - m).exp();
  e /= e.sum();
  Vectord out = Vectord::Zero(d);
  for (Index i = 0; i < n; ++i) out += e[i] * V.col(i);
  return out;
}

// Deterministic fixtures.

inline Matrixd randn(std::mt19937_64& rng, Index rows, Index cols,
                     double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrixd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

inline Vectord randnVec(std::mt19937_64& rng, Index n, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Vectord v(n);
  for (Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

inline Tensor3<double> randnTensor(std::mt19937_64& rng, Index d1, Index d2,
                                   Index d3, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor3<double> t(d1, d2, d3);
  for (Index i = 0; i < t.size(); ++i) t.vec()[i] = dist(rng);
  return t;
}

// Parameters sized for the given variant / integration at query dim d,
// filled from rng. Projection width defaults to d.
inline triattn::TriParams<double> randomTriParams(
    std::mt19937_64& rng, triattn::TriVariant variant,
    triattn::ValueIntegration integration, Index d, double stddev = 1.0) {
  using triattn::TriVariant;
  using triattn::ValueIntegration;
  triattn::TriParams<double> p;
  if (variant == TriVariant::TAdd || variant == TriVariant::TriliEconomic) {
    p.W = randn(rng, d, d, stddev);
    p.U = randn(rng, d, d, stddev);
    p.H = randn(rng, d, d, stddev);
  }
  if (variant == TriVariant::TAdd) p.p = randnVec(rng, d, stddev);
  if (variant == TriVariant::TriliFull)
    p.Wt = randnTensor(rng, d, d, d, stddev);
  if (integration == ValueIntegration::Bilinear) {
    p.Uv = randn(rng, d, d, stddev);
    p.Hc = randn(rng, d, d, stddev);
  }
  return p;
}

inline triattn::BiParams<double> randomBiParams(std::mt19937_64& rng,
                                                triattn::BiVariant variant,
                                                Index d, double stddev = 1.0) {
  using triattn::BiVariant;
  triattn::BiParams<double> p;
  if (variant == BiVariant::Add) {
    p.W = randn(rng, d, d, stddev);
    p.U = randn(rng, d, d, stddev);
    p.p = randnVec(rng, d, stddev);
  }
  if (variant == BiVariant::Bili) p.W = randn(rng, d, d, stddev);
  return p;
}

}  // namespace oracle
