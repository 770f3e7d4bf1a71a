#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "triattn/bi_attention.hpp"
#include "triattn/tri_attention.hpp"

namespace triattn {

// Gradients of a scalar loss with respect to every input of triAttend.
// params holds zero-shaped clones of the primal blocks; only the blocks the
// chosen variant/integration reads receive nonzero values.
struct TriAdjoints {
  Vectord q;
  Matrixd K;
  Matrixd V;
  Matrixd C;
  TriParams<double> params;
};

struct BiAdjoints {
  Vectord q;
  Matrixd K;
  Matrixd V;
  BiParams<double> params;
};

// Gradients of upstream . triAttend(...) with respect to all inputs and
// parameters, computed analytically.
TriAdjoints triAttendBackward(TriVariant variant, ValueIntegration integration,
                              const Vectord& q, const Matrixd& K,
                              const Matrixd& V, const Matrixd& C,
                              const TriParams<double>& params,
                              const Vectord& upstream);

BiAdjoints biAttendBackward(BiVariant variant, const Vectord& q,
                            const Matrixd& K, const Matrixd& V,
                            const BiParams<double>& params,
                            const Vectord& upstream);

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
Vectord fdGradient(const std::function<double(const Vectord&)>& f,
                   const Vectord& theta, double h);

struct BlockCheck {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  TriVariant variant;
  ValueIntegration integration;
  Index d = 0, i = 0, j = 0;
  std::uint64_t seed = 0;
  double h = 0.0;
  double tolerance = 0.0;
  std::vector<BlockCheck> blocks;
  bool pass = false;
};

// Compares triAttendBackward against fdGradient on random inputs drawn from
// N(0, 0.5), block by block (q, K, V, C, then every parameter block the
// configuration uses). `fault` shifts every analytic gradient block by that
// amount; nonzero values exist to prove the checker can fail.
GradCheckReport gradcheckReport(TriVariant variant,
                                ValueIntegration integration, Index d, Index i,
                                Index j, std::uint64_t seed, double h = 1e-5,
                                double tolerance = 1e-4, double fault = 0.0);

std::string toJson(const GradCheckReport& report);
std::string toJson(const std::vector<GradCheckReport>& reports);

}  // namespace triattn
