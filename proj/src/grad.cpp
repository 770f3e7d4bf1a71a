#include "triattn/grad.hpp"

#include <json.hpp>

#include <cmath>
#include <random>

#include "triattn/names.hpp"

namespace triattn {

namespace {

// dL/dS for A = jointSoftmax(S) and G = dL/dA: dS = A .* (G - <A, G>).
Matrixd softmaxGridBackward(const Matrixd& a, const Matrixd& g) {
  const double inner = (a.array() * g.array()).sum();
  return (a.array() * (g.array() - inner)).matrix();
}

TriParams<double> zeroLike(const TriParams<double>& p) {
  TriParams<double> z;
  z.W = Matrixd::Zero(p.W.rows(), p.W.cols());
  z.U = Matrixd::Zero(p.U.rows(), p.U.cols());
  z.H = Matrixd::Zero(p.H.rows(), p.H.cols());
  z.p = Vectord::Zero(p.p.size());
  z.Wt = Tensor3<double>(p.Wt.dim1(), p.Wt.dim2(), p.Wt.dim3());
  z.Uv = Matrixd::Zero(p.Uv.rows(), p.Uv.cols());
  z.Hc = Matrixd::Zero(p.Hc.rows(), p.Hc.cols());
  return z;
}

BiParams<double> zeroLike(const BiParams<double>& p) {
  BiParams<double> z;
  z.W = Matrixd::Zero(p.W.rows(), p.W.cols());
  z.U = Matrixd::Zero(p.U.rows(), p.U.cols());
  z.p = Vectord::Zero(p.p.size());
  return z;
}

// Accumulates the score-grid gradient dS into the adjoints of q, K, C and
// the variant's parameter blocks.
void scoreBackward(TriVariant variant, const Vectord& q, const Matrixd& K,
                   const Matrixd& C, const TriParams<double>& params,
                   const Matrixd& dS, TriAdjoints& adj) {
  const Index d = q.size();
  switch (variant) {
    case TriVariant::TDP:
    case TriVariant::TSDP: {
      const Matrixd ds = variant == TriVariant::TSDP
                             ? Matrixd(dS / std::sqrt(double(d)))
                             : dS;
      const Matrixd cdst = C * ds.transpose();  // D x I
      const Matrixd kds = K * ds;               // D x J
      adj.q += (K.array() * cdst.array()).rowwise().sum().matrix();
      adj.K += (cdst.array().colwise() * q.array()).matrix();
      adj.C += (kds.array().colwise() * q.array()).matrix();
      return;
    }
    case TriVariant::TriliFull: {
      Matrixd m = Matrixd::Zero(d, d);
      for (Index a = 0; a < d; ++a) m += q[a] * detail::slab1(params.Wt, a);
      const Matrixd dM = K * dS * C.transpose();
      for (Index a = 0; a < d; ++a) {
        detail::slab1(adj.params.Wt, a) += q[a] * dM;
        adj.q[a] +=
            (detail::slab1(params.Wt, a).array() * dM.array()).sum();
      }
      adj.K += m * C * dS.transpose();
      adj.C += m.transpose() * K * dS;
      return;
    }
    case TriVariant::TriliEconomic: {
      const Vectord a = params.W * q;
      const Matrixd b = params.U * K;
      const Matrixd e = params.H * C;
      const Matrixd edst = e * dS.transpose();  // Dp x I
      const Matrixd bds = b * dS;               // Dp x J
      const Vectord da = (b.array() * edst.array()).rowwise().sum();
      const Matrixd db = (edst.array().colwise() * a.array()).matrix();
      const Matrixd de = (bds.array().colwise() * a.array()).matrix();
      adj.params.W += da * q.transpose();
      adj.params.U += db * K.transpose();
      adj.params.H += de * C.transpose();
      adj.q += params.W.transpose() * da;
      adj.K += params.U.transpose() * db;
      adj.C += params.H.transpose() * de;
      return;
    }
    case TriVariant::TAdd: {
      const Index dh = params.p.size();
      const Vectord wq = params.W * q;
      const Matrixd uk = params.U * K;
      const Matrixd hc = params.H * C;
      Vectord dzSum = Vectord::Zero(dh);
      Matrixd dzByKey = Matrixd::Zero(dh, K.cols());
      Matrixd dzByCtx = Matrixd::Zero(dh, C.cols());
      for (Index j = 0; j < C.cols(); ++j) {
        const Vectord base = wq + hc.col(j);
        for (Index i = 0; i < K.cols(); ++i) {
          const Vectord t = (base + uk.col(i)).array().tanh();
          const Vectord dz =
              dS(i, j) * (params.p.array() * (1.0 - t.array().square()));
          adj.params.p += dS(i, j) * t;
          dzSum += dz;
          dzByKey.col(i) += dz;
          dzByCtx.col(j) += dz;
        }
      }
      adj.params.W += dzSum * q.transpose();
      adj.params.U += dzByKey * K.transpose();
      adj.params.H += dzByCtx * C.transpose();
      adj.q += params.W.transpose() * dzSum;
      adj.K += params.U.transpose() * dzByKey;
      adj.C += params.H.transpose() * dzByCtx;
      return;
    }
  }
  throw std::invalid_argument("scoreBackward: unknown variant");
}

}  // namespace

TriAdjoints triAttendBackward(TriVariant variant, ValueIntegration integration,
                              const Vectord& q, const Matrixd& K,
                              const Matrixd& V, const Matrixd& C,
                              const TriParams<double>& params,
                              const Vectord& upstream) {
  // Recompute the forward pass; the call also validates every shape.
  const TriAttendResult<double> fwd =
      triAttendDetailed(variant, integration, q, K, V, C, params);
  if (upstream.size() != fwd.q_new.size()) {
    throw ShapeError("triAttendBackward: upstream length " +
                     std::to_string(upstream.size()) + " vs output length " +
                     std::to_string(fwd.q_new.size()));
  }
  const Matrixd& a = fwd.weights;
  const bool bilinear = integration == ValueIntegration::Bilinear;
  const Matrixd av = bilinear ? Matrixd(params.Uv * V) : V;
  const Matrixd bc = bilinear ? Matrixd(params.Hc * C) : C;

  TriAdjoints adj;
  adj.q = Vectord::Zero(q.size());
  adj.K = Matrixd::Zero(K.rows(), K.cols());
  adj.V = Matrixd::Zero(V.rows(), V.cols());
  adj.C = Matrixd::Zero(C.rows(), C.cols());
  adj.params = zeroLike(params);

  // dL/dA: cell (i, j) sees upstream . fiber(i, j).
  Matrixd g;
  if (integration == ValueIntegration::Additive) {
    g = (av.transpose() * upstream).replicate(1, C.cols()) +
        (bc.transpose() * upstream).transpose().replicate(K.cols(), 1);
  } else {
    g = detail::tripleProductGrid(upstream, av, bc);
  }

  // Value / context terms of dL/dfiber = A(i, j) * upstream.
  if (integration == ValueIntegration::Additive) {
    adj.V += upstream * a.rowwise().sum().transpose();
    adj.C += upstream * a.colwise().sum();
  } else {
    const Matrixd dav =
        ((bc * a.transpose()).array().colwise() * upstream.array()).matrix();
    const Matrixd dbc =
        ((av * a).array().colwise() * upstream.array()).matrix();
    if (bilinear) {
      adj.params.Uv += dav * V.transpose();
      adj.params.Hc += dbc * C.transpose();
      adj.V += params.Uv.transpose() * dav;
      adj.C += params.Hc.transpose() * dbc;
    } else {
      adj.V += dav;
      adj.C += dbc;
    }
  }

  scoreBackward(variant, q, K, C, params, softmaxGridBackward(a, g), adj);
  return adj;
}

BiAdjoints biAttendBackward(BiVariant variant, const Vectord& q,
                            const Matrixd& K, const Matrixd& V,
                            const BiParams<double>& params,
                            const Vectord& upstream) {
  const Vectord s = biScore(variant, q, K, params);
  const Vectord alpha = softmaxNormalize(s);
  if (upstream.size() != V.rows()) {
    throw ShapeError("biAttendBackward: upstream length " +
                     std::to_string(upstream.size()) + " vs output length " +
                     std::to_string(V.rows()));
  }
  if (V.cols() != K.cols()) {
    throw ShapeError("biAttendBackward: " + std::to_string(K.cols()) +
                     " keys vs " + std::to_string(V.cols()) + " values");
  }
  const Index d = q.size();

  BiAdjoints adj;
  adj.q = Vectord::Zero(d);
  adj.K = Matrixd::Zero(K.rows(), K.cols());
  adj.V = upstream * alpha.transpose();
  adj.params = zeroLike(params);

  const Vectord dalpha = V.transpose() * upstream;
  Vectord ds =
      (alpha.array() * (dalpha.array() - alpha.dot(dalpha))).matrix();

  switch (variant) {
    case BiVariant::SDP:
      ds /= std::sqrt(double(d));
      [[fallthrough]];
    case BiVariant::DP:
      adj.q += K * ds;
      adj.K += q * ds.transpose();
      return adj;
    case BiVariant::Bili:
      adj.q += params.W * (K * ds);
      adj.params.W += q * (K * ds).transpose();
      adj.K += (params.W.transpose() * q) * ds.transpose();
      return adj;
    case BiVariant::Add: {
      const Vectord wq = params.W * q;
      const Matrixd uk = params.U * K;
      Vectord dzSum = Vectord::Zero(params.p.size());
      Matrixd dz(params.p.size(), K.cols());
      for (Index i = 0; i < K.cols(); ++i) {
        const Vectord t = (wq + uk.col(i)).array().tanh();
        dz.col(i) = ds[i] * (params.p.array() * (1.0 - t.array().square()));
        adj.params.p += ds[i] * t;
        dzSum += dz.col(i);
      }
      adj.params.W += dzSum * q.transpose();
      adj.params.U += dz * K.transpose();
      adj.q += params.W.transpose() * dzSum;
      adj.K += params.U.transpose() * dz;
      return adj;
    }
  }
  throw std::invalid_argument("biAttendBackward: unknown variant");
}

Vectord fdGradient(const std::function<double(const Vectord&)>& f,
                   const Vectord& theta, double h) {
  if (h <= 0.0) {
    throw std::invalid_argument("fdGradient: step must be positive");
  }
  Vectord grad(theta.size());
  Vectord probe = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double fp = f(probe);
    probe[i] = theta[i] - h;
    const double fm = f(probe);
    probe[i] = theta[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError("fdGradient: non-finite evaluation at coordinate " +
                           std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

namespace {

Vectord flat(const Matrixd& m) {
  return Eigen::Map<const Vectord>(m.data(), m.size());
}

void unflat(const Vectord& v, Matrixd& m) {
  Eigen::Map<Vectord>(m.data(), m.size()) = v;
}

struct CheckInputs {
  TriVariant variant;
  ValueIntegration integration;
  Vectord q;
  Matrixd K, V, C;
  TriParams<double> params;
  Vectord upstream;

  double loss() const {
    return upstream.dot(
        triAttend(variant, integration, q, K, V, C, params));
  }

  Vectord* vectorBlock(const std::string& name) {
    if (name == "q") return &q;
    if (name == "p") return &params.p;
    return nullptr;
  }
  Matrixd* matrixBlock(const std::string& name) {
    if (name == "K") return &K;
    if (name == "V") return &V;
    if (name == "C") return &C;
    if (name == "W") return &params.W;
    if (name == "U") return &params.U;
    if (name == "H") return &params.H;
    if (name == "Uv") return &params.Uv;
    if (name == "Hc") return &params.Hc;
    return nullptr;
  }

  Vectord flatBlock(const std::string& name) {
    if (name == "Wt") return params.Wt.vec();
    if (Vectord* v = vectorBlock(name)) return *v;
    return flat(*matrixBlock(name));
  }
  void setBlock(const std::string& name, const Vectord& theta) {
    if (name == "Wt") {
      params.Wt.vec() = theta;
    } else if (Vectord* v = vectorBlock(name)) {
      *v = theta;
    } else {
      unflat(theta, *matrixBlock(name));
    }
  }
};

Vectord flatAdjoint(const TriAdjoints& adj, const std::string& name) {
  if (name == "q") return adj.q;
  if (name == "K") return flat(adj.K);
  if (name == "V") return flat(adj.V);
  if (name == "C") return flat(adj.C);
  if (name == "W") return flat(adj.params.W);
  if (name == "U") return flat(adj.params.U);
  if (name == "H") return flat(adj.params.H);
  if (name == "p") return adj.params.p;
  if (name == "Wt") return adj.params.Wt.vec();
  if (name == "Uv") return flat(adj.params.Uv);
  if (name == "Hc") return flat(adj.params.Hc);
  throw std::invalid_argument("flatAdjoint: unknown block " + name);
}

Matrixd drawMatrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> dist(0.0, 0.5);
  Matrixd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

Vectord drawVector(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> dist(0.0, 0.5);
  Vectord v(n);
  for (Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

}  // namespace

GradCheckReport gradcheckReport(TriVariant variant,
                                ValueIntegration integration, Index d, Index i,
                                Index j, std::uint64_t seed, double h,
                                double tolerance, double fault) {
  if (d < 1 || d > 8 || i < 1 || i > 5 || j < 1 || j > 5) {
    throw std::invalid_argument(
        "gradcheckReport: dims out of range (D <= 8, I, J <= 5)");
  }
  std::mt19937_64 rng(seed);

  CheckInputs in;
  in.variant = variant;
  in.integration = integration;
  in.q = drawVector(rng, d);
  in.K = drawMatrix(rng, d, i);
  in.V = drawMatrix(rng, d, i);
  in.C = drawMatrix(rng, d, j);
  if (variant == TriVariant::TAdd || variant == TriVariant::TriliEconomic) {
    in.params.W = drawMatrix(rng, d, d);
    in.params.U = drawMatrix(rng, d, d);
    in.params.H = drawMatrix(rng, d, d);
  }
  if (variant == TriVariant::TAdd) in.params.p = drawVector(rng, d);
  if (variant == TriVariant::TriliFull) {
    in.params.Wt = Tensor3<double>(d, d, d);
    std::normal_distribution<double> dist(0.0, 0.5);
    for (Index t = 0; t < in.params.Wt.size(); ++t)
      in.params.Wt.vec()[t] = dist(rng);
  }
  if (integration == ValueIntegration::Bilinear) {
    in.params.Uv = drawMatrix(rng, d, d);
    in.params.Hc = drawMatrix(rng, d, d);
  }
  in.upstream = drawVector(rng, d);

  const TriAdjoints analytic =
      triAttendBackward(variant, integration, in.q, in.K, in.V, in.C,
                        in.params, in.upstream);

  std::vector<std::string> blocks = {"q", "K", "V", "C"};
  if (variant == TriVariant::TAdd) {
    blocks.insert(blocks.end(), {"W", "U", "H", "p"});
  } else if (variant == TriVariant::TriliEconomic) {
    blocks.insert(blocks.end(), {"W", "U", "H"});
  } else if (variant == TriVariant::TriliFull) {
    blocks.push_back("Wt");
  }
  if (integration == ValueIntegration::Bilinear) {
    blocks.insert(blocks.end(), {"Uv", "Hc"});
  }

  GradCheckReport report;
  report.variant = variant;
  report.integration = integration;
  report.d = d;
  report.i = i;
  report.j = j;
  report.seed = seed;
  report.h = h;
  report.tolerance = tolerance;
  report.pass = true;

  for (const std::string& name : blocks) {
    const Vectord theta = in.flatBlock(name);
    auto f = [&in, &name](const Vectord& th) {
      CheckInputs probe = in;
      probe.setBlock(name, th);
      return probe.loss();
    };
    const Vectord fd = fdGradient(f, theta, h);
    Vectord an = flatAdjoint(analytic, name);
    an.array() += fault;

    BlockCheck check;
    check.name = name;
    for (Index t = 0; t < theta.size(); ++t) {
      const double denom =
          std::max({std::abs(an[t]), std::abs(fd[t]), 1e-8});
      check.max_rel_err =
          std::max(check.max_rel_err, std::abs(an[t] - fd[t]) / denom);
    }
    check.pass = check.max_rel_err < tolerance;
    report.pass = report.pass && check.pass;
    report.blocks.push_back(std::move(check));
  }
  return report;
}

namespace {

nlohmann::json reportJson(const GradCheckReport& r) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const BlockCheck& b : r.blocks) {
    blocks.push_back({{"name", b.name},
                      {"max_rel_err", b.max_rel_err},
                      {"pass", b.pass}});
  }
  return {{"variant", variantName(r.variant)},
          {"integration", integrationName(r.integration)},
          {"dims", {{"d", r.d}, {"i", r.i}, {"j", r.j}}},
          {"seed", r.seed},
          {"h", r.h},
          {"tolerance", r.tolerance},
          {"blocks", blocks},
          {"pass", r.pass}};
}

}  // namespace

std::string toJson(const GradCheckReport& report) {
  return reportJson(report).dump(2);
}

std::string toJson(const std::vector<GradCheckReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  bool all = true;
  for (const GradCheckReport& r : reports) {
    arr.push_back(reportJson(r));
    all = all && r.pass;
  }
  return nlohmann::json{{"reports", arr}, {"pass", all}}.dump(2);
}

}  // namespace triattn
