#include "triattn/model.hpp"

#include <cmath>
#include <string>

#include "triattn/grad.hpp"

namespace triattn {

namespace {

BiParams<double> biView(const TriParams<double>& p) {
  BiParams<double> b;
  b.W = p.W;
  b.U = p.U;
  b.p = p.p;
  return b;
}

struct ForwardCache {
  std::vector<int> ta, tb, tc;
  Matrixd c;                        // context actually used
  bool context_from_tokens = true;  // false when an override was injected
  Vectord pc;
  std::vector<Matrixd> a_seq, b_seq;  // layer inputs; index 0 pre-stack
  Vectord pa, pb, diff, feat;
  Vectord mask;  // per-feature dropout scale; empty when inactive
  Vectord dropped, logits, probs;
};

// Shared by tanForward and the training loop so gradients see exactly the
// forward computation (including the dropout mask).
ForwardCache forwardPass(const TanState& state, const Example& ex,
                         const TanConfig& config, bool train_mode,
                         std::mt19937_64* rng,
                         const Matrixd* context_override) {
  validateConfig(config);
  const Index d = config.embed_dim;
  if (state.encoder.embed_dim != d) {
    throw ShapeError("tanForward: encoder dim " +
                     std::to_string(state.encoder.embed_dim) +
                     " vs config dim " + std::to_string(d));
  }
  if (Index(state.layers.size()) != config.layers) {
    throw ShapeError("tanForward: state has " +
                     std::to_string(state.layers.size()) + " layers, config " +
                     std::to_string(config.layers));
  }
  if (ex.label != 0 && ex.label != 1) {
    throw std::invalid_argument("tanForward: label out of range");
  }

  ForwardCache cache;
  cache.ta = filterSeq(ex.seq_a, config.max_seq_len);
  cache.tb = filterSeq(ex.seq_b, config.max_seq_len);

  const Matrixd ea = state.encoder.encode(cache.ta);
  const Matrixd eb = state.encoder.encode(cache.tb);
  if (context_override != nullptr) {
    if (context_override->rows() != d || context_override->cols() < 1) {
      throw ShapeError("tanForward: context override must be D x J");
    }
    cache.c = *context_override;
    cache.context_from_tokens = false;
  } else {
    cache.tc = contextTokens(cache.ta, cache.tb, state.encoder);
    cache.c = state.encoder.encode(cache.tc);
  }
  cache.pc = cache.c.rowwise().mean();

  Matrixd a0 = ea;
  Matrixd b0 = eb;
  if (config.mode == NetMode::CBi) {
    a0.colwise() += cache.pc;
    b0.colwise() += cache.pc;
  }
  cache.a_seq.push_back(std::move(a0));
  cache.b_seq.push_back(std::move(b0));

  for (int l = 0; l < config.layers; ++l) {
    const Matrixd& a_in = cache.a_seq.back();
    const Matrixd& b_in = cache.b_seq.back();
    const TriParams<double>& params = state.layers[size_t(l)];
    Matrixd a_out(d, a_in.cols());
    Matrixd b_out(d, b_in.cols());
    if (config.mode == NetMode::Tri) {
      for (Index p = 0; p < a_in.cols(); ++p) {
        a_out.col(p) =
            triAttend(config.variant, config.integration,
                      Vectord(a_in.col(p)), b_in, b_in, cache.c, params);
      }
      for (Index p = 0; p < b_in.cols(); ++p) {
        b_out.col(p) =
            triAttend(config.variant, config.integration,
                      Vectord(b_in.col(p)), a_in, a_in, cache.c, params);
      }
    } else {
      const BiVariant variant = matchedBiVariant(config.variant);
      const BiParams<double> bp = biView(params);
      for (Index p = 0; p < a_in.cols(); ++p) {
        a_out.col(p) = biAttend(variant, Vectord(a_in.col(p)), b_in, b_in, bp);
      }
      for (Index p = 0; p < b_in.cols(); ++p) {
        b_out.col(p) = biAttend(variant, Vectord(b_in.col(p)), a_in, a_in, bp);
      }
    }
    if (config.residual) {
      a_out += a_in;
      b_out += b_in;
    }
    cache.a_seq.push_back(std::move(a_out));
    cache.b_seq.push_back(std::move(b_out));
  }

  cache.pa = cache.a_seq.back().rowwise().mean();
  cache.pb = cache.b_seq.back().rowwise().mean();
  cache.diff = (cache.pa - cache.pb).cwiseAbs();
  cache.feat.resize(4 * d);
  cache.feat << cache.pa, cache.pb, cache.pc, cache.diff;

  if (train_mode && config.dropout_rate > 0.0) {
    if (rng == nullptr) {
      throw std::invalid_argument(
          "tanForward: dropout in train mode needs an rng");
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double keep = 1.0 - config.dropout_rate;
    cache.mask.resize(4 * d);
    for (Index t = 0; t < cache.mask.size(); ++t) {
      cache.mask[t] = unit(*rng) < keep ? 1.0 / keep : 0.0;
    }
    cache.dropped = cache.feat.cwiseProduct(cache.mask);
  } else {
    cache.dropped = cache.feat;
  }

  cache.logits = state.classifier_w * cache.dropped + state.classifier_b;
  cache.probs = softmaxNormalize(cache.logits);
  return cache;
}

struct TanGrads {
  Matrixd table;
  std::vector<TriParams<double>> layers;
  Matrixd classifier_w;
  Vectord classifier_b;
};

TriParams<double> zeroLikeParams(const TriParams<double>& p) {
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

TanGrads zeroLikeGrads(const TanState& state) {
  TanGrads g;
  g.table = Matrixd::Zero(state.encoder.table.rows(),
                          state.encoder.table.cols());
  g.layers.reserve(state.layers.size());
  for (const TriParams<double>& p : state.layers) {
    g.layers.push_back(zeroLikeParams(p));
  }
  g.classifier_w = Matrixd::Zero(state.classifier_w.rows(),
                                 state.classifier_w.cols());
  g.classifier_b = Vectord::Zero(state.classifier_b.size());
  return g;
}

void accumulateParams(TriParams<double>& dst, const TriParams<double>& src) {
  if (src.W.size()) dst.W += src.W;
  if (src.U.size()) dst.U += src.U;
  if (src.H.size()) dst.H += src.H;
  if (src.p.size()) dst.p += src.p;
  if (src.Wt.size()) dst.Wt.vec() += src.Wt.vec();
  if (src.Uv.size()) dst.Uv += src.Uv;
  if (src.Hc.size()) dst.Hc += src.Hc;
}

void sgdStep(TriParams<double>& p, const TriParams<double>& g, double step) {
  if (p.W.size()) p.W -= step * g.W;
  if (p.U.size()) p.U -= step * g.U;
  if (p.H.size()) p.H -= step * g.H;
  if (p.p.size()) p.p -= step * g.p;
  if (p.Wt.size()) p.Wt.vec() -= step * g.Wt.vec();
  if (p.Uv.size()) p.Uv -= step * g.Uv;
  if (p.Hc.size()) p.Hc -= step * g.Hc;
}

// Cross-entropy loss of the cached forward pass; accumulates parameter
// gradients into `grads`.
double backwardPass(const TanState& state, const TanConfig& config,
                    const ForwardCache& cache, int label, TanGrads& grads) {
  const Index d = config.embed_dim;
  const double loss = -std::log(cache.probs[label]);

  Vectord dlogits = cache.probs;
  dlogits[label] -= 1.0;
  grads.classifier_w += dlogits * cache.dropped.transpose();
  grads.classifier_b += dlogits;

  Vectord dfeat = state.classifier_w.transpose() * dlogits;
  if (cache.mask.size()) dfeat = dfeat.cwiseProduct(cache.mask);

  Vectord dpa = dfeat.segment(0, d);
  Vectord dpb = dfeat.segment(d, d);
  Vectord dpc = dfeat.segment(2 * d, d);
  const Vectord ddiff = dfeat.segment(3 * d, d);
  const Vectord sign = (cache.pa - cache.pb).array().sign();
  dpa += ddiff.cwiseProduct(sign);
  dpb -= ddiff.cwiseProduct(sign);

  const Index la = cache.a_seq.back().cols();
  const Index lb = cache.b_seq.back().cols();
  Matrixd da = (dpa / double(la)).replicate(1, la);
  Matrixd db = (dpb / double(lb)).replicate(1, lb);
  Matrixd dc = Matrixd::Zero(d, cache.c.cols());

  for (int l = config.layers - 1; l >= 0; --l) {
    const Matrixd& a_in = cache.a_seq[size_t(l)];
    const Matrixd& b_in = cache.b_seq[size_t(l)];
    const TriParams<double>& params = state.layers[size_t(l)];
    Matrixd da_in = Matrixd::Zero(d, a_in.cols());
    Matrixd db_in = Matrixd::Zero(d, b_in.cols());
    if (config.residual) {
      da_in += da;
      db_in += db;
    }
    if (config.mode == NetMode::Tri) {
      for (Index p = 0; p < a_in.cols(); ++p) {
        TriAdjoints adj = triAttendBackward(
            config.variant, config.integration, Vectord(a_in.col(p)), b_in,
            b_in, cache.c, params, Vectord(da.col(p)));
        da_in.col(p) += adj.q;
        db_in += adj.K + adj.V;
        dc += adj.C;
        accumulateParams(grads.layers[size_t(l)], adj.params);
      }
      for (Index p = 0; p < b_in.cols(); ++p) {
        TriAdjoints adj = triAttendBackward(
            config.variant, config.integration, Vectord(b_in.col(p)), a_in,
            a_in, cache.c, params, Vectord(db.col(p)));
        db_in.col(p) += adj.q;
        da_in += adj.K + adj.V;
        dc += adj.C;
        accumulateParams(grads.layers[size_t(l)], adj.params);
      }
    } else {
      const BiVariant variant = matchedBiVariant(config.variant);
      const BiParams<double> bp = biView(params);
      TriParams<double>& lg = grads.layers[size_t(l)];
      for (Index p = 0; p < a_in.cols(); ++p) {
        BiAdjoints adj = biAttendBackward(variant, Vectord(a_in.col(p)), b_in,
                                          b_in, bp, Vectord(da.col(p)));
        da_in.col(p) += adj.q;
        db_in += adj.K + adj.V;
        if (adj.params.W.size()) lg.W += adj.params.W;
        if (adj.params.U.size()) lg.U += adj.params.U;
        if (adj.params.p.size()) lg.p += adj.params.p;
      }
      for (Index p = 0; p < b_in.cols(); ++p) {
        BiAdjoints adj = biAttendBackward(variant, Vectord(b_in.col(p)), a_in,
                                          a_in, bp, Vectord(db.col(p)));
        db_in.col(p) += adj.q;
        da_in += adj.K + adj.V;
        if (adj.params.W.size()) lg.W += adj.params.W;
        if (adj.params.U.size()) lg.U += adj.params.U;
        if (adj.params.p.size()) lg.p += adj.params.p;
      }
    }
    da = std::move(da_in);
    db = std::move(db_in);
  }

  if (config.mode == NetMode::CBi) {
    // The pooled context was added to every position before the stack.
    dpc += da.rowwise().sum() + db.rowwise().sum();
  }
  dc.colwise() += dpc / double(cache.c.cols());

  for (Index p = 0; p < Index(cache.ta.size()); ++p) {
    grads.table.col(cache.ta[size_t(p)]) += da.col(p);
  }
  for (Index p = 0; p < Index(cache.tb.size()); ++p) {
    grads.table.col(cache.tb[size_t(p)]) += db.col(p);
  }
  if (cache.context_from_tokens) {
    for (Index p = 0; p < Index(cache.tc.size()); ++p) {
      grads.table.col(cache.tc[size_t(p)]) += dc.col(p);
    }
  }
  return loss;
}

}  // namespace

Matrixd ToyEncoder::encode(const std::vector<int>& tokens) const {
  Matrixd out(embed_dim, Index(tokens.size()));
  for (Index t = 0; t < Index(tokens.size()); ++t) {
    const int id = tokens[size_t(t)];
    if (id < 0 || id >= vocab_size) {
      throw std::invalid_argument("ToyEncoder::encode: token id " +
                                  std::to_string(id) +
                                  " outside vocab of size " +
                                  std::to_string(vocab_size));
    }
    out.col(t) = table.col(id);
  }
  return out;
}

void validateConfig(const TanConfig& config) {
  if (config.layers < 1 || config.layers > 8) {
    throw std::invalid_argument("TanConfig: layers must be in 1..8, got " +
                                std::to_string(config.layers));
  }
  if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0)) {
    throw std::invalid_argument("TanConfig: dropout_rate must be in [0, 1)");
  }
  if (config.embed_dim < 1) {
    throw std::invalid_argument("TanConfig: embed_dim must be positive");
  }
  if (config.variant == TriVariant::TriliFull &&
      config.embed_dim > kTriliFullMaxDim) {
    throw CapacityError("TanConfig: TriliFull dim " +
                        std::to_string(config.embed_dim) + " exceeds cap " +
                        std::to_string(kTriliFullMaxDim));
  }
  if (config.max_seq_len < 1) {
    throw std::invalid_argument("TanConfig: max_seq_len must be positive");
  }
  if (config.batch_size < 1) {
    throw std::invalid_argument("TanConfig: batch_size must be positive");
  }
  if (config.epochs < 1) {
    throw std::invalid_argument("TanConfig: epochs must be positive");
  }
  if (!(config.learning_rate >= 0.0) ||
      !std::isfinite(config.learning_rate)) {
    throw std::invalid_argument("TanConfig: learning_rate must be finite");
  }
}

TanState initState(const TanConfig& config, Index vocab_size) {
  validateConfig(config);
  if (vocab_size < 3) {
    throw std::invalid_argument(
        "initState: vocab must cover the special tokens");
  }
  const Index d = config.embed_dim;
  std::mt19937_64 rng(config.seed);
  const double bound = 1.0 / std::sqrt(double(d));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto fill = [&](Index rows, Index cols) {
    Matrixd m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
  };

  TanState state;
  state.encoder.vocab_size = vocab_size;
  state.encoder.embed_dim = d;
  // Unit-scale embeddings: token vectors feed three-way products, and a
  // 1/sqrt(D) table would push those scores toward zero and flatten the
  // attention grids at the start of training.
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  state.encoder.table.resize(d, vocab_size);
  for (Index j = 0; j < vocab_size; ++j)
    for (Index i = 0; i < d; ++i) state.encoder.table(i, j) = unit(rng);

  const bool tri = config.mode == NetMode::Tri;
  const BiVariant bv = matchedBiVariant(config.variant);
  for (int l = 0; l < config.layers; ++l) {
    TriParams<double> p;
    if (tri) {
      if (config.variant == TriVariant::TAdd ||
          config.variant == TriVariant::TriliEconomic) {
        p.W = fill(d, d);
        p.U = fill(d, d);
        p.H = fill(d, d);
      }
      if (config.variant == TriVariant::TAdd) {
        p.p.resize(d);
        for (Index i = 0; i < d; ++i) p.p[i] = dist(rng);
      }
      if (config.variant == TriVariant::TriliFull) {
        p.Wt = Tensor3<double>(d, d, d);
        for (Index t = 0; t < p.Wt.size(); ++t) p.Wt.vec()[t] = dist(rng);
      }
      if (config.integration == ValueIntegration::Bilinear) {
        // Unit-scale value transforms: the bilinear contextual values should
        // start at the magnitude of the raw value-context products, or the
        // value channel is too quiet to drive early training.
        p.Uv.resize(d, d);
        p.Hc.resize(d, d);
        for (Index j = 0; j < d; ++j)
          for (Index i = 0; i < d; ++i) p.Uv(i, j) = unit(rng);
        for (Index j = 0; j < d; ++j)
          for (Index i = 0; i < d; ++i) p.Hc(i, j) = unit(rng);
      }
    } else {
      if (bv == BiVariant::Add) {
        p.W = fill(d, d);
        p.U = fill(d, d);
        p.p.resize(d);
        for (Index i = 0; i < d; ++i) p.p[i] = dist(rng);
      } else if (bv == BiVariant::Bili) {
        p.W = fill(d, d);
      }
    }
    state.layers.push_back(std::move(p));
  }

  state.classifier_w = fill(2, 4 * d);
  state.classifier_b = Vectord::Zero(2);
  return state;
}

std::vector<int> filterSeq(const std::vector<int>& seq, Index max_seq_len) {
  if (Index(seq.size()) <= max_seq_len) return seq;
  return {seq.begin(), seq.begin() + max_seq_len};
}

std::vector<int> contextTokens(const std::vector<int>& a,
                               const std::vector<int>& b,
                               const ToyEncoder& encoder) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument("contextTokens: sequences must be nonempty");
  }
  std::vector<int> out;
  out.reserve(a.size() + b.size() + 3);
  out.push_back(encoder.cls_id);
  out.insert(out.end(), a.begin(), a.end());
  out.push_back(encoder.sep_id);
  out.insert(out.end(), b.begin(), b.end());
  out.push_back(encoder.sep_id);
  return out;
}

Matrixd buildContext(const std::vector<int>& a, const std::vector<int>& b,
                     const ToyEncoder& encoder) {
  return encoder.encode(contextTokens(a, b, encoder));
}

Vectord tanForward(const TanState& state, const Example& ex,
                   const TanConfig& config, bool train_mode,
                   std::mt19937_64* rng, const Matrixd* context_override) {
  return forwardPass(state, ex, config, train_mode, rng, context_override)
      .probs;
}

Vectord cBiForward(const TanState& state, const Example& ex,
                   const TanConfig& config, bool train_mode,
                   std::mt19937_64* rng) {
  TanConfig cbi = config;
  cbi.mode = NetMode::CBi;
  return tanForward(state, ex, cbi, train_mode, rng);
}

TrainResult train(const TanConfig& config, const std::vector<Example>& dataset,
                  Index vocab_size) {
  validateConfig(config);
  if (dataset.empty()) {
    throw std::invalid_argument("train: empty dataset");
  }
  for (const Example& ex : dataset) {
    if (ex.label != 0 && ex.label != 1) {
      throw std::invalid_argument("train: label out of range");
    }
  }

  TrainResult result;
  result.state = initState(config, vocab_size);
  // Decorrelated from the init stream so adding layers never reshuffles data.
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<size_t> order(dataset.size());
  for (size_t t = 0; t < order.size(); ++t) order[t] = t;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with the session rng keeps the visit order reproducible
    // across platforms.
    for (size_t t = order.size(); t > 1; --t) {
      const size_t swap = size_t(rng() % t);
      std::swap(order[t - 1], order[swap]);
    }

    double epoch_loss = 0.0;
    Index correct = 0;
    for (size_t start = 0; start < order.size();
         start += size_t(config.batch_size)) {
      const size_t stop =
          std::min(order.size(), start + size_t(config.batch_size));
      TanGrads grads = zeroLikeGrads(result.state);
      double batch_loss = 0.0;
      for (size_t t = start; t < stop; ++t) {
        const Example& ex = dataset[order[t]];
        ForwardCache cache;
        try {
          cache = forwardPass(result.state, ex, config, true, &rng, nullptr);
        } catch (const std::invalid_argument& err) {
          // Diverged parameters overflow inside the attention layers, which
          // report the non-finite values as precondition failures.
          if (std::string(err.what()).find("non-finite") !=
              std::string::npos) {
            throw NumericalError(
                "train: diverged at epoch " + std::to_string(epoch) +
                ", batch " +
                std::to_string(start / size_t(config.batch_size)) + ": " +
                err.what());
          }
          throw;
        }
        batch_loss += backwardPass(result.state, config, cache, ex.label,
                                   grads);
        Index pred = 0;
        cache.probs.maxCoeff(&pred);
        correct += pred == ex.label;
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericalError(
            "train: non-finite loss at epoch " + std::to_string(epoch) +
            ", batch " + std::to_string(start / size_t(config.batch_size)) +
            ", loss " + std::to_string(batch_loss));
      }
      epoch_loss += batch_loss;

      const double step = config.learning_rate / double(stop - start);
      result.state.encoder.table -= step * grads.table;
      for (size_t l = 0; l < result.state.layers.size(); ++l) {
        sgdStep(result.state.layers[l], grads.layers[l], step);
      }
      result.state.classifier_w -= step * grads.classifier_w;
      result.state.classifier_b -= step * grads.classifier_b;
    }

    EpochMetrics metrics;
    metrics.loss = epoch_loss / double(dataset.size());
    metrics.accuracy = double(correct) / double(dataset.size());
    result.epochs.push_back(metrics);
  }
  return result;
}

EvalMetrics evaluate(const TanState& state, const TanConfig& config,
                     const std::vector<Example>& dataset) {
  if (dataset.empty()) {
    throw std::invalid_argument("evaluate: empty dataset");
  }
  Index correct = 0, tp = 0, fp = 0, fn = 0;
  for (const Example& ex : dataset) {
    const Vectord probs = tanForward(state, ex, config, false);
    Index pred = 0;
    probs.maxCoeff(&pred);
    correct += pred == ex.label;
    tp += pred == 1 && ex.label == 1;
    fp += pred == 1 && ex.label == 0;
    fn += pred == 0 && ex.label == 1;
  }
  EvalMetrics m;
  m.accuracy = double(correct) / double(dataset.size());
  const double denom = double(2 * tp + fp + fn);
  m.f1 = denom > 0.0 ? 2.0 * double(tp) / denom : 0.0;
  return m;
}

}  // namespace triattn
