#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "triattn/bi_attention.hpp"
#include "triattn/model.hpp"

using namespace triattn;

namespace {

TanConfig baseConfig() {
  TanConfig cfg;
  cfg.mode = NetMode::Tri;
  cfg.variant = TriVariant::TDP;
  cfg.integration = ValueIntegration::Multiplicative;
  cfg.layers = 1;
  cfg.embed_dim = 6;
  cfg.max_seq_len = 8;
  cfg.dropout_rate = 0.0;
  cfg.seed = 11;
  return cfg;
}

// Equality-of-payload task small enough for full-batch descent.
std::vector<Example> toyDataset() {
  return {
      {{5, 6}, {5, 6}, 1},
      {{7, 8}, {7, 8}, 1},
      {{5, 6}, {7, 8}, 0},
      {{7, 8}, {5, 6}, 0},
  };
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("encode copies table columns verbatim") {
    ToyEncoder enc;
    enc.vocab_size = 5;
    enc.embed_dim = 3;
    enc.table = Matrixd::Zero(3, 5);
    for (Index j = 0; j < 5; ++j) enc.table.col(j).setConstant(double(j));
    const Matrixd out = enc.encode({4, 0, 2});
    CHECK(out.cols() == 3);
    CHECK(out.col(0) == enc.table.col(4));
    CHECK(out.col(1) == enc.table.col(0));
    CHECK(out.col(2) == enc.table.col(2));
  }

  TEST_CASE("encode rejects ids outside the vocab") {
    ToyEncoder enc;
    enc.vocab_size = 4;
    enc.embed_dim = 2;
    enc.table = Matrixd::Zero(2, 4);
    CHECK_THROWS_AS((void)enc.encode({-1}), std::invalid_argument);
    CHECK_THROWS_AS((void)enc.encode({4}), std::invalid_argument);
  }
}

TEST_SUITE("sequence_prep") {
  TEST_CASE("filterSeq keeps short sequences and truncates long ones") {
    const std::vector<int> seq{3, 4, 5, 6, 7};
    CHECK(filterSeq(seq, 8) == seq);
    CHECK(filterSeq(seq, 5) == seq);
    CHECK(filterSeq(seq, 3) == std::vector<int>{3, 4, 5});
    CHECK(filterSeq(seq, 1) == std::vector<int>{3});
  }

  TEST_CASE("context token layout") {
    ToyEncoder enc;
    const auto tokens = contextTokens({5, 6}, {7}, enc);
    CHECK(tokens == std::vector<int>{1, 5, 6, 2, 7, 2});
  }

  TEST_CASE("context rejects empty sides") {
    ToyEncoder enc;
    CHECK_THROWS_AS((void)contextTokens({}, {7}, enc), std::invalid_argument);
    CHECK_THROWS_AS((void)contextTokens({5}, {}, enc), std::invalid_argument);
  }

  TEST_CASE("buildContext columns match the table") {
    ToyEncoder enc;
    enc.vocab_size = 9;
    enc.embed_dim = 4;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> dist(0.0, 1.0);
    enc.table = Matrixd::NullaryExpr(4, 9, [&] { return dist(rng); });
    const Matrixd c = buildContext({5, 6}, {7}, enc);
    REQUIRE(c.cols() == 6);
    CHECK(c.col(0) == enc.table.col(1));
    CHECK(c.col(1) == enc.table.col(5));
    CHECK(c.col(3) == enc.table.col(2));
    CHECK(c.col(4) == enc.table.col(7));
    CHECK(c.col(5) == enc.table.col(2));
  }
}

TEST_SUITE("config") {
  TEST_CASE("validateConfig rejects out-of-range settings") {
    TanConfig cfg = baseConfig();
    cfg.layers = 0;
    CHECK_THROWS_AS(validateConfig(cfg), std::invalid_argument);
    cfg = baseConfig();
    cfg.layers = 9;
    CHECK_THROWS_AS(validateConfig(cfg), std::invalid_argument);
    cfg = baseConfig();
    cfg.dropout_rate = 1.0;
    CHECK_THROWS_AS(validateConfig(cfg), std::invalid_argument);
    cfg = baseConfig();
    cfg.variant = TriVariant::TriliFull;
    cfg.embed_dim = 33;
    CHECK_THROWS_AS(validateConfig(cfg), CapacityError);
    cfg.embed_dim = 4;
    CHECK_NOTHROW(validateConfig(cfg));
  }

  TEST_CASE("initState is deterministic per seed and shaped by the config") {
    TanConfig cfg = baseConfig();
    const TanState s1 = initState(cfg, 10);
    const TanState s2 = initState(cfg, 10);
    CHECK(s1.encoder.table == s2.encoder.table);
    CHECK(s1.classifier_w == s2.classifier_w);
    CHECK(s1.encoder.table.rows() == cfg.embed_dim);
    CHECK(s1.encoder.table.cols() == 10);
    CHECK(s1.classifier_w.rows() == 2);
    CHECK(s1.classifier_w.cols() == 4 * cfg.embed_dim);
    CHECK(s1.classifier_b.isZero(0.0));
    REQUIRE(s1.layers.size() == 1);

    cfg.seed = 12;
    const TanState s3 = initState(cfg, 10);
    CHECK(s3.encoder.table != s1.encoder.table);
  }

  TEST_CASE("initState allocates only the blocks the cell uses") {
    TanConfig cfg = baseConfig();
    cfg.variant = TriVariant::TriliFull;
    cfg.integration = ValueIntegration::Bilinear;
    cfg.embed_dim = 4;
    const TanState full = initState(cfg, 10);
    CHECK(full.layers[0].Wt.size() == 64);
    CHECK(full.layers[0].Uv.rows() == 4);
    CHECK(full.layers[0].Hc.rows() == 4);
    CHECK(full.layers[0].W.size() == 0);

    cfg = baseConfig();
    const TanState mult = initState(cfg, 10);
    CHECK(mult.layers[0].W.size() == 0);
    CHECK(mult.layers[0].Wt.size() == 0);
    CHECK(mult.layers[0].Uv.size() == 0);

    cfg.mode = NetMode::Bi;
    cfg.variant = TriVariant::TAdd;  // matched bi variant needs W, U, p
    const TanState add = initState(cfg, 10);
    CHECK(add.layers[0].W.rows() == cfg.embed_dim);
    CHECK(add.layers[0].U.rows() == cfg.embed_dim);
    CHECK(add.layers[0].p.size() == cfg.embed_dim);
    CHECK(add.layers[0].H.size() == 0);
  }
}

TEST_SUITE("forward") {
  TEST_CASE("probabilities lie on the simplex for every mode and depth") {
    const Example ex{{5, 6, 7}, {8, 9}, 1};
    for (NetMode mode : {NetMode::Bi, NetMode::CBi, NetMode::Tri}) {
      for (int layers : {1, 2, 3}) {
        TanConfig cfg = baseConfig();
        cfg.mode = mode;
        cfg.layers = layers;
        const TanState state = initState(cfg, 12);
        const Vectord probs = tanForward(state, ex, cfg, false);
        REQUIRE(probs.size() == 2);
        CHECK(probs.minCoeff() >= 0.0);
        CHECK(std::abs(probs.sum() - 1.0) < 1e-12);
      }
    }
  }

  TEST_CASE("train-mode dropout needs an rng") {
    TanConfig cfg = baseConfig();
    cfg.dropout_rate = 0.5;
    const TanState state = initState(cfg, 12);
    const Example ex{{5}, {6}, 0};
    CHECK_THROWS_AS((void)tanForward(state, ex, cfg, true),
                    std::invalid_argument);
    CHECK_NOTHROW((void)tanForward(state, ex, cfg, false));
  }

  TEST_CASE("zero dropout leaves the rng untouched") {
    TanConfig cfg = baseConfig();
    const TanState state = initState(cfg, 12);
    const Example ex{{5}, {6}, 0};
    std::mt19937_64 rng(42);
    std::mt19937_64 before = rng;
    const Vectord train_probs = tanForward(state, ex, cfg, true, &rng);
    CHECK(rng() == before());
    const Vectord eval_probs = tanForward(state, ex, cfg, false);
    CHECK((train_probs - eval_probs).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("shape and label violations are reported") {
    TanConfig cfg = baseConfig();
    TanState state = initState(cfg, 12);
    const Example ex{{5}, {6}, 0};
    TanConfig wider = cfg;
    wider.embed_dim = cfg.embed_dim + 1;
    CHECK_THROWS_AS((void)tanForward(state, ex, wider, false), ShapeError);

    Example bad = ex;
    bad.label = 2;
    CHECK_THROWS_AS((void)tanForward(state, bad, cfg, false),
                    std::invalid_argument);

    const Matrixd narrow = Matrixd::Ones(cfg.embed_dim - 1, 1);
    CHECK_THROWS_AS((void)tanForward(state, ex, cfg, false, nullptr, &narrow),
                    ShapeError);
  }

  TEST_CASE("ones context collapses multiplicative tri onto plain bi") {
    // With a single all-ones context column the three-way dot-product scores
    // equal the two-way ones and the elementwise value blend is the identity,
    // so the whole network must reproduce its bi twin.
    const Example ex{{5, 6, 7}, {8, 9}, 1};
    for (int layers : {1, 2}) {
      TanConfig tri = baseConfig();
      tri.layers = layers;
      TanConfig bi = tri;
      bi.mode = NetMode::Bi;
      const TanState state = initState(tri, 12);  // both cells are param-free
      const Matrixd ones = Matrixd::Ones(tri.embed_dim, 1);
      const Vectord pt = tanForward(state, ex, tri, false, nullptr, &ones);
      const Vectord pb = tanForward(state, ex, bi, false, nullptr, &ones);
      CHECK((pt - pb).cwiseAbs().maxCoeff() < 1e-10);
    }
  }

  TEST_CASE("zero context collapses the contextual bi shift") {
    const Example ex{{5, 6, 7}, {8, 9}, 1};
    TanConfig cbi = baseConfig();
    cbi.mode = NetMode::CBi;
    TanConfig bi = cbi;
    bi.mode = NetMode::Bi;
    const TanState state = initState(cbi, 12);
    const Matrixd zeros = Matrixd::Zero(cbi.embed_dim, 2);
    const Vectord pc = tanForward(state, ex, cbi, false, nullptr, &zeros);
    const Vectord pb = tanForward(state, ex, bi, false, nullptr, &zeros);
    CHECK((pc - pb).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("contextual bi forward matches a straight-line transcription") {
    TanConfig cfg = baseConfig();
    cfg.mode = NetMode::CBi;
    const TanState state = initState(cfg, 12);
    const Example ex{{5, 6, 7, 8}, {9, 10}, 0};

    const auto ta = filterSeq(ex.seq_a, cfg.max_seq_len);
    const auto tb = filterSeq(ex.seq_b, cfg.max_seq_len);
    const Matrixd c = buildContext(ta, tb, state.encoder);
    const Vectord pooled_c = c.rowwise().mean();
    Matrixd a = state.encoder.encode(ta);
    Matrixd b = state.encoder.encode(tb);
    a.colwise() += pooled_c;
    b.colwise() += pooled_c;
    Matrixd a1(a.rows(), a.cols()), b1(b.rows(), b.cols());
    const BiParams<double> none;
    for (Index p = 0; p < a.cols(); ++p) {
      a1.col(p) = biAttend(BiVariant::DP, Vectord(a.col(p)), b, b, none);
    }
    for (Index p = 0; p < b.cols(); ++p) {
      b1.col(p) = biAttend(BiVariant::DP, Vectord(b.col(p)), a, a, none);
    }
    const Vectord pa = a1.rowwise().mean();
    const Vectord pb = b1.rowwise().mean();
    Vectord feat(4 * cfg.embed_dim);
    feat << pa, pb, pooled_c, (pa - pb).cwiseAbs();
    const Vectord logits = state.classifier_w * feat + state.classifier_b;
    const Vectord expect = softmaxNormalize(logits);

    const Vectord got = cBiForward(state, ex, cfg, false);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("swapping the sides mirrors the pooled feature blocks") {
    TanConfig cfg = baseConfig();
    const TanState state = initState(cfg, 12);
    TanState mirrored = state;
    const Index d = cfg.embed_dim;
    mirrored.classifier_w.middleCols(0, d) = state.classifier_w.middleCols(d, d);
    mirrored.classifier_w.middleCols(d, d) = state.classifier_w.middleCols(0, d);

    const Example ex{{5, 6, 7}, {8, 9}, 1};
    const Example swapped{ex.seq_b, ex.seq_a, ex.label};
    const Vectord p1 = tanForward(state, ex, cfg, false);
    const Vectord p2 = tanForward(mirrored, swapped, cfg, false);
    CHECK((p1 - p2).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_SUITE("training") {
  TEST_CASE("zero learning rate keeps the parameters and the loss fixed") {
    TanConfig cfg = baseConfig();
    cfg.learning_rate = 0.0;
    cfg.epochs = 3;
    cfg.batch_size = 2;
    const TrainResult r = train(cfg, toyDataset(), 12);
    const TanState fresh = initState(cfg, 12);
    CHECK(r.state.encoder.table == fresh.encoder.table);
    CHECK(r.state.classifier_w == fresh.classifier_w);
    CHECK(r.state.classifier_b == fresh.classifier_b);
    REQUIRE(r.epochs.size() == 3);
    CHECK(r.epochs[0].loss == r.epochs[1].loss);
    CHECK(r.epochs[1].loss == r.epochs[2].loss);
  }

  TEST_CASE("full-batch descent reduces the loss on a separable task") {
    TanConfig cfg = baseConfig();
    cfg.learning_rate = 2.0;
    cfg.epochs = 40;
    cfg.batch_size = 4;
    const TrainResult r = train(cfg, toyDataset(), 12);
    REQUIRE(r.epochs.size() == 40);
    for (const EpochMetrics& m : r.epochs) {
      CHECK(m.loss >= 0.0);
      CHECK(std::isfinite(m.loss));
    }
    CHECK(r.epochs.back().loss < 0.8 * r.epochs.front().loss);
  }

  TEST_CASE("training is bitwise reproducible") {
    TanConfig cfg = baseConfig();
    cfg.dropout_rate = 0.1;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    const TrainResult r1 = train(cfg, toyDataset(), 12);
    const TrainResult r2 = train(cfg, toyDataset(), 12);
    CHECK(r1.state.encoder.table == r2.state.encoder.table);
    CHECK(r1.state.classifier_w == r2.state.classifier_w);
    CHECK(r1.state.classifier_b == r2.state.classifier_b);
    REQUIRE(r1.epochs.size() == r2.epochs.size());
    for (size_t e = 0; e < r1.epochs.size(); ++e) {
      CHECK(r1.epochs[e].loss == r2.epochs[e].loss);
      CHECK(r1.epochs[e].accuracy == r2.epochs[e].accuracy);
    }
  }

  TEST_CASE("training touches every mode") {
    for (NetMode mode : {NetMode::Bi, NetMode::CBi, NetMode::Tri}) {
      TanConfig cfg = baseConfig();
      cfg.mode = mode;
      cfg.variant = TriVariant::TAdd;
      cfg.integration = ValueIntegration::Additive;
      cfg.epochs = 2;
      cfg.batch_size = 4;
      cfg.learning_rate = 0.05;
      const TrainResult r = train(cfg, toyDataset(), 12);
      CHECK(std::isfinite(r.epochs.back().loss));
    }
  }

  TEST_CASE("train validates its inputs") {
    TanConfig cfg = baseConfig();
    CHECK_THROWS_AS((void)train(cfg, {}, 12), std::invalid_argument);
    std::vector<Example> bad = toyDataset();
    bad[0].label = 3;
    CHECK_THROWS_AS((void)train(cfg, bad, 12), std::invalid_argument);
  }
}

TEST_SUITE("evaluation") {
  TEST_CASE("metrics agree with a direct recount") {
    TanConfig cfg = baseConfig();
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.learning_rate = 0.1;
    const std::vector<Example> data = toyDataset();
    const TrainResult r = train(cfg, data, 12);
    const EvalMetrics m = evaluate(r.state, cfg, data);

    Index correct = 0, tp = 0, fp = 0, fn = 0;
    for (const Example& ex : data) {
      const Vectord probs = tanForward(r.state, ex, cfg, false);
      const int pred = probs[1] > probs[0] ? 1 : 0;
      correct += pred == ex.label;
      tp += pred == 1 && ex.label == 1;
      fp += pred == 1 && ex.label == 0;
      fn += pred == 0 && ex.label == 1;
    }
    CHECK(m.accuracy == doctest::Approx(double(correct) / 4.0));
    const double denom = double(2 * tp + fp + fn);
    const double f1 = denom > 0 ? 2.0 * double(tp) / denom : 0.0;
    CHECK(m.f1 == doctest::Approx(f1));
    CHECK_THROWS_AS((void)evaluate(r.state, cfg, {}), std::invalid_argument);
  }
}
