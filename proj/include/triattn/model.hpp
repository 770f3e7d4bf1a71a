#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "triattn/names.hpp"
#include "triattn/tri_attention.hpp"

namespace triattn {

// Embedding-table encoder standing in for a pretrained sequence encoder;
// it isolates the attention mechanism under test.
struct ToyEncoder {
  Index vocab_size = 0;
  Index embed_dim = 0;
  Matrixd table;  // embed_dim x vocab_size
  int pad_id = 0;
  int cls_id = 1;
  int sep_id = 2;

  // Column t is the table column of tokens[t].
  Matrixd encode(const std::vector<int>& tokens) const;
};

struct TanConfig {
  NetMode mode = NetMode::Tri;
  TriVariant variant = TriVariant::TDP;
  ValueIntegration integration = ValueIntegration::Multiplicative;
  int layers = 1;          // interaction stack depth, 1..8
  Index embed_dim = 16;    // D
  Index max_seq_len = 16;  // filter cap
  double dropout_rate = 0.1;  // applied to the aggregation concat only
  bool residual = false;
  std::uint64_t seed = 1;
  double learning_rate = 0.1;
  int batch_size = 32;
  int epochs = 10;
};

// All learnable parameters. In bi / c-bi modes each layer's W, U, p double
// as the matched bi-variant's parameters.
struct TanState {
  ToyEncoder encoder;
  std::vector<TriParams<double>> layers;
  Matrixd classifier_w;  // 2 x 4D over [pool(a); pool(b); pool(C); |diff|]
  Vectord classifier_b;  // 2
};

struct Example {
  std::vector<int> seq_a;
  std::vector<int> seq_b;
  int label = 0;  // class index in {0, 1}
};

struct EpochMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  TanState state;
  std::vector<EpochMetrics> epochs;
};

struct EvalMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;  // for class 1
};

// Throws std::invalid_argument (or CapacityError for TriliFull dims) on a
// config violating its invariants.
void validateConfig(const TanConfig& config);

// Fresh parameters: uniform(-1/sqrt(D), 1/sqrt(D)) matrices, zero biases and
// zero p vectors, deterministic per config.seed.
TanState initState(const TanConfig& config, Index vocab_size);

// Head-keeping truncation to max_seq_len.
std::vector<int> filterSeq(const std::vector<int>& seq, Index max_seq_len);

// [CLS] a... [SEP] b... [SEP]; both sequences must be nonempty.
std::vector<int> contextTokens(const std::vector<int>& a,
                               const std::vector<int>& b,
                               const ToyEncoder& encoder);

// Encoded context matrix C (D x J) for the concatenated token sequence.
Matrixd buildContext(const std::vector<int>& a, const std::vector<int>& b,
                     const ToyEncoder& encoder);

// Class probabilities for one example. `rng` is consumed only when
// train_mode is set and dropout_rate > 0. `context_override`, when given,
// replaces the built context everywhere it is used (attention, pooling, and
// the c-bi shift); it exists so degenerate contexts can be injected.
Vectord tanForward(const TanState& state, const Example& ex,
                   const TanConfig& config, bool train_mode,
                   std::mt19937_64* rng = nullptr,
                   const Matrixd* context_override = nullptr);

// The same pipeline with pool(C) added to every sequence position followed
// by standard bi-attention (no context dimension in the scores).
Vectord cBiForward(const TanState& state, const Example& ex,
                   const TanConfig& config, bool train_mode,
                   std::mt19937_64* rng = nullptr);

// Minibatch SGD with cross-entropy loss; deterministic per config.seed.
// Throws NumericalError with epoch/batch diagnostics if the loss leaves the
// finite range.
TrainResult train(const TanConfig& config, const std::vector<Example>& dataset,
                  Index vocab_size);

EvalMetrics evaluate(const TanState& state, const TanConfig& config,
                     const std::vector<Example>& dataset);

}  // namespace triattn
