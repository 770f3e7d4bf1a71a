#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "triattn/model.hpp"

namespace triattn {

// Token id layout shared by the generator and the toy encoder.
inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kSepId = 2;
inline constexpr int kGate0 = 3;
inline constexpr int kGate1 = 4;
inline constexpr int kFirstContentId = 5;

// Context-gated pair task. Both sequences start with the same gate token;
// the rest is payload. Under gate kGate0 the label says "payloads equal",
// under kGate1 it says "payloads differ". gate_strength is the probability
// an example follows that rule; the remainder are constructed against it, so
// accuracy above gate_strength is unreachable.
struct SyntheticSpec {
  Index vocab_size = 50;
  Index seq_len = 8;  // gate + payload
  Index n_train = 2000;
  Index n_test = 500;
  double gate_strength = 1.0;
  std::uint64_t seed = 7;
};

struct Dataset {
  std::vector<Example> train;
  std::vector<Example> test;
};

// Deterministic per spec.seed. Labels are balanced within each split
// (counts differ by at most one). Throws std::invalid_argument when the
// spec leaves no room for payload or content tokens, or when
// gate_strength leaves (0.5, 1].
Dataset genSynthetic(const SyntheticSpec& spec);

// Accuracy of the generating rule itself: read the gate, compare payloads,
// label accordingly. Equals gate_strength in expectation.
double ruleOracleAccuracy(const std::vector<Example>& data);

// Accuracy on `test` of the best threshold-plus-polarity classifier over
// payload token overlap, fit on `train`. The gate makes overlap
// uninformative, so this hovers near chance.
double overlapBaselineAccuracy(const std::vector<Example>& train,
                               const std::vector<Example>& test);

// One JSON object per line: {"seq_a": [...], "seq_b": [...], "label": 0|1}.
void writeJsonl(const std::string& path, const std::vector<Example>& data);
std::vector<Example> readJsonl(const std::string& path);

}  // namespace triattn
