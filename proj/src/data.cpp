#include "triattn/data.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace triattn {

namespace {

// All randomness below uses raw engine draws (modulo for ints, explicit
// mantissa scaling for reals) so the byte stream never depends on how a
// standard distribution is implemented.
double unitReal(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

std::vector<int> balancedLabels(Index n, std::mt19937_64& rng) {
  std::vector<int> labels(size_t(n), 0);
  for (Index t = 0; t < n / 2; ++t) labels[size_t(t)] = 1;
  for (size_t t = labels.size(); t > 1; --t) {
    std::swap(labels[t - 1], labels[size_t(rng() % t)]);
  }
  return labels;
}

std::vector<int> drawPayload(Index length, Index vocab_size,
                             std::mt19937_64& rng) {
  std::vector<int> payload(static_cast<size_t>(length));
  const std::uint64_t span = std::uint64_t(vocab_size - kFirstContentId);
  for (int& token : payload) {
    token = kFirstContentId + int(rng() % span);
  }
  return payload;
}

std::vector<Example> genSplit(const SyntheticSpec& spec, Index n,
                              std::mt19937_64& rng) {
  const std::vector<int> labels = balancedLabels(n, rng);
  const Index payload_len = spec.seq_len - 1;
  std::vector<Example> out;
  out.reserve(size_t(n));
  for (Index t = 0; t < n; ++t) {
    const int gate = rng() % 2 == 0 ? kGate0 : kGate1;
    const int label = labels[size_t(t)];
    const bool follow = unitReal(rng) < spec.gate_strength;
    // label = equal XOR (gate == kGate1) when the rule is followed.
    bool equal = (label == 1) != (gate == kGate1);
    if (!follow) equal = !equal;

    Example ex;
    ex.label = label;
    std::vector<int> payload_a = drawPayload(payload_len, spec.vocab_size, rng);
    std::vector<int> payload_b;
    if (equal) {
      payload_b = payload_a;
    } else {
      payload_b = drawPayload(payload_len, spec.vocab_size, rng);
      if (payload_b == payload_a) {
        // Force at least one differing position.
        int& last = payload_b.back();
        last = kFirstContentId +
               (last - kFirstContentId + 1) %
                   int(spec.vocab_size - kFirstContentId);
      }
    }
    ex.seq_a.reserve(size_t(spec.seq_len));
    ex.seq_a.push_back(gate);
    ex.seq_a.insert(ex.seq_a.end(), payload_a.begin(), payload_a.end());
    ex.seq_b.reserve(size_t(spec.seq_len));
    ex.seq_b.push_back(gate);
    ex.seq_b.insert(ex.seq_b.end(), payload_b.begin(), payload_b.end());
    out.push_back(std::move(ex));
  }
  return out;
}

bool payloadsEqual(const Example& ex) {
  return std::equal(ex.seq_a.begin() + 1, ex.seq_a.end(),
                    ex.seq_b.begin() + 1, ex.seq_b.end());
}

double payloadOverlap(const Example& ex) {
  const std::set<int> a(ex.seq_a.begin() + 1, ex.seq_a.end());
  const std::set<int> b(ex.seq_b.begin() + 1, ex.seq_b.end());
  std::vector<int> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(common));
  const size_t united = a.size() + b.size() - common.size();
  return united == 0 ? 0.0 : double(common.size()) / double(united);
}

void checkExample(const Example& ex) {
  if (ex.seq_a.size() < 2 || ex.seq_b.size() < 2) {
    throw std::invalid_argument(
        "example needs a gate token plus payload on both sides");
  }
  if (ex.seq_a.front() != kGate0 && ex.seq_a.front() != kGate1) {
    throw std::invalid_argument("example does not start with a gate token");
  }
}

}  // namespace

Dataset genSynthetic(const SyntheticSpec& spec) {
  if (spec.seq_len < 3) {
    throw std::invalid_argument(
        "genSynthetic: seq_len must be at least 3 (gate + 2 payload tokens)");
  }
  if (spec.vocab_size < kFirstContentId + 2) {
    throw std::invalid_argument(
        "genSynthetic: vocab must hold the specials plus 2 content tokens");
  }
  if (!(spec.gate_strength > 0.5 && spec.gate_strength <= 1.0)) {
    throw std::invalid_argument(
        "genSynthetic: gate_strength must lie in (0.5, 1]");
  }
  if (spec.n_train < 1 || spec.n_test < 1) {
    throw std::invalid_argument("genSynthetic: both splits must be nonempty");
  }
  std::mt19937_64 rng(spec.seed);
  Dataset data;
  data.train = genSplit(spec, spec.n_train, rng);
  data.test = genSplit(spec, spec.n_test, rng);
  return data;
}

double ruleOracleAccuracy(const std::vector<Example>& data) {
  if (data.empty()) {
    throw std::invalid_argument("ruleOracleAccuracy: empty dataset");
  }
  Index correct = 0;
  for (const Example& ex : data) {
    checkExample(ex);
    const bool equal = payloadsEqual(ex);
    const int pred = (equal != (ex.seq_a.front() == kGate1)) ? 1 : 0;
    correct += pred == ex.label;
  }
  return double(correct) / double(data.size());
}

double overlapBaselineAccuracy(const std::vector<Example>& train,
                               const std::vector<Example>& test) {
  if (train.empty() || test.empty()) {
    throw std::invalid_argument("overlapBaselineAccuracy: empty split");
  }
  std::vector<double> scores;
  scores.reserve(train.size());
  for (const Example& ex : train) scores.push_back(payloadOverlap(ex));

  // Candidate cuts: below everything, above everything, and between each
  // adjacent pair of distinct train scores.
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> cuts{sorted.front() - 1.0, sorted.back() + 1.0};
  for (size_t t = 0; t + 1 < sorted.size(); ++t) {
    cuts.push_back(0.5 * (sorted[t] + sorted[t + 1]));
  }

  double best_cut = cuts.front();
  bool best_high_is_one = true;
  Index best_correct = -1;
  for (const double cut : cuts) {
    for (const bool high_is_one : {true, false}) {
      Index correct = 0;
      for (size_t t = 0; t < train.size(); ++t) {
        const int pred = (scores[t] > cut) == high_is_one ? 1 : 0;
        correct += pred == train[t].label;
      }
      if (correct > best_correct) {
        best_correct = correct;
        best_cut = cut;
        best_high_is_one = high_is_one;
      }
    }
  }

  Index correct = 0;
  for (const Example& ex : test) {
    const int pred =
        (payloadOverlap(ex) > best_cut) == best_high_is_one ? 1 : 0;
    correct += pred == ex.label;
  }
  return double(correct) / double(test.size());
}

void writeJsonl(const std::string& path, const std::vector<Example>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("writeJsonl: cannot open " + path);
  }
  for (const Example& ex : data) {
    nlohmann::json line;
    line["seq_a"] = ex.seq_a;
    line["seq_b"] = ex.seq_b;
    line["label"] = ex.label;
    out << line.dump() << '\n';
  }
  if (!out) {
    throw std::runtime_error("writeJsonl: write failed on " + path);
  }
}

std::vector<Example> readJsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("readJsonl: cannot open " + path);
  }
  std::vector<Example> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& err) {
      throw std::runtime_error("readJsonl: " + path + " line " +
                               std::to_string(lineno) + ": " + err.what());
    }
    if (!parsed.contains("seq_a") || !parsed.contains("seq_b") ||
        !parsed.contains("label")) {
      throw std::runtime_error("readJsonl: " + path + " line " +
                               std::to_string(lineno) +
                               ": missing seq_a, seq_b, or label");
    }
    Example ex;
    ex.seq_a = parsed["seq_a"].get<std::vector<int>>();
    ex.seq_b = parsed["seq_b"].get<std::vector<int>>();
    ex.label = parsed["label"].get<int>();
    if (ex.label != 0 && ex.label != 1) {
      throw std::runtime_error("readJsonl: " + path + " line " +
                               std::to_string(lineno) + ": label out of range");
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace triattn
