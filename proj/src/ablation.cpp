#include "triattn/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <thread>

namespace triattn {

namespace {

CellResult runCell(const AblationCell& cell, const TanConfig& base,
                   const Dataset& data, Index vocab_size,
                   const std::vector<std::uint64_t>& seeds) {
  CellResult result;
  result.cell = cell;
  result.seeds = int(seeds.size());
  std::vector<double> accs;
  std::vector<double> f1s;
  try {
    for (std::uint64_t seed : seeds) {
      TanConfig cfg = base;
      cfg.mode = cell.mode;
      cfg.variant = cell.variant;
      cfg.integration = cell.integration;
      cfg.layers = cell.layers;
      cfg.seed = seed;
      TrainResult trained = train(cfg, data.train, vocab_size);
      EvalMetrics metrics = evaluate(trained.state, cfg, data.test);
      accs.push_back(metrics.accuracy);
      f1s.push_back(metrics.f1);
    }
  } catch (const std::exception& err) {
    result.failed = true;
    result.error = err.what();
    return result;
  }
  const double n = double(accs.size());
  double mean = 0.0;
  double sq = 0.0;
  double f1 = 0.0;
  for (double a : accs) {
    mean += a;
    sq += a * a;
  }
  for (double f : f1s) f1 += f;
  mean /= n;
  result.mean_accuracy = mean;
  result.std_accuracy = std::sqrt(std::max(sq / n - mean * mean, 0.0));
  result.mean_f1 = f1 / n;
  return result;
}

void runGrid(const std::vector<AblationCell>& grid, const TanConfig& base,
             const Dataset& data, Index vocab_size,
             const std::vector<std::uint64_t>& seeds,
             std::vector<CellResult>& rows) {
  rows.resize(grid.size());
  const int workers =
      int(std::min<std::size_t>(std::size_t(threadBudget()), grid.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      rows[i] = runCell(grid[i], base, data, vocab_size, seeds);
    }
    return;
  }
  // Each worker claims whole cells; a cell's result lands in its own slot,
  // so assembly order never depends on scheduling.
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < grid.size();
         i = next.fetch_add(1)) {
      rows[i] = runCell(grid[i], base, data, vocab_size, seeds);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();
}

void appendNumber(std::string& out, double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  out += buf;
}

void appendAggregate(std::string& out, const CellResult& row) {
  out += std::to_string(row.cell.layers);
  out += ',';
  out += std::to_string(row.seeds);
  out += ',';
  out += row.failed ? "failed" : "ok";
  out += ',';
  if (!row.failed) appendNumber(out, row.mean_accuracy);
  out += ',';
  if (!row.failed) appendNumber(out, row.std_accuracy);
}

}  // namespace

TanConfig defaultAblationConfig() {
  TanConfig cfg;
  cfg.layers = 1;
  cfg.embed_dim = 6;
  cfg.max_seq_len = 8;
  cfg.dropout_rate = 0.1;
  cfg.learning_rate = 0.3;
  cfg.batch_size = 32;
  cfg.epochs = 14;
  return cfg;
}

std::vector<std::uint64_t> defaultSeeds() { return {1, 2, 3, 4, 5}; }

std::vector<AblationCell> defaultAblationGrid() {
  std::vector<AblationCell> grid;
  for (TriVariant v : {TriVariant::TAdd, TriVariant::TDP, TriVariant::TSDP,
                       TriVariant::TriliEconomic}) {
    for (NetMode mode : {NetMode::Bi, NetMode::CBi, NetMode::Tri}) {
      grid.push_back({mode, v, defaultIntegration(v), 1});
    }
  }
  return grid;
}

AblationReport runAblation(const std::vector<AblationCell>& grid,
                           const TanConfig& base, const SyntheticSpec& spec,
                           const std::vector<std::uint64_t>& seeds) {
  if (grid.empty()) {
    throw std::invalid_argument("runAblation: empty grid");
  }
  if (seeds.empty()) {
    throw std::invalid_argument("runAblation: empty seed list");
  }
  const Dataset data = genSynthetic(spec);
  AblationReport report;
  runGrid(grid, base, data, spec.vocab_size, seeds, report.rows);
  return report;
}

AblationReport runLayerSweep(const TanConfig& base, const SyntheticSpec& spec,
                             const std::vector<int>& layer_counts,
                             const std::vector<std::uint64_t>& seeds) {
  if (layer_counts.empty()) {
    throw std::invalid_argument("runLayerSweep: empty layer list");
  }
  for (int n : layer_counts) {
    if (n < 1 || n > 8) {
      throw std::invalid_argument("runLayerSweep: layer count outside 1..8");
    }
  }
  if (seeds.empty()) {
    throw std::invalid_argument("runLayerSweep: empty seed list");
  }
  std::vector<AblationCell> grid;
  for (TriVariant v :
       {TriVariant::TAdd, TriVariant::TDP, TriVariant::TSDP,
        TriVariant::TriliFull, TriVariant::TriliEconomic}) {
    for (int n : layer_counts) {
      grid.push_back({NetMode::Tri, v, defaultIntegration(v), n});
    }
  }
  const Dataset data = genSynthetic(spec);
  AblationReport report;
  runGrid(grid, base, data, spec.vocab_size, seeds, report.rows);
  return report;
}

std::string ablationCsv(const AblationReport& report) {
  std::string out =
      "mechanism,variant,integration,layers,seeds,status,mean_accuracy,"
      "std_accuracy,mean_f1\n";
  for (const CellResult& row : report.rows) {
    out += modeName(row.cell.mode);
    out += ',';
    if (row.cell.mode == NetMode::Tri) {
      out += variantName(row.cell.variant);
      out += ',';
      out += integrationName(row.cell.integration);
    } else {
      out += biVariantName(matchedBiVariant(row.cell.variant));
      out += ",-";
    }
    out += ',';
    appendAggregate(out, row);
    out += ',';
    if (!row.failed) appendNumber(out, row.mean_f1);
    out += '\n';
  }
  return out;
}

std::string sweepCsv(const AblationReport& report) {
  std::string out =
      "variant,integration,layers,seeds,status,mean_accuracy,std_accuracy\n";
  for (const CellResult& row : report.rows) {
    out += variantName(row.cell.variant);
    out += ',';
    out += integrationName(row.cell.integration);
    out += ',';
    appendAggregate(out, row);
    out += '\n';
  }
  return out;
}

std::string sweepPlotData(const AblationReport& report) {
  std::string out;
  const char* current = nullptr;
  for (const CellResult& row : report.rows) {
    const char* name = variantName(row.cell.variant);
    if (current == nullptr || std::string(current) != name) {
      if (current != nullptr) out += '\n';
      out += "# ";
      out += name;
      out += '\n';
      current = name;
    }
    if (row.failed) continue;
    out += std::to_string(row.cell.layers);
    out += ' ';
    appendNumber(out, row.mean_accuracy);
    out += '\n';
  }
  return out;
}

int threadBudget() {
  const unsigned hw = std::thread::hardware_concurrency();
  long budget = hw ? long(hw) : 1;
  if (const char* cap = std::getenv("TRIATTN_THREADS")) {
    char* end = nullptr;
    const long parsed = std::strtol(cap, &end, 10);
    if (end != cap && *end == '\0' && parsed >= 1) {
      budget = std::min(budget, parsed);
    }
  }
  return int(std::max(budget, 1L));
}

}  // namespace triattn
