#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "triattn/data.hpp"
#include "triattn/model.hpp"
#include "triattn/names.hpp"

namespace triattn {

// One (mechanism, variant) cell of the comparison grid.
struct AblationCell {
  NetMode mode = NetMode::Tri;
  TriVariant variant = TriVariant::TDP;
  ValueIntegration integration = ValueIntegration::Multiplicative;
  int layers = 1;
};

// Aggregate over seeds for one cell. A training abort in any seed marks the
// whole cell failed; the numeric fields are then meaningless and the CSV
// leaves them empty.
struct CellResult {
  AblationCell cell;
  int seeds = 0;
  bool failed = false;
  std::string error;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_f1 = 0.0;
};

struct AblationReport {
  std::vector<CellResult> rows;
};

// Shared training settings for the flagship comparison. Tuned so that every
// mechanism row finishes on a laptop CPU while the grid still separates the
// context-aware scores from the context-free baselines.
TanConfig defaultAblationConfig();

// Default seeds for aggregate rows: five runs per cell.
std::vector<std::uint64_t> defaultSeeds();

// Bi / C-Bi / Tri for each scored variant at its default integration.
// The trilinear row uses the economic form; its full-tensor sibling scales
// cubically in D and adds nothing to a desk-scale comparison.
std::vector<AblationCell> defaultAblationGrid();

// Trains and evaluates each cell once per seed on a dataset generated from
// spec, in parallel up to threadBudget() workers. Row order follows the grid.
AblationReport runAblation(const std::vector<AblationCell>& grid,
                           const TanConfig& base, const SyntheticSpec& spec,
                           const std::vector<std::uint64_t>& seeds);

// Tri-mode accuracy per layer count for every variant (all five scores,
// default integrations). layer_counts must lie in 1..8.
AblationReport runLayerSweep(const TanConfig& base, const SyntheticSpec& spec,
                             const std::vector<int>& layer_counts,
                             const std::vector<std::uint64_t>& seeds);

// Header: mechanism,variant,integration,layers,seeds,status,mean_accuracy,
// std_accuracy,mean_f1. Fixed six-decimal formatting keeps the bytes stable
// across runs with the same seeds.
std::string ablationCsv(const AblationReport& report);

// Header: variant,integration,layers,seeds,status,mean_accuracy,std_accuracy.
std::string sweepCsv(const AblationReport& report);

// Plot data: one block per variant ("# name" comment, blank-line separated),
// rows "layers mean_accuracy". Failed cells are dropped from their block.
std::string sweepPlotData(const AblationReport& report);

// Worker cap: hardware concurrency clamped by the TRIATTN_THREADS env var.
int threadBudget();

}  // namespace triattn
