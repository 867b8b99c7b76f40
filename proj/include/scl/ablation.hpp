#pragma once

// With/without-contrastive comparison: for each derived seed, train one model
// with the contrastive term and one without (same init, same batch stream),
// and evaluate both on a held-out container.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "scl/data.hpp"
#include "scl/eval.hpp"
#include "scl/model.hpp"
#include "scl/optim.hpp"
#include "scl/random.hpp"

namespace scl {

struct AblationRun {
  std::uint64_t seed = 0;
  bool scl = false;
  MetricsReport report;
  TrainLog log;
};

struct AblationTable {
  std::vector<AblationRun> runs;  // scl arm then baseline arm, per seed
  // Mean over seeds of (scl - baseline) for accuracy, macro recall, macro
  // AUC and separation gap.
  std::array<double, 4> mean_diff{};
};

inline std::uint64_t ablation_seed(std::uint64_t base, std::size_t index) {
  return derive_seed(base, static_cast<std::uint64_t>(index));
}

inline std::array<double, 4> ablation_metrics(const MetricsReport& r) {
  return {r.accuracy, r.macro_recall, r.macro_ovr_auc.value_or(0.0),
          r.separation ? r.separation->separation_gap : 0.0};
}

inline AblationTable run_ablation(const DatasetContainer& train, const DatasetContainer& held_out,
                                  const ModelConfig& model_cfg, const TrainConfig& base_cfg,
                                  std::size_t n_seeds) {
  if (n_seeds < 1) throw ValidationError("ablation needs at least one seed");
  AblationTable table;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    for (bool scl : {true, false}) {
      TrainConfig cfg = base_cfg;
      cfg.seed = ablation_seed(base_cfg.seed, s);
      cfg.scl_enabled = scl;
      TrainResult<float> result = train_loop(train, nullptr, model_cfg, cfg);
      table.runs.push_back({cfg.seed, scl, evaluate_model(result.params, held_out), std::move(result.log)});
    }
    const auto with = ablation_metrics(table.runs[table.runs.size() - 2].report);
    const auto without = ablation_metrics(table.runs.back().report);
    for (std::size_t m = 0; m < 4; ++m) table.mean_diff[m] += (with[m] - without[m]) / static_cast<double>(n_seeds);
  }
  return table;
}

inline std::string ablation_csv(const AblationTable& table) {
  std::string out = "seed,scl,accuracy,macro_recall,macro_auc,separation_gap\n";
  for (const auto& run : table.runs) {
    const auto m = ablation_metrics(run.report);
    out += std::to_string(run.seed) + "," + (run.scl ? "1" : "0");
    for (double v : m) out += "," + format_g6(v);
    out += "\n";
  }
  out += "mean_diff,scl-baseline";
  for (double v : table.mean_diff) out += "," + format_g6(v);
  out += "\n";
  return out;
}

}  // namespace scl
