#pragma once

#include "jstn/config.hpp"
#include "jstn/data.hpp"
#include "jstn/losses.hpp"
#include "jstn/metrics.hpp"
#include "jstn/model.hpp"
#include "jstn/plr.hpp"

#include <functional>
#include <string>
#include <vector>

namespace jstn {

struct PlrEpochStats {
  int accepted_count = 0;
  double acceptance_rate = 0.0;
  double pseudo_label_precision = 0.0;
  bool has_precision = false;
  std::vector<int> per_class_accepted;
};

struct EpochReport {
  int epoch = 0;
  LossBreakdown losses;
  PlrEpochStats plr;
  bool has_interim = false;
  double interim_accuracy = 0.0;
  double wall_seconds = 0.0;
};

// One JSON line per epoch for the metrics stream. Timing is included only
// when asked for, so that identical seeded runs produce identical bytes.
std::string epoch_json_line(const EpochReport& rep, bool include_timing);

struct TrainHooks {
  std::function<void(const EpochReport&)> on_epoch;
  std::function<void(int epoch, const JstnModel&)> on_checkpoint;
};

struct TrainOutputs {
  std::vector<EpochReport> reports;
};

// The end-to-end minimax loop: per epoch, encode all domains, refresh the
// detached teachers and source weights, refine pseudo-labels, refresh
// representatives, assemble the objective with the discriminator routed
// through the gradient-reversal layer, and take one Adam step over all
// parameters. Deterministic given config + seed + data.
TrainOutputs train(JstnModel& model, const DomainBundle& data,
                   const TrainConfig& cfg, const TrainHooks& hooks = {});

ModelSpec model_spec_for(const DomainBundle& data, const TrainConfig& cfg);

std::vector<int> predict_target(const JstnModel& model, const Matrix& x);

// argmax of classify(encode(x, T)) scored against the withheld TU truth.
MetricsReport evaluate_target(const JstnModel& model, const DomainDataset& tu);

// --- ablation / sweep harness ------------------------------------------------

// The ten ablated variants, in the presentation order of the study grid.
const std::vector<std::string>& ablation_variant_names();

// Returns base with the named variant applied ("full" returns base).
TrainConfig apply_variant(const TrainConfig& base, const std::string& variant);

// A run maps (config, seed) to final TU accuracy; the harness stays agnostic
// of where data comes from.
using RunFn = std::function<double(const TrainConfig& cfg, std::uint64_t seed)>;

struct AblationRow {
  std::string variant;
  std::vector<double> accuracies;  // one per seed
  double mean_accuracy = 0.0;
  TTestResult vs_full;  // paired against the full model over seeds
  bool has_ttest = false;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;  // "full" first, then the ten variants
};

AblationTable run_ablation(const TrainConfig& base,
                           const std::vector<std::string>& variants,
                           const std::vector<std::uint64_t>& seeds,
                           const RunFn& run, int jobs = 1);

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};

// Sweepable parameters: alpha, beta, lambda, eta, gamma.
std::vector<SweepRow> run_sweep(const TrainConfig& base,
                                const std::string& param,
                                const std::vector<double>& values,
                                const std::vector<std::uint64_t>& seeds,
                                const RunFn& run, int jobs = 1);

}  // namespace jstn
