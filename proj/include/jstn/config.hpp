#pragma once

#include "jstn/common.hpp"

#include <string>

namespace jstn {

// All training hyperparameters. Defaults follow the reference setting:
// alpha 0.1, beta 0.004, lambda 0.001, gamma 0.1, eta 0.001, T1 10, T2 5,
// d_c 3, 1000 epochs. Serialises to a flat key=value file that round-trips
// through the echo text.
struct TrainConfig {
  // objective coefficients
  double alpha = 0.1;
  double beta = 0.004;
  double lambda = 0.001;
  double gamma = 0.1;
  double eta = 0.001;
  double t1 = 10.0;
  double t2 = 5.0;

  // architecture
  int d_c = 3;
  int hidden = 128;
  int r_reps = 3;
  double leaky_slope = 0.01;

  // optimisation
  int epochs = 1000;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int minibatch = 0;  // 0 = full batch

  // target split
  int ratio_labeled = 1;
  int ratio_unlabeled = 10;
  bool stratified = true;

  // ablation switches
  bool no_weighting = false;   // omega_sn = omega_si = 1
  bool no_plr = false;         // pseudo-label every TU instance with y_nn
  bool sni_only = false;       // drop the SI source and everything it feeds
  bool sii_only = false;       // drop the SN source
  bool target_only = false;    // supervised baseline: E_T + C on TL alone
  bool literal_paper_normalization = false;

  // bookkeeping
  int checkpoint_every = 100;  // 0 = only the final checkpoint
  int eval_interim_every = 0;  // 0 = never touch TU truth during training
  bool log_timing = false;     // add wall_seconds to the metrics stream
  int kmeans_max_iter = 50;
  double kmeans_tol = 1e-6;

  void validate() const;

  // "key=value" with a dotted-free flat schema; unknown keys are errors.
  void apply_override(const std::string& key, const std::string& value);

  std::string echo() const;  // canonical text; parse(echo()) == *this
  static TrainConfig parse_text(const std::string& text);
  static TrainConfig from_file(const std::string& path);

  std::uint64_t hash() const { return fnv1a(echo()); }
};

}  // namespace jstn
