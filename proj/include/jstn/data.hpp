#pragma once

#include "jstn/common.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace jstn {

enum class DomainRole { SN, SI, TL, TU, T };

const char* domain_role_name(DomainRole r);
DomainRole parse_domain_role(const std::string& s);

struct DomainDataset {
  std::string name;
  DomainRole role = DomainRole::T;
  Matrix X;                 // n x d
  std::vector<int> y;       // 1-based labels; empty for TU
  std::vector<int> y_eval;  // withheld TU truth, evaluation only
  Vector feature_mean;      // set once normalised
  Vector feature_std;
  bool normalized = false;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
};

struct CsvSchema {
  std::string label_column;
  std::vector<std::string> feature_columns;
  std::map<std::string, int> class_map;  // class name -> 1-based id
  char delimiter = ',';
};

DomainDataset load_csv(const std::string& path, const CsvSchema& schema,
                       const std::string& name, DomainRole role);

// Values written with 17 significant digits, so a save/load round-trip is
// bit-exact.
void save_csv(const DomainDataset& ds, const std::string& path,
              const CsvSchema& schema);

struct NormStats {
  Vector mean;
  Vector std;
};

// Per-feature stats; zero-variance features keep std 1 so they pass through
// centered.
NormStats compute_norm_stats(const DomainDataset& ds);
void apply_norm(const NormStats& stats, DomainDataset& ds);

struct SplitSpec {
  int ratio_labeled = 1;
  int ratio_unlabeled = 10;
  bool stratified = true;
  std::uint64_t seed = 0;
};

// Stratified labelled/unlabelled split of a fully labelled target domain.
// TU keeps its truth in y_eval only.
std::pair<DomainDataset, DomainDataset> split_target(const DomainDataset& full,
                                                     const SplitSpec& spec);

// Seeded uniform stratified subsample of n_keep instances.
DomainDataset subsample_stratified(const DomainDataset& ds, long n_keep,
                                   std::uint64_t seed);

struct SynthSpec {
  int d_sn = 12;
  int d_si = 8;
  int d_t = 10;
  int num_classes = 5;
  int per_class_sn = 200;
  int per_class_si = 200;
  int per_class_t = 200;
  int latent_dim = 6;
  int modes_per_class = 1;     // sub-clusters per class, interleaved
  double separation = 4.0;     // min mode-center distance in cluster_std units
  double cluster_std = 1.0;    // latent per-instance spread
  double class_jitter = 0.0;   // per-domain, per-mode latent offset scale
  double domain_shift = 0.0;   // per-domain additive offset scale
  double feature_noise = 0.0;  // observation noise after projection
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthResult {
  DomainDataset sn;
  DomainDataset si;
  DomainDataset target_full;  // labelled; split into TL/TU downstream
  Matrix latent_centers;      // (K * modes) x latent_dim, diagnostics
  std::vector<int> center_class;  // class id per latent center row
};

// K Gaussian clusters sharing one latent class geometry, viewed by each
// domain through its own distance-preserving linear map plus shift and noise.
SynthResult synth_domains(const SynthSpec& spec);

SynthSpec preset_synth(const std::string& name, std::uint64_t seed);

// --- manifest ---------------------------------------------------------------

struct ManifestDomain {
  std::string path;
  DomainRole role = DomainRole::T;
  std::string label_column;
  std::vector<std::string> feature_columns;
  char delimiter = ',';
  long subsample = 0;  // 0 = keep everything
};

struct Manifest {
  std::map<std::string, int> class_map;
  std::vector<ManifestDomain> domains;
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

// All four domains ready for training.
struct DomainBundle {
  DomainDataset sn;
  DomainDataset si;
  DomainDataset tl;
  DomainDataset tu;
  int num_classes = 0;
};

// Loads, subsamples, splits (role T via the split spec) and z-scores each
// domain on its own statistics.
DomainBundle load_bundle(const Manifest& m, const SplitSpec& split,
                         bool normalize = true);

DomainBundle bundle_from_synth(const SynthResult& synth, const SplitSpec& split,
                               bool normalize = true);

}  // namespace jstn
