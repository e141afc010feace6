#pragma once

#include "jstn/autodiff.hpp"
#include "jstn/common.hpp"

#include <vector>

namespace jstn {

using ad::NodePtr;

// Probabilities are clamped to [kProbEps, 1] before any log.
inline constexpr double kProbEps = 1e-12;

// Per-epoch loss decomposition; `total` is the assembled objective as seen by
// the encoder/classifier minimisation.
struct LossBreakdown {
  double l_sup = 0.0;
  double l_wis = 0.0;
  double l_hd = 0.0;
  double l_sf_sn = 0.0;
  double l_sf_si = 0.0;
  double l_esc = 0.0;
  double l_esr = 0.0;
  double l_ssd = 0.0;
  double l_ssc = 0.0;
  double omega_sn = 1.0;
  double omega_si = 1.0;
  double total = 0.0;
};

// Labels are 1-based class ids in [1, K] throughout.
std::vector<std::vector<int>> class_indices(const std::vector<int>& labels,
                                            int num_classes);
Matrix one_hot(const std::vector<int>& labels, int num_classes);
// Value-level tempered row softmax (no graph), row-max stabilised.
Matrix softmax_rows_plain(const Matrix& logits, double temperature);

// Mean cross-entropy of logits against hard labels.
NodePtr supervision_loss(const NodePtr& logits, const std::vector<int>& labels);

// Domain-adversarial BCE: source instances labelled 1, target labelled 0.
// Inputs are discriminator probabilities; outputs are clamped before log.
NodePtr scenario_discriminator_loss(const NodePtr& d_src, const NodePtr& d_tgt);

// Per-class mean tempered softmax of a labelled source batch; detached, so it
// acts as the distillation teacher.
struct SoftLabelTable {
  Matrix q;                   // K x K; row k-1 is the class-k distribution
  std::vector<bool> present;  // class had at least one instance
  double temperature = 1.0;

  double row_entropy(int class_id) const;  // -sum q log q, 1-based class_id
};

SoftLabelTable soft_label_table(const Matrix& logits,
                                const std::vector<int>& labels,
                                int num_classes, double temperature);

// Source-source distribution matching: cross-entropy of the SI per-class mean
// tempered softmax (gradient flows) against the SN teacher table, averaged
// over classes present on both sides.
NodePtr scenario_distribution_loss(const NodePtr& logits_si,
                                   const std::vector<int>& labels_si,
                                   const SoftLabelTable& teacher,
                                   int* classes_used = nullptr);

// Distillation of teacher rows onto labelled-target probabilistic outputs
// p = softmax(logits, T=1). Instances whose class lacks a teacher row are
// skipped and the mean renormalised.
NodePtr implicit_soft_loss(const NodePtr& p, const std::vector<int>& labels,
                           const SoftLabelTable& teacher,
                           int* instances_used = nullptr);

// Hard-label supervision on the labelled target; same formula as
// supervision_loss.
NodePtr implicit_hard_loss(const NodePtr& logits_tl,
                           const std::vector<int>& labels_tl);

// Mean over shared classes of the squared L2 distance between class
// centroids. literal_normalization divides class sums by the whole-side
// instance count instead of the per-class count, reproducing the formulas as
// printed.
double source_target_divergence(const Matrix& f_src,
                                const std::vector<int>& y_src,
                                const Matrix& f_tgt,
                                const std::vector<int>& y_tgt, int num_classes,
                                bool literal_normalization = false);

// omega(d) = e^d / (e^d + 1) + 0.25, monotone from 0.75 toward 1.25.
double source_weight(double divergence);

// L_WIS = (1-alpha) * l_hd + alpha * mean of the weighted soft losses.
// Either soft node may be null (single-source variants); the divisor is the
// number of soft terms present.
NodePtr weighted_implicit_loss(const NodePtr& l_hd, const NodePtr& l_sf_sn,
                               const NodePtr& l_sf_si, double omega_sn,
                               double omega_si, double alpha);

// Triplet centroid alignment over classes present on both sides:
// sum_k ||mu_S - mu_T||^2 + ||mu_S - mu_ST||^2 + ||mu_T - mu_ST||^2.
NodePtr centroid_alignment_loss(const NodePtr& f_src,
                                const std::vector<int>& y_src,
                                const NodePtr& f_tgt,
                                const std::vector<int>& y_tgt, int num_classes,
                                int* classes_used = nullptr);

// Per-class representatives expressed over live feature nodes (1 x d_c each).
struct RepNodes {
  int class_id = 0;
  std::vector<NodePtr> reps;
};

// Mean over classes (with reps on both sides) of the mean pairwise squared
// distance between source and target representatives.
NodePtr representative_alignment_loss(const std::vector<RepNodes>& src,
                                      const std::vector<RepNodes>& tgt,
                                      int* classes_used = nullptr);

}  // namespace jstn
