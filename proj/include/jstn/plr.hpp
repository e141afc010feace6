#pragma once

#include "jstn/common.hpp"

#include <vector>

namespace jstn {

// Per-class centroids over the union of labelled features in the common
// subspace. Classes with no labelled instance are marked absent and never
// win a geometric-label vote.
struct CentroidSet {
  Matrix mu;                  // K x d_c
  std::vector<bool> present;  // per class
};

struct LabelledFeatures {
  const Matrix* features;          // n x d_c
  const std::vector<int>* labels;  // 1-based, length n
};

CentroidSet labeled_centroids(const std::vector<LabelledFeatures>& parts,
                              int num_classes,
                              bool literal_normalization = false);

// Cosine similarity with degenerate vectors mapped to -1 so they never win.
double cosine_similarity(const Eigen::RowVectorXd& a,
                         const Eigen::RowVectorXd& b);

// argmax_k CS(f, mu_k) over present centroids; ties break to the lowest
// class index. Returns a 1-based class id.
int geometric_label(const Eigen::RowVectorXd& f, const CentroidSet& centroids);

struct PseudoLabelAssignment {
  int index = 0;  // row into the unlabelled target batch
  int y_nn = 0;   // classifier argmax
  int y_gs = 0;   // nearest-centroid cosine class
  bool accepted = false;
  int epoch = 0;
};

struct PlrResult {
  std::vector<PseudoLabelAssignment> assignments;
  std::vector<int> accepted_indices;
  std::vector<int> accepted_labels;
  std::vector<int> per_class_accepted;  // histogram, size K
  int accepted_count = 0;
  double acceptance_rate = 0.0;
};

// Consensus refinement: an instance receives a pseudo-label iff the
// classifier prediction and the geometric label agree.
PlrResult refine(const Matrix& logits_tu, const Matrix& f_tu,
                 const CentroidSet& centroids, int epoch);

// Evaluation-only diagnostic against withheld ground truth. An empty set is
// reported as precision 1 (no wrong acceptance).
double pseudo_label_precision(const PlrResult& plr,
                              const std::vector<int>& truth);

// 1-based argmax per row, ties to the lowest class index.
std::vector<int> argmax_rows(const Matrix& logits);

}  // namespace jstn
