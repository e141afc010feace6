#include "jstn/plr.hpp"

#include <cmath>

namespace jstn {

CentroidSet labeled_centroids(const std::vector<LabelledFeatures>& parts,
                              int num_classes, bool literal_normalization) {
  if (parts.empty()) throw UsageError("labeled_centroids: no parts");
  const Eigen::Index d = parts.front().features->cols();
  CentroidSet out;
  out.mu = Matrix::Zero(num_classes, d);
  out.present.assign(static_cast<std::size_t>(num_classes), false);
  std::vector<long> counts(static_cast<std::size_t>(num_classes), 0);
  long total = 0;
  for (const auto& part : parts) {
    if (part.features->cols() != d) {
      throw DimensionError("labeled_centroids: feature widths differ");
    }
    if (static_cast<Eigen::Index>(part.labels->size()) !=
        part.features->rows()) {
      throw UsageError("labeled_centroids: label/row count mismatch");
    }
    total += part.features->rows();
    for (std::size_t i = 0; i < part.labels->size(); ++i) {
      const int y = (*part.labels)[i];
      if (y < 1 || y > num_classes) {
        throw DataError("labeled_centroids: label " + std::to_string(y) +
                        " outside [1, " + std::to_string(num_classes) + "]");
      }
      out.mu.row(y - 1) += part.features->row(static_cast<Eigen::Index>(i));
      counts[static_cast<std::size_t>(y - 1)] += 1;
    }
  }
  for (int k = 0; k < num_classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0) continue;
    const double denom = literal_normalization
                             ? static_cast<double>(total)
                             : static_cast<double>(
                                   counts[static_cast<std::size_t>(k)]);
    out.mu.row(k) /= denom;
    out.present[static_cast<std::size_t>(k)] = true;
  }
  return out;
}

double cosine_similarity(const Eigen::RowVectorXd& a,
                         const Eigen::RowVectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return -1.0;
  return a.dot(b) / (na * nb);
}

int geometric_label(const Eigen::RowVectorXd& f,
                    const CentroidSet& centroids) {
  int best = 1;
  double best_cs = -2.0;
  for (Eigen::Index k = 0; k < centroids.mu.rows(); ++k) {
    if (!centroids.present[static_cast<std::size_t>(k)]) continue;
    const double cs = cosine_similarity(f, centroids.mu.row(k));
    if (cs > best_cs) {
      best_cs = cs;
      best = static_cast<int>(k) + 1;
    }
  }
  return best;
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    int best = 0;
    double best_v = logits(r, 0);
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > best_v) {
        best_v = logits(r, c);
        best = static_cast<int>(c);
      }
    }
    out[static_cast<std::size_t>(r)] = best + 1;
  }
  return out;
}

PlrResult refine(const Matrix& logits_tu, const Matrix& f_tu,
                 const CentroidSet& centroids, int epoch) {
  if (logits_tu.rows() != f_tu.rows()) {
    throw UsageError("refine: logits/features row counts differ");
  }
  const int num_classes = static_cast<int>(centroids.mu.rows());
  PlrResult out;
  out.per_class_accepted.assign(static_cast<std::size_t>(num_classes), 0);
  const std::vector<int> y_nn = argmax_rows(logits_tu);
  for (Eigen::Index i = 0; i < f_tu.rows(); ++i) {
    PseudoLabelAssignment a;
    a.index = static_cast<int>(i);
    a.epoch = epoch;
    a.y_nn = y_nn[static_cast<std::size_t>(i)];
    a.y_gs = geometric_label(f_tu.row(i), centroids);
    a.accepted = a.y_nn == a.y_gs;
    if (a.accepted) {
      out.accepted_indices.push_back(a.index);
      out.accepted_labels.push_back(a.y_nn);
      out.per_class_accepted[static_cast<std::size_t>(a.y_nn - 1)] += 1;
      out.accepted_count += 1;
    }
    out.assignments.push_back(a);
  }
  out.acceptance_rate =
      f_tu.rows() == 0 ? 0.0
                       : static_cast<double>(out.accepted_count) /
                             static_cast<double>(f_tu.rows());
  return out;
}

double pseudo_label_precision(const PlrResult& plr,
                              const std::vector<int>& truth) {
  if (plr.accepted_count == 0) return 1.0;
  long correct = 0;
  for (std::size_t i = 0; i < plr.accepted_indices.size(); ++i) {
    const int idx = plr.accepted_indices[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= truth.size()) {
      throw UsageError("pseudo_label_precision: index outside truth vector");
    }
    if (plr.accepted_labels[i] == truth[static_cast<std::size_t>(idx)]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) /
         static_cast<double>(plr.accepted_count);
}

}  // namespace jstn
