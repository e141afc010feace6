#include "jstn/losses.hpp"

#include <cmath>
#include <string>

namespace jstn {

namespace {

void check_labels(const std::vector<int>& labels, int num_classes,
                  const char* where) {
  for (int y : labels) {
    if (y < 1 || y > num_classes) {
      throw DataError(std::string(where) + ": label " + std::to_string(y) +
                      " outside [1, " + std::to_string(num_classes) + "]");
    }
  }
}

NodePtr add_or_init(NodePtr acc, const NodePtr& term) {
  return acc ? ad::add(acc, term) : term;
}

NodePtr zero_scalar() { return ad::constant(Matrix::Zero(1, 1)); }

}  // namespace

std::vector<std::vector<int>> class_indices(const std::vector<int>& labels,
                                            int num_classes) {
  check_labels(labels, num_classes, "class_indices");
  std::vector<std::vector<int>> idx(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    idx[static_cast<std::size_t>(labels[i] - 1)].push_back(
        static_cast<int>(i));
  }
  return idx;
}

Matrix one_hot(const std::vector<int>& labels, int num_classes) {
  check_labels(labels, num_classes, "one_hot");
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()),
                          num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    y(static_cast<Eigen::Index>(i), labels[i] - 1) = 1.0;
  }
  return y;
}

Matrix softmax_rows_plain(const Matrix& logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw ParameterError("softmax: temperature must be positive");
  }
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::ArrayXd z = logits.row(r).array() / temperature;
    z -= z.maxCoeff();
    Eigen::ArrayXd e = z.exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  return out;
}

NodePtr supervision_loss(const NodePtr& logits,
                         const std::vector<int>& labels) {
  const int num_classes = static_cast<int>(logits->cols());
  if (static_cast<Eigen::Index>(labels.size()) != logits->rows()) {
    throw UsageError("supervision_loss: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(logits->rows()) +
                     " rows");
  }
  check_labels(labels, num_classes, "supervision_loss");
  NodePtr p = ad::clamp(ad::softmax_rows_t(logits, 1.0), kProbEps, 1.0);
  NodePtr picked = ad::mul(ad::constant(one_hot(labels, num_classes)),
                           ad::log(p));
  return ad::scale(ad::sum(picked),
                   -1.0 / static_cast<double>(labels.size()));
}

NodePtr scenario_discriminator_loss(const NodePtr& d_src,
                                    const NodePtr& d_tgt) {
  if (d_src->cols() != 1 || d_tgt->cols() != 1) {
    throw UsageError("scenario_discriminator_loss: expects n x 1 inputs");
  }
  NodePtr src = ad::clamp(d_src, kProbEps, 1.0 - kProbEps);
  NodePtr tgt = ad::clamp(d_tgt, kProbEps, 1.0 - kProbEps);
  NodePtr log_src = ad::mean(ad::log(src));
  NodePtr log_one_minus_tgt =
      ad::mean(ad::log(ad::add_scalar(ad::scale(tgt, -1.0), 1.0)));
  return ad::scale(ad::add(log_src, log_one_minus_tgt), -1.0);
}

double SoftLabelTable::row_entropy(int class_id) const {
  const Eigen::Index k = class_id - 1;
  if (k < 0 || k >= q.rows() || !present[static_cast<std::size_t>(k)]) {
    throw UsageError("row_entropy: class " + std::to_string(class_id) +
                     " has no teacher row");
  }
  double h = 0.0;
  for (Eigen::Index c = 0; c < q.cols(); ++c) {
    const double v = std::max(q(k, c), kProbEps);
    h -= q(k, c) * std::log(v);
  }
  return h;
}

SoftLabelTable soft_label_table(const Matrix& logits,
                                const std::vector<int>& labels,
                                int num_classes, double temperature) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw UsageError("soft_label_table: label/row count mismatch");
  }
  SoftLabelTable table;
  table.q = Matrix::Zero(num_classes, num_classes);
  table.present.assign(static_cast<std::size_t>(num_classes), false);
  table.temperature = temperature;
  const Matrix s = softmax_rows_plain(logits, temperature);
  const auto idx = class_indices(labels, num_classes);
  for (int k = 0; k < num_classes; ++k) {
    if (idx[static_cast<std::size_t>(k)].empty()) continue;
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(num_classes);
    for (int i : idx[static_cast<std::size_t>(k)]) acc += s.row(i);
    table.q.row(k) = acc / static_cast<double>(
                               idx[static_cast<std::size_t>(k)].size());
    table.present[static_cast<std::size_t>(k)] = true;
  }
  return table;
}

NodePtr scenario_distribution_loss(const NodePtr& logits_si,
                                   const std::vector<int>& labels_si,
                                   const SoftLabelTable& teacher,
                                   int* classes_used) {
  const int num_classes = static_cast<int>(teacher.q.rows());
  const auto idx = class_indices(labels_si, num_classes);
  NodePtr s = ad::softmax_rows_t(logits_si, teacher.temperature);
  NodePtr acc;
  int used = 0;
  for (int k = 0; k < num_classes; ++k) {
    const bool in_sn = teacher.present[static_cast<std::size_t>(k)];
    const bool in_si = !idx[static_cast<std::size_t>(k)].empty();
    if (!in_sn || !in_si) {
      if (in_sn != in_si) {
        debug("scenario_distribution_loss: class " + std::to_string(k + 1) +
              " present in only one source, skipped");
      }
      continue;
    }
    NodePtr p_k = ad::clamp(
        ad::mean_rows(ad::rows(s, idx[static_cast<std::size_t>(k)])),
        kProbEps, 1.0);
    NodePtr q_k = ad::constant(teacher.q.row(k));
    acc = add_or_init(acc, ad::sum(ad::mul(q_k, ad::log(p_k))));
    ++used;
  }
  if (classes_used) *classes_used = used;
  if (used == 0) {
    warn("scenario_distribution_loss: no class present in both sources");
    return zero_scalar();
  }
  return ad::scale(acc, -1.0 / static_cast<double>(used));
}

NodePtr implicit_soft_loss(const NodePtr& p, const std::vector<int>& labels,
                           const SoftLabelTable& teacher,
                           int* instances_used) {
  const int num_classes = static_cast<int>(teacher.q.rows());
  check_labels(labels, num_classes, "implicit_soft_loss");
  if (static_cast<Eigen::Index>(labels.size()) != p->rows()) {
    throw UsageError("implicit_soft_loss: label/row count mismatch");
  }
  std::vector<int> usable;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (teacher.present[static_cast<std::size_t>(labels[i] - 1)]) {
      usable.push_back(static_cast<int>(i));
    }
  }
  if (instances_used) *instances_used = static_cast<int>(usable.size());
  if (usable.empty()) {
    warn("implicit_soft_loss: no instance has a teacher row; returning 0");
    return zero_scalar();
  }
  Matrix q_rows(static_cast<Eigen::Index>(usable.size()), num_classes);
  for (std::size_t i = 0; i < usable.size(); ++i) {
    q_rows.row(static_cast<Eigen::Index>(i)) =
        teacher.q.row(labels[static_cast<std::size_t>(usable[i])] - 1);
  }
  NodePtr p_used = ad::clamp(ad::rows(p, usable), kProbEps, 1.0);
  NodePtr ce = ad::sum(ad::mul(ad::constant(q_rows), ad::log(p_used)));
  return ad::scale(ce, -1.0 / static_cast<double>(usable.size()));
}

NodePtr implicit_hard_loss(const NodePtr& logits_tl,
                           const std::vector<int>& labels_tl) {
  return supervision_loss(logits_tl, labels_tl);
}

double source_target_divergence(const Matrix& f_src,
                                const std::vector<int>& y_src,
                                const Matrix& f_tgt,
                                const std::vector<int>& y_tgt, int num_classes,
                                bool literal_normalization) {
  const auto idx_s = class_indices(y_src, num_classes);
  const auto idx_t = class_indices(y_tgt, num_classes);
  double acc = 0.0;
  int shared = 0;
  for (int k = 0; k < num_classes; ++k) {
    const auto& is = idx_s[static_cast<std::size_t>(k)];
    const auto& it = idx_t[static_cast<std::size_t>(k)];
    if (is.empty() || it.empty()) continue;
    Eigen::RowVectorXd mu_s = Eigen::RowVectorXd::Zero(f_src.cols());
    Eigen::RowVectorXd mu_t = Eigen::RowVectorXd::Zero(f_tgt.cols());
    for (int i : is) mu_s += f_src.row(i);
    for (int i : it) mu_t += f_tgt.row(i);
    mu_s /= static_cast<double>(literal_normalization ? y_src.size()
                                                      : is.size());
    mu_t /= static_cast<double>(literal_normalization ? y_tgt.size()
                                                      : it.size());
    acc += (mu_s - mu_t).squaredNorm();
    ++shared;
  }
  if (shared == 0) {
    throw DataError("source_target_divergence: no shared classes");
  }
  return acc / static_cast<double>(shared);
}

double source_weight(double divergence) {
  if (divergence < 0.0) {
    throw ParameterError("source_weight: divergence must be non-negative");
  }
  const double w = 1.0 / (1.0 + std::exp(-divergence)) + 0.25;
  // The true value stays below 1.25 for every finite divergence; keep the
  // open bound representable once rounding saturates.
  return std::min(w, std::nextafter(1.25, 0.0));
}

NodePtr weighted_implicit_loss(const NodePtr& l_hd, const NodePtr& l_sf_sn,
                               const NodePtr& l_sf_si, double omega_sn,
                               double omega_si, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ParameterError("weighted_implicit_loss: alpha must be in [0,1]");
  }
  NodePtr out = ad::scale(l_hd, 1.0 - alpha);
  if (alpha == 0.0) return out;
  int soft_terms = (l_sf_sn ? 1 : 0) + (l_sf_si ? 1 : 0);
  if (soft_terms == 0) return out;
  const double denom = static_cast<double>(soft_terms);
  if (l_sf_sn) {
    out = ad::add(out, ad::scale(l_sf_sn, alpha * omega_sn / denom));
  }
  if (l_sf_si) {
    out = ad::add(out, ad::scale(l_sf_si, alpha * omega_si / denom));
  }
  return out;
}

NodePtr centroid_alignment_loss(const NodePtr& f_src,
                                const std::vector<int>& y_src,
                                const NodePtr& f_tgt,
                                const std::vector<int>& y_tgt, int num_classes,
                                int* classes_used) {
  const auto idx_s = class_indices(y_src, num_classes);
  const auto idx_t = class_indices(y_tgt, num_classes);
  NodePtr acc;
  int used = 0;
  for (int k = 0; k < num_classes; ++k) {
    const auto& is = idx_s[static_cast<std::size_t>(k)];
    const auto& it = idx_t[static_cast<std::size_t>(k)];
    if (is.empty() || it.empty()) {
      if (is.empty() != it.empty()) {
        debug("centroid_alignment_loss: class " + std::to_string(k + 1) +
              " present on one side only, skipped");
      }
      continue;
    }
    const double ns = static_cast<double>(is.size());
    const double nt = static_cast<double>(it.size());
    NodePtr mu_s = ad::mean_rows(ad::rows(f_src, is));
    NodePtr mu_t = ad::mean_rows(ad::rows(f_tgt, it));
    // Count-weighted combination equals the mean over the union.
    NodePtr mu_st = ad::add(ad::scale(mu_s, ns / (ns + nt)),
                            ad::scale(mu_t, nt / (ns + nt)));
    NodePtr term = ad::add(
        ad::add(ad::sum(ad::sq_l2_rowdiff(mu_s, mu_t)),
                ad::sum(ad::sq_l2_rowdiff(mu_s, mu_st))),
        ad::sum(ad::sq_l2_rowdiff(mu_t, mu_st)));
    acc = add_or_init(acc, term);
    ++used;
  }
  if (classes_used) *classes_used = used;
  return acc ? acc : zero_scalar();
}

NodePtr representative_alignment_loss(const std::vector<RepNodes>& src,
                                      const std::vector<RepNodes>& tgt,
                                      int* classes_used) {
  struct Pair {
    const RepNodes* s;
    const RepNodes* t;
  };
  std::vector<Pair> shared;
  for (const auto& s : src) {
    for (const auto& t : tgt) {
      if (s.class_id == t.class_id && !s.reps.empty() && !t.reps.empty()) {
        shared.push_back({&s, &t});
      }
    }
  }
  if (classes_used) *classes_used = static_cast<int>(shared.size());
  if (shared.empty()) return zero_scalar();
  const double k_used = static_cast<double>(shared.size());
  NodePtr acc;
  for (const auto& [s, t] : shared) {
    NodePtr class_acc;
    for (const auto& rs : s->reps) {
      for (const auto& rt : t->reps) {
        class_acc = add_or_init(class_acc,
                                ad::sum(ad::sq_l2_rowdiff(rs, rt)));
      }
    }
    const double denom = k_used * static_cast<double>(s->reps.size()) *
                         static_cast<double>(t->reps.size());
    acc = add_or_init(acc, ad::scale(class_acc, 1.0 / denom));
  }
  return acc;
}

}  // namespace jstn
