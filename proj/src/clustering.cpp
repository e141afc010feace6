#include "jstn/clustering.hpp"

#include <cmath>
#include <limits>

namespace jstn {

namespace {

Eigen::Index nearest_center(const Matrix& centers,
                            const Eigen::RowVectorXd& p, double* dist_out) {
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    const double d = (centers.row(c) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist_out) *dist_out = best_d;
  return best;
}

}  // namespace

Matrix kmeanspp_seed(const Matrix& points, int r, Rng& rng) {
  if (points.rows() == 0) throw DataError("kmeanspp_seed: empty input");
  if (r < 1) throw ParameterError("kmeanspp_seed: r must be >= 1");
  const Eigen::Index n = points.rows();

  std::vector<Eigen::Index> chosen;
  chosen.push_back(
      static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n))));

  std::vector<double> d2(static_cast<std::size_t>(n));
  while (static_cast<int>(chosen.size()) < r) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index c : chosen) {
        best = std::min(best, (points.row(i) - points.row(c)).squaredNorm());
      }
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    if (total <= 0.0) break;  // every remaining point duplicates a center
    double u = rng.uniform() * total;
    Eigen::Index pick = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      u -= d2[static_cast<std::size_t>(i)];
      if (u <= 0.0) {
        pick = i;
        break;
      }
    }
    chosen.push_back(pick);
  }

  Matrix centers(static_cast<Eigen::Index>(chosen.size()), points.cols());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    centers.row(static_cast<Eigen::Index>(i)) = points.row(chosen[i]);
  }
  return centers;
}

double clustering_cost(const Matrix& points, const Matrix& centers) {
  double cost = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double d = 0.0;
    nearest_center(centers, points.row(i), &d);
    cost += d;
  }
  return cost;
}

LloydResult lloyd(const Matrix& points, Matrix centers, int max_iter,
                  double tol) {
  if (points.rows() == 0) throw DataError("lloyd: empty input");
  const Eigen::Index n = points.rows();
  const Eigen::Index r = centers.rows();

  LloydResult out;
  std::vector<std::vector<int>> members;
  for (int iter = 0; iter < max_iter; ++iter) {
    members.assign(static_cast<std::size_t>(r), {});
    double cost = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double d = 0.0;
      const Eigen::Index c = nearest_center(centers, points.row(i), &d);
      members[static_cast<std::size_t>(c)].push_back(static_cast<int>(i));
      cost += d;
    }
    out.cost_history.push_back(cost);

    Matrix next = centers;
    for (Eigen::Index c = 0; c < r; ++c) {
      auto& m = members[static_cast<std::size_t>(c)];
      if (m.empty()) {
        // Reseed to the point farthest from its assigned center.
        Eigen::Index far_i = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          double d = 0.0;
          nearest_center(centers, points.row(i), &d);
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        next.row(c) = points.row(far_i);
        continue;
      }
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(points.cols());
      for (int i : m) acc += points.row(i);
      next.row(c) = acc / static_cast<double>(m.size());
    }

    const double shift = (next - centers).rowwise().norm().maxCoeff();
    centers = next;
    out.iterations = iter + 1;
    if (shift < tol) break;
  }

  // Final exact assignment and means so each center is the mean of its
  // reported member set.
  members.assign(static_cast<std::size_t>(r), {});
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index c = nearest_center(centers, points.row(i), nullptr);
    members[static_cast<std::size_t>(c)].push_back(static_cast<int>(i));
  }
  Matrix final_centers(r, points.cols());
  std::vector<std::vector<int>> kept;
  std::vector<Eigen::Index> kept_rows;
  for (Eigen::Index c = 0; c < r; ++c) {
    auto& m = members[static_cast<std::size_t>(c)];
    if (m.empty()) continue;  // duplicate centers can starve; drop them
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(points.cols());
    for (int i : m) acc += points.row(i);
    final_centers.row(static_cast<Eigen::Index>(kept.size())) =
        acc / static_cast<double>(m.size());
    kept.push_back(std::move(m));
  }
  out.centers = final_centers.topRows(static_cast<Eigen::Index>(kept.size()));
  out.members = std::move(kept);
  out.cost_history.push_back(clustering_cost(points, out.centers));
  return out;
}

std::vector<RepSet> select_representatives(
    const Matrix& features,
    const std::vector<std::vector<int>>& indices_by_class, int r, Side side,
    Rng& rng, int max_iter, double tol) {
  if (r < 1) throw ParameterError("select_representatives: r must be >= 1");
  std::vector<RepSet> out;
  for (std::size_t k = 0; k < indices_by_class.size(); ++k) {
    const auto& idx = indices_by_class[k];
    if (idx.empty()) continue;
    Matrix pts(static_cast<Eigen::Index>(idx.size()), features.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      pts.row(static_cast<Eigen::Index>(i)) = features.row(idx[i]);
    }
    Matrix seeds = kmeanspp_seed(pts, r, rng);
    LloydResult fit = lloyd(pts, std::move(seeds), max_iter, tol);

    RepSet rep;
    rep.class_id = static_cast<int>(k) + 1;
    rep.side = side;
    rep.reps = fit.centers;
    rep.member_indices.reserve(fit.members.size());
    for (const auto& m : fit.members) {
      std::vector<int> global;
      global.reserve(m.size());
      for (int i : m) global.push_back(idx[static_cast<std::size_t>(i)]);
      rep.member_indices.push_back(std::move(global));
    }
    out.push_back(std::move(rep));
  }
  return out;
}

}  // namespace jstn
