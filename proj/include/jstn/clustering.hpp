#pragma once

#include "jstn/common.hpp"

#include <vector>

namespace jstn {

enum class Side { Source, Target };

// R (or fewer) per-class cluster centers plus the member rows behind each,
// so callers can rebuild the centers as means over live feature nodes.
struct RepSet {
  int class_id = 0;  // 1-based
  Side side = Side::Source;
  Matrix reps;                                  // r x d
  std::vector<std::vector<int>> member_indices;  // rows of the class subset
};

// Standard D^2 seeding: first center uniform, each next proportional to the
// squared distance to the nearest chosen center. If fewer than `r` distinct
// points exist, the distinct points are returned.
Matrix kmeanspp_seed(const Matrix& points, int r, Rng& rng);

struct LloydResult {
  Matrix centers;
  std::vector<std::vector<int>> members;
  std::vector<double> cost_history;  // cost after each assignment pass
  int iterations = 0;
};

// Alternate assign/update until the center shift drops below tol or max_iter
// passes. Empty clusters are reseeded to the farthest point. The returned
// centers are exact means of their final member sets.
LloydResult lloyd(const Matrix& points, Matrix centers, int max_iter = 50,
                  double tol = 1e-6);

double clustering_cost(const Matrix& points, const Matrix& centers);

// Per-class representative selection for one side. `indices_by_class[k]`
// holds the global row indices of class k+1 in `features`; member_indices in
// the result refer back to those global rows.
std::vector<RepSet> select_representatives(
    const Matrix& features, const std::vector<std::vector<int>>& indices_by_class,
    int r, Side side, Rng& rng, int max_iter = 50, double tol = 1e-6);

}  // namespace jstn
