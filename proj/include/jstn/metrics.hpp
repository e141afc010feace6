#pragma once

#include "jstn/common.hpp"

#include <string>
#include <vector>

namespace jstn {

struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<long> counts;  // row-major, rows = true class, cols = predicted

  explicit ConfusionMatrix(int k)
      : num_classes(k),
        counts(static_cast<std::size_t>(k) * static_cast<std::size_t>(k), 0) {}

  long& at(int true_class, int predicted) {  // 1-based
    return counts[static_cast<std::size_t>(true_class - 1) *
                      static_cast<std::size_t>(num_classes) +
                  static_cast<std::size_t>(predicted - 1)];
  }
  long at(int true_class, int predicted) const {
    return counts[static_cast<std::size_t>(true_class - 1) *
                      static_cast<std::size_t>(num_classes) +
                  static_cast<std::size_t>(predicted - 1)];
  }
  long total() const;
  long trace() const;
  std::string to_csv() const;
};

struct PerClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;          // true-class count
  bool zero_division = false;  // class never predicted (or degenerate F1)
};

struct MetricsReport {
  double accuracy = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  std::vector<PerClassMetrics> per_class;
  ConfusionMatrix confusion{1};
  bool any_zero_division = false;
};

// Accuracy plus category-weighted precision/recall/F1, each per-class metric
// weighted by the true-class share. Division by zero yields 0 with a flag.
MetricsReport evaluate(const std::vector<int>& predictions,
                       const std::vector<int>& truth, int num_classes);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;  // two-sided
  long df = 0;
};

// Two-sided paired t-test. A constant nonzero difference with zero variance
// degenerates to t = +/-inf, p = 0 (reported as < 1e-12).
TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b);

// Regularised incomplete beta I_x(a, b) via continued fraction; accuracy
// around 1e-8 over the t-test range. Exposed for tests.
double incomplete_beta(double a, double b, double x);

// Two-sided p-value for Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, long df);

}  // namespace jstn
