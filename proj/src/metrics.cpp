#include "jstn/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace jstn {

long ConfusionMatrix::total() const {
  long t = 0;
  for (long c : counts) t += c;
  return t;
}

long ConfusionMatrix::trace() const {
  long t = 0;
  for (int k = 1; k <= num_classes; ++k) t += at(k, k);
  return t;
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream os;
  os << "true\\pred";
  for (int p = 1; p <= num_classes; ++p) os << "," << p;
  os << "\n";
  for (int t = 1; t <= num_classes; ++t) {
    os << t;
    for (int p = 1; p <= num_classes; ++p) os << "," << at(t, p);
    os << "\n";
  }
  return os.str();
}

MetricsReport evaluate(const std::vector<int>& predictions,
                       const std::vector<int>& truth, int num_classes) {
  if (predictions.size() != truth.size()) {
    throw UsageError("evaluate: " + std::to_string(predictions.size()) +
                     " predictions vs " + std::to_string(truth.size()) +
                     " truth labels");
  }
  if (predictions.empty()) throw UsageError("evaluate: empty input");

  MetricsReport rep;
  rep.confusion = ConfusionMatrix(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = predictions[i];
    if (t < 1 || t > num_classes || p < 1 || p > num_classes) {
      throw DataError("evaluate: label outside [1, " +
                      std::to_string(num_classes) + "] at index " +
                      std::to_string(i));
    }
    rep.confusion.at(t, p) += 1;
  }

  const double n = static_cast<double>(truth.size());
  rep.accuracy = static_cast<double>(rep.confusion.trace()) / n;
  rep.per_class.resize(static_cast<std::size_t>(num_classes));
  for (int k = 1; k <= num_classes; ++k) {
    long tp = rep.confusion.at(k, k);
    long fp = 0, fn = 0;
    for (int j = 1; j <= num_classes; ++j) {
      if (j == k) continue;
      fp += rep.confusion.at(j, k);
      fn += rep.confusion.at(k, j);
    }
    PerClassMetrics& pc = rep.per_class[static_cast<std::size_t>(k - 1)];
    pc.support = tp + fn;
    if (tp + fp == 0) {
      pc.precision = 0.0;
      pc.zero_division = true;
    } else {
      pc.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    if (tp + fn == 0) {
      pc.recall = 0.0;
      pc.zero_division = true;
    } else {
      pc.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
    if (pc.precision + pc.recall == 0.0) {
      pc.f1 = 0.0;
      pc.zero_division = true;
    } else {
      pc.f1 = 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall);
    }
    rep.any_zero_division = rep.any_zero_division || pc.zero_division;
    const double weight = static_cast<double>(pc.support) / n;
    rep.weighted_precision += weight * pc.precision;
    rep.weighted_recall += weight * pc.recall;
    rep.weighted_f1 += weight * pc.f1;
  }
  return rep;
}

namespace {

// Continued fraction for the regularised incomplete beta (Lentz's method).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw ParameterError("incomplete_beta: x in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, long df) {
  if (df < 1) throw ParameterError("student_t: df must be >= 1");
  if (std::isinf(t)) return 0.0;
  const double v = static_cast<double>(df);
  const double x = v / (v + t * t);
  return incomplete_beta(v / 2.0, 0.5, x);
}

TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw UsageError("paired_t_test: unequal lengths");
  }
  const std::size_t n = a.size();
  if (n < 2) throw UsageError("paired_t_test: need at least 2 pairs");

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);

  TTestResult out;
  out.df = static_cast<long>(n) - 1;
  if (var == 0.0) {
    if (mean == 0.0) {
      out.t = 0.0;
      out.p = 1.0;
    } else {
      // Constant nonzero difference: p below any threshold.
      out.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity();
      out.p = 0.0;
    }
    return out;
  }
  out.t = mean / std::sqrt(var / static_cast<double>(n));
  out.p = student_t_two_sided_p(out.t, out.df);
  return out;
}

}  // namespace jstn
