#include "jstn/metrics.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace jstn;

namespace {

// Independent brute-force oracle: explicit per-class counting loops straight
// over the label vectors, no confusion matrix reuse.
struct OracleReport {
  double accuracy = 0.0;
  double wp = 0.0, wr = 0.0, wf1 = 0.0;
};

OracleReport brute_force(const std::vector<int>& pred,
                         const std::vector<int>& truth, int k) {
  OracleReport rep;
  const double n = static_cast<double>(truth.size());
  long right = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (pred[i] == truth[i]) ++right;
  }
  rep.accuracy = static_cast<double>(right) / n;
  for (int c = 1; c <= k; ++c) {
    long tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == c) ++support;
      if (pred[i] == c && truth[i] == c) ++tp;
      if (pred[i] == c && truth[i] != c) ++fp;
      if (pred[i] != c && truth[i] == c) ++fn;
    }
    const double p =
        tp + fp == 0 ? 0.0
                     : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r =
        tp + fn == 0 ? 0.0
                     : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double f1 = p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    const double w = static_cast<double>(support) / n;
    rep.wp += w * p;
    rep.wr += w * r;
    rep.wf1 += w * f1;
  }
  return rep;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("perfect and all-wrong predictions") {
  const std::vector<int> truth = {1, 2, 3, 1, 2, 3};
  MetricsReport perfect = evaluate(truth, truth, 3);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.weighted_precision == 1.0);
  CHECK(perfect.weighted_recall == 1.0);
  CHECK(perfect.weighted_f1 == 1.0);
  CHECK_FALSE(perfect.any_zero_division);

  const std::vector<int> wrong = {2, 3, 1, 2, 3, 1};
  CHECK(evaluate(wrong, truth, 3).accuracy == 0.0);
}

TEST_CASE("worked two-class example") {
  const std::vector<int> truth = {1, 1, 1, 2};
  const std::vector<int> pred = {1, 1, 2, 2};
  MetricsReport rep = evaluate(pred, truth, 2);
  CHECK(rep.per_class[0].precision == doctest::Approx(1.0));
  CHECK(rep.per_class[0].recall == doctest::Approx(2.0 / 3.0));
  CHECK(rep.per_class[0].f1 == doctest::Approx(0.8));
  CHECK(rep.per_class[1].precision == doctest::Approx(0.5));
  CHECK(rep.per_class[1].recall == doctest::Approx(1.0));
  CHECK(rep.per_class[1].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(rep.weighted_f1 == doctest::Approx(0.7667).epsilon(1e-4));
  CHECK(rep.accuracy == doctest::Approx(0.75));
}

TEST_CASE("weighted metrics equal the brute-force oracle exactly") {
  Rng rng(81);
  for (int rep_i = 0; rep_i < 1000; ++rep_i) {
    const int k = 2 + static_cast<int>(rng.uniform_int(5));  // 2..6
    const int n = 5 + static_cast<int>(rng.uniform_int(40));
    std::vector<int> truth, pred;
    for (int i = 0; i < n; ++i) {
      truth.push_back(1 + static_cast<int>(rng.uniform_int(k)));
      pred.push_back(1 + static_cast<int>(rng.uniform_int(k)));
    }
    MetricsReport got = evaluate(pred, truth, k);
    OracleReport want = brute_force(pred, truth, k);
    CHECK(got.accuracy == want.accuracy);
    CHECK(got.weighted_precision == want.wp);
    CHECK(got.weighted_recall == want.wr);
    CHECK(got.weighted_f1 == want.wf1);
    CHECK(got.confusion.total() == n);
    CHECK(got.accuracy ==
          static_cast<double>(got.confusion.trace()) / n);
  }
}

TEST_CASE("zero-division convention is flagged") {
  // Class 2 never predicted.
  MetricsReport rep = evaluate({1, 1, 1}, {1, 2, 1}, 2);
  CHECK(rep.per_class[1].precision == 0.0);
  CHECK(rep.any_zero_division);
}

TEST_CASE("evaluate input validation") {
  CHECK_THROWS_AS(evaluate({1, 2}, {1}, 2), UsageError);
  CHECK_THROWS_AS(evaluate({1, 3}, {1, 1}, 2), DataError);
  CHECK_THROWS_AS(evaluate({}, {}, 2), UsageError);
}

TEST_CASE("confusion matrix csv") {
  MetricsReport rep = evaluate({1, 2, 2}, {1, 1, 2}, 2);
  const std::string csv = rep.confusion.to_csv();
  CHECK(csv.find("1,1,1") != std::string::npos);
  CHECK(csv.find("2,0,1") != std::string::npos);
}

TEST_CASE("incomplete beta against reference values") {
  CHECK(incomplete_beta(2.5, 0.5, 0.3) ==
        doctest::Approx(0.0189271240719457).epsilon(1e-8));
  CHECK(incomplete_beta(0.5, 0.5, 0.5) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(incomplete_beta(5.0, 2.0, 0.8) ==
        doctest::Approx(0.65536).epsilon(1e-10));
  CHECK(incomplete_beta(1.5, 3.5, 0.12) ==
        doctest::Approx(0.187747885565252).epsilon(1e-8));
  CHECK(incomplete_beta(1.0, 1.0, 0.0) == 0.0);
  CHECK(incomplete_beta(1.0, 1.0, 1.0) == 1.0);
}

TEST_CASE("paired t-test") {
  // Identical scores.
  const std::vector<double> same = {1.0, 2.0, 3.0};
  TTestResult id = paired_t_test(same, same);
  CHECK(id.t == 0.0);
  CHECK(id.p == 1.0);

  // Constant nonzero difference: degenerate, p below any threshold.
  TTestResult deg = paired_t_test({2.0, 3.0, 4.0}, {1.0, 2.0, 3.0});
  CHECK(deg.p < 1e-12);
  CHECK(std::isinf(deg.t));

  // Five-pair example cross-checked against an independent implementation.
  const std::vector<double> a = {12.1, 14.3, 13.9, 11.8, 15.2};
  const std::vector<double> b = {11.2, 13.1, 13.5, 11.9, 14.0};
  TTestResult r = paired_t_test(a, b);
  CHECK(r.df == 4);
  CHECK(r.t == doctest::Approx(2.85948529484234).epsilon(1e-10));
  CHECK(r.p == doctest::Approx(0.0459533527177364).epsilon(1e-8));

  const std::vector<double> a2 = {88.0, 92.5, 79.0, 85.0, 90.0, 84.5};
  const std::vector<double> b2 = {87.0, 89.0, 80.5, 82.0, 86.5, 84.0};
  TTestResult r2 = paired_t_test(a2, b2);
  CHECK(r2.t == doctest::Approx(2.02444082544729).epsilon(1e-10));
  CHECK(r2.p == doctest::Approx(0.0988090632415311).epsilon(1e-8));

  // Symmetry: swapping negates t, preserves p.
  TTestResult sw = paired_t_test(b, a);
  CHECK(sw.t == doctest::Approx(-r.t).epsilon(1e-12));
  CHECK(sw.p == doctest::Approx(r.p).epsilon(1e-12));

  CHECK_THROWS_AS(paired_t_test({1.0}, {2.0}), UsageError);
  CHECK_THROWS_AS(paired_t_test({1.0, 2.0}, {1.0}), UsageError);
}

}  // TEST_SUITE
