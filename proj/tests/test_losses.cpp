#include "jstn/losses.hpp"

#include "jstn/gradcheck.hpp"
#include "jstn/model.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace jstn;
using namespace jstn::ad;
using jstn_test::bp_grad;
using jstn_test::fd_grad;
using jstn_test::max_rel_err;
using jstn_test::random_matrix;

namespace {

constexpr double kLn5 = 1.6094379124341003;
constexpr double kTwoLn2 = 1.3862943611198906;

double scalar(const NodePtr& n) { return n->values(0, 0); }

// Logits whose plain softmax equals the given distribution row.
Matrix logits_for(const Eigen::RowVectorXd& p, double temperature) {
  Matrix out(1, p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    out(0, i) = temperature * std::log(p(i));
  }
  return out;
}

double table_entropy(const SoftLabelTable& t) {
  double h = 0.0;
  int rows = 0;
  for (int k = 1; k <= t.q.rows(); ++k) {
    if (!t.present[static_cast<std::size_t>(k - 1)]) continue;
    h += t.row_entropy(k);
    ++rows;
  }
  return h / rows;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("supervision loss values") {
  // Perfectly confident correct logits.
  Matrix confident(2, 5);
  confident.setZero();
  confident(0, 0) = 50.0;
  confident(1, 3) = 50.0;
  CHECK(scalar(supervision_loss(constant(confident), {1, 4})) < 1e-6);

  // Uniform logits, K = 5 -> ln 5.
  CHECK(scalar(supervision_loss(constant(Matrix::Zero(3, 5)), {1, 2, 5})) ==
        doctest::Approx(kLn5).epsilon(1e-12));

  CHECK_THROWS_AS(supervision_loss(constant(Matrix::Zero(1, 5)), {6}),
                  DataError);
  CHECK_THROWS_AS(supervision_loss(constant(Matrix::Zero(1, 5)), {0}),
                  DataError);
}

TEST_CASE("supervision loss gradient matches finite differences") {
  Rng rng(41);
  NodePtr logits = parameter(random_matrix(6, 4, rng));
  const std::vector<int> y = {1, 2, 3, 4, 2, 1};
  auto build = [&] { return supervision_loss(logits, y); };
  auto eval = [&] { return scalar(build()); };
  CHECK(max_rel_err(fd_grad(logits, eval), bp_grad(logits, build)) <= 1e-6);
}

TEST_CASE("scenario discriminator loss values") {
  NodePtr half_src = constant(Matrix::Constant(4, 1, 0.5));
  NodePtr half_tgt = constant(Matrix::Constant(6, 1, 0.5));
  CHECK(scalar(scenario_discriminator_loss(half_src, half_tgt)) ==
        doctest::Approx(kTwoLn2).epsilon(1e-12));

  NodePtr good_src = constant(Matrix::Constant(4, 1, 1.0 - 1e-9));
  NodePtr good_tgt = constant(Matrix::Constant(6, 1, 1e-9));
  CHECK(scalar(scenario_discriminator_loss(good_src, good_tgt)) ==
        doctest::Approx(0.0).epsilon(1e-6));

  // Swapping equal-sized batches with flipped scores leaves the loss fixed.
  Rng rng(42);
  Matrix v = random_matrix(5, 1, rng, 0.05, 0.95);
  Matrix w = random_matrix(5, 1, rng, 0.05, 0.95);
  const double direct = scalar(
      scenario_discriminator_loss(constant(v), constant(w)));
  const double flipped = scalar(scenario_discriminator_loss(
      constant(Matrix(Matrix::Ones(5, 1) - w)),
      constant(Matrix(Matrix::Ones(5, 1) - v))));
  CHECK(direct == doctest::Approx(flipped).epsilon(1e-12));
}

TEST_CASE("soft label table") {
  // Single instance per class: row equals that instance's tempered softmax.
  Rng rng(43);
  Matrix logits = random_matrix(3, 3, rng, -2.0, 2.0);
  const std::vector<int> y = {2, 1, 3};
  SoftLabelTable t = soft_label_table(logits, y, 3, 5.0);
  Matrix s = softmax_rows_plain(logits, 5.0);
  CHECK((t.q.row(0) - s.row(1)).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((t.q.row(1) - s.row(0)).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((t.q.row(2) - s.row(2)).cwiseAbs().maxCoeff() <= 1e-15);

  // Rows are convex combinations of distributions.
  Matrix big = random_matrix(40, 4, rng, -3.0, 3.0);
  std::vector<int> yy;
  for (int i = 0; i < 40; ++i) yy.push_back(1 + i % 4);
  SoftLabelTable t2 = soft_label_table(big, yy, 4, 2.0);
  for (int k = 0; k < 4; ++k) {
    CHECK(std::fabs(t2.q.row(k).sum() - 1.0) <= 1e-9);
  }

  // Missing class marked absent.
  SoftLabelTable t3 = soft_label_table(logits, {1, 1, 2}, 3, 5.0);
  CHECK(t3.present[0]);
  CHECK(t3.present[1]);
  CHECK_FALSE(t3.present[2]);
}

TEST_CASE("scenario distribution loss: floor at teacher entropy, K_eff") {
  // Build teacher rows directly, then SI logits whose per-class tempered
  // softmax reproduces arbitrary mixtures toward the teacher.
  const double t1 = 10.0;
  Eigen::RowVectorXd q1(3), q2(3), p1(3), p2(3);
  q1 << 0.6, 0.3, 0.1;
  q2 << 0.2, 0.5, 0.3;
  p1 << 0.3, 0.4, 0.3;
  p2 << 0.5, 0.2, 0.3;

  Matrix teacher_logits(2, 3);
  teacher_logits.row(0) = logits_for(q1, t1);
  teacher_logits.row(1) = logits_for(q2, t1);
  SoftLabelTable teacher = soft_label_table(teacher_logits, {1, 2}, 3, t1);

  auto loss_at = [&](const Eigen::RowVectorXd& a,
                     const Eigen::RowVectorXd& b) {
    Matrix si_logits(2, 3);
    si_logits.row(0) = logits_for(a, t1);
    si_logits.row(1) = logits_for(b, t1);
    int k_used = 0;
    const double v = scalar(scenario_distribution_loss(
        constant(si_logits), {1, 2}, teacher, &k_used));
    CHECK(k_used == 2);
    return v;
  };

  const double at_p = loss_at(p1, p2);
  const double at_mid = loss_at(0.5 * (p1 + q1), 0.5 * (p2 + q2));
  const double at_q = loss_at(q1, q2);
  CHECK(at_p > at_mid);
  CHECK(at_mid > at_q);
  // Cross-entropy lower bound: mean entropy of the teacher rows.
  CHECK(at_q == doctest::Approx(table_entropy(teacher)).epsilon(1e-9));

  // Class 3 present only in SN: averaged over the two shared classes.
  Matrix teacher3(3, 3);
  teacher3.row(0) = logits_for(q1, t1);
  teacher3.row(1) = logits_for(q2, t1);
  teacher3.row(2) = logits_for(p1, t1);
  SoftLabelTable wide = soft_label_table(teacher3, {1, 2, 3}, 3, t1);
  Matrix si_logits(2, 3);
  si_logits.row(0) = logits_for(p1, t1);
  si_logits.row(1) = logits_for(p2, t1);
  int k_used = 0;
  scenario_distribution_loss(constant(si_logits), {1, 2}, wide, &k_used);
  CHECK(k_used == 2);
}

TEST_CASE("implicit soft loss: entropy bound and skip semantics") {
  Rng rng(44);
  const int k = 4;
  Matrix src_logits = random_matrix(12, k, rng, -2.0, 2.0);
  std::vector<int> src_y;
  for (int i = 0; i < 12; ++i) src_y.push_back(1 + i % k);
  SoftLabelTable teacher = soft_label_table(src_logits, src_y, k, 5.0);

  // p_i = q^{y_i} exactly -> loss equals mean entropy of the used rows.
  const std::vector<int> y_tl = {1, 2, 3, 4};
  Matrix tl_logits(4, k);
  for (int i = 0; i < 4; ++i) {
    tl_logits.row(i) = logits_for(teacher.q.row(i), 1.0);
  }
  NodePtr p = softmax_rows_t(constant(tl_logits), 1.0);
  int used = 0;
  const double v = scalar(implicit_soft_loss(p, y_tl, teacher, &used));
  CHECK(used == 4);
  double want = 0.0;
  for (int kk = 1; kk <= 4; ++kk) want += teacher.row_entropy(kk);
  want /= 4.0;
  CHECK(v == doctest::Approx(want).epsilon(1e-9));

  // One-hot teacher plus confident correct p: loss near zero.
  SoftLabelTable onehot;
  onehot.q = Matrix::Identity(k, k);
  onehot.present.assign(k, true);
  onehot.temperature = 1.0;
  Matrix conf(2, k);
  conf.setZero();
  conf(0, 0) = 60.0;
  conf(1, 2) = 60.0;
  NodePtr pc = softmax_rows_t(constant(conf), 1.0);
  CHECK(scalar(implicit_soft_loss(pc, {1, 3}, onehot)) < 1e-6);

  // Teacher rows missing for every instance: zero with warning.
  SoftLabelTable empty;
  empty.q = Matrix::Zero(k, k);
  empty.present.assign(k, false);
  empty.temperature = 1.0;
  CHECK(scalar(implicit_soft_loss(pc, {1, 3}, empty, &used)) == 0.0);
  CHECK(used == 0);
}

TEST_CASE("implicit soft loss stays above teacher entropy") {
  Rng rng(45);
  const int k = 3;
  for (int rep = 0; rep < 25; ++rep) {
    Matrix src_logits = random_matrix(9, k, rng, -3.0, 3.0);
    std::vector<int> src_y;
    for (int i = 0; i < 9; ++i) src_y.push_back(1 + i % k);
    SoftLabelTable teacher = soft_label_table(src_logits, src_y, k, 2.0);
    Matrix tl_logits = random_matrix(6, k, rng, -3.0, 3.0);
    std::vector<int> y_tl;
    for (int i = 0; i < 6; ++i) y_tl.push_back(1 + i % k);
    NodePtr p = softmax_rows_t(constant(tl_logits), 1.0);
    const double v = scalar(implicit_soft_loss(p, y_tl, teacher));
    double h_used = 0.0;
    for (int i = 0; i < 6; ++i) h_used += teacher.row_entropy(y_tl[i]);
    h_used /= 6.0;
    CHECK(v >= h_used - 1e-9);
  }
}

TEST_CASE("implicit soft loss gradient matches finite differences") {
  Rng rng(46);
  const int k = 3;
  Matrix src_logits = random_matrix(6, k, rng);
  SoftLabelTable teacher =
      soft_label_table(src_logits, {1, 2, 3, 1, 2, 3}, k, 5.0);
  NodePtr logits = parameter(random_matrix(5, k, rng));
  const std::vector<int> y = {1, 3, 2, 2, 1};
  auto build = [&] {
    return implicit_soft_loss(softmax_rows_t(logits, 1.0), y, teacher);
  };
  auto eval = [&] { return scalar(build()); };
  CHECK(max_rel_err(fd_grad(logits, eval), bp_grad(logits, build)) <= 1e-6);
}

TEST_CASE("teacher detachment: q-producing parameters receive no gradient") {
  ModelSpec spec;
  spec.d_sn = 4;
  spec.d_si = 3;
  spec.d_t = 5;
  spec.hidden = 6;
  spec.d_c = 3;
  spec.num_classes = 3;
  JstnModel m = JstnModel::init(spec, {7, 1.0});
  Rng rng(47);
  Matrix x_sn = random_matrix(6, 4, rng);
  Matrix x_tl = random_matrix(6, 5, rng);
  const std::vector<int> y = {1, 2, 3, 1, 2, 3};

  zero_grads(m.parameters());
  NodePtr logits_sn = m.classify(m.encode(constant(x_sn), Role::SN));
  SoftLabelTable teacher = soft_label_table(logits_sn->values, y, 3, 5.0);
  NodePtr p_tl = softmax_rows_t(
      m.classify(m.encode(constant(x_tl), Role::T)), 1.0);
  backward(implicit_soft_loss(p_tl, y, teacher));

  for (const auto& pp : m.encoder_params(Role::SN)) {
    CHECK(pp->grad.size() == 0);  // never reached by backward
  }
  bool t_encoder_touched = false;
  for (const auto& pp : m.encoder_params(Role::T)) {
    t_encoder_touched =
        t_encoder_touched ||
        (pp->grad.size() != 0 && pp->grad.cwiseAbs().maxCoeff() > 0.0);
  }
  CHECK(t_encoder_touched);
  zero_grads(m.parameters());

  // Perturbing the teacher-producing side changes the value...
  const double before = scalar(implicit_soft_loss(p_tl, y, teacher));
  Matrix bumped = logits_sn->values;
  bumped.array() += 0.3;
  bumped(0, 0) += 1.0;
  SoftLabelTable teacher2 = soft_label_table(bumped, y, 3, 5.0);
  const double after = scalar(implicit_soft_loss(p_tl, y, teacher2));
  CHECK(before != after);
}

TEST_CASE("hard loss equals supervision loss on the same batch") {
  Rng rng(48);
  Matrix logits = random_matrix(7, 5, rng);
  const std::vector<int> y = {1, 5, 2, 3, 4, 1, 2};
  CHECK(scalar(implicit_hard_loss(constant(logits), y)) ==
        scalar(supervision_loss(constant(logits), y)));
  CHECK(scalar(implicit_hard_loss(constant(Matrix::Zero(2, 5)), {1, 2})) ==
        doctest::Approx(kLn5).epsilon(1e-12));
}

TEST_CASE("source-target divergence") {
  Matrix f_s(2, 2), f_t(2, 2);
  f_s << 0, 0, 1, 1;
  f_t << 0, 0, 1, 1;
  CHECK(source_target_divergence(f_s, {1, 2}, f_t, {1, 2}, 2) == 0.0);

  Matrix a(1, 2), b(1, 2);
  a << 0, 0;
  b << 1, 0;
  CHECK(source_target_divergence(a, {1}, b, {1}, 1) == 1.0);

  // Permutation invariance.
  Rng rng(49);
  Matrix f1 = random_matrix(6, 3, rng);
  Matrix f2 = random_matrix(4, 3, rng);
  const std::vector<int> y1 = {1, 2, 1, 2, 1, 2};
  const std::vector<int> y2 = {2, 1, 2, 1};
  Matrix f1p(6, 3);
  std::vector<int> y1p;
  const int perm[6] = {3, 0, 5, 2, 4, 1};
  for (int i = 0; i < 6; ++i) {
    f1p.row(i) = f1.row(perm[i]);
    y1p.push_back(y1[static_cast<std::size_t>(perm[i])]);
  }
  CHECK(source_target_divergence(f1, y1, f2, y2, 2) ==
        doctest::Approx(source_target_divergence(f1p, y1p, f2, y2, 2))
            .epsilon(1e-12));

  CHECK_THROWS_AS(source_target_divergence(a, {1}, b, {2}, 2), DataError);
}

TEST_CASE("source weight") {
  CHECK(source_weight(0.0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(source_weight(std::log(3.0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(source_weight(50.0) > 1.2499);
  double prev = source_weight(0.0);
  for (double d = 0.25; d <= 50.0; d += 0.25) {
    const double w = source_weight(d);
    // Strict growth while representable, never reaching 1.25.
    if (d <= 30.0) {
      CHECK(w > prev);
    } else {
      CHECK(w >= prev);
    }
    CHECK(w < 1.25);
    prev = w;
  }
  CHECK_THROWS_AS(source_weight(-0.1), ParameterError);
}

TEST_CASE("weighted implicit loss assembly") {
  NodePtr hd = constant(Matrix::Constant(1, 1, 0.8));
  NodePtr sn = constant(Matrix::Constant(1, 1, 0.5));
  NodePtr si = constant(Matrix::Constant(1, 1, 0.3));

  // alpha = 0 reproduces the hard loss alone.
  CHECK(scalar(weighted_implicit_loss(hd, sn, si, 1.1, 0.9, 0.0)) == 0.8);

  // Linearity probe at the reference alpha.
  const double alpha = 0.1, wsn = 1.07, wsi = 0.83;
  const double expect =
      (1 - alpha) * 0.8 + alpha * (wsn * 0.5 + wsi * 0.3) / 2.0;
  CHECK(scalar(weighted_implicit_loss(hd, sn, si, wsn, wsi, alpha)) ==
        doctest::Approx(expect).epsilon(1e-15));

  // Unit weights reproduce the unweighted variant.
  const double unweighted = (1 - alpha) * 0.8 + alpha * (0.5 + 0.3) / 2.0;
  CHECK(scalar(weighted_implicit_loss(hd, sn, si, 1.0, 1.0, alpha)) ==
        doctest::Approx(unweighted).epsilon(1e-15));

  // Single-source variant drops the missing term and its divisor.
  CHECK(scalar(weighted_implicit_loss(hd, sn, nullptr, wsn, 1.0, alpha)) ==
        doctest::Approx((1 - alpha) * 0.8 + alpha * wsn * 0.5)
            .epsilon(1e-15));

  CHECK_THROWS_AS(weighted_implicit_loss(hd, sn, si, 1, 1, -0.1),
                  ParameterError);
  CHECK_THROWS_AS(weighted_implicit_loss(hd, sn, si, 1, 1, 1.0001),
                  ParameterError);
}

TEST_CASE("centroid alignment loss") {
  // Identical per-class point sets: exactly zero.
  Rng rng(50);
  Matrix pts = random_matrix(6, 3, rng);
  const std::vector<int> y = {1, 1, 2, 2, 3, 3};
  CHECK(scalar(centroid_alignment_loss(constant(pts), y, constant(pts), y,
                                       3)) == 0.0);

  // One class, one point per side at (0,0) and (1,0): 1 + 0.25 + 0.25.
  Matrix s(1, 2), t(1, 2);
  s << 0, 0;
  t << 1, 0;
  CHECK(scalar(centroid_alignment_loss(constant(s), {1}, constant(t), {1},
                                       1)) == doctest::Approx(1.5));

  // mu_ST equals the mean over the union (checked numerically via the loss
  // of a shifted union against the weighted construction).
  Matrix fs = random_matrix(5, 3, rng);
  Matrix ft = random_matrix(3, 3, rng);
  const std::vector<int> ys = {1, 1, 1, 1, 1};
  const std::vector<int> yt = {1, 1, 1};
  Eigen::RowVectorXd mu_s = fs.colwise().mean();
  Eigen::RowVectorXd mu_t = ft.colwise().mean();
  Eigen::RowVectorXd mu_union =
      (fs.colwise().sum() + ft.colwise().sum()) / 8.0;
  Eigen::RowVectorXd mu_weighted = (5.0 * mu_s + 3.0 * mu_t) / 8.0;
  CHECK((mu_union - mu_weighted).norm() <= 1e-12);
  const double direct = (mu_s - mu_t).squaredNorm() +
                        (mu_s - mu_union).squaredNorm() +
                        (mu_t - mu_union).squaredNorm();
  CHECK(scalar(centroid_alignment_loss(constant(fs), ys, constant(ft), yt,
                                       1)) == doctest::Approx(direct));

  // Gradient flows into both sides.
  NodePtr fsp = parameter(fs);
  NodePtr ftp = parameter(ft);
  auto build = [&] {
    return centroid_alignment_loss(fsp, ys, ftp, yt, 1);
  };
  auto eval = [&] { return scalar(build()); };
  CHECK(max_rel_err(fd_grad(fsp, eval), bp_grad(fsp, build)) <= 1e-6);
  CHECK(max_rel_err(fd_grad(ftp, eval), bp_grad(ftp, build)) <= 1e-6);
}

TEST_CASE("representative alignment loss") {
  auto rep = [](double a, double b) {
    Matrix m(1, 2);
    m << a, b;
    return constant(m);
  };
  // K = 1, one rep per side at (0,0) and (3,4): 25 / (1*1*1).
  std::vector<RepNodes> src = {{1, {rep(0, 0)}}};
  std::vector<RepNodes> tgt = {{1, {rep(3, 4)}}};
  CHECK(scalar(representative_alignment_loss(src, tgt)) ==
        doctest::Approx(25.0));

  // All reps coincide: zero.
  std::vector<RepNodes> same = {{1, {rep(1, 2), rep(1, 2)}}};
  CHECK(scalar(representative_alignment_loss(same, same)) == 0.0);

  // Duplicating identical reps leaves the normalised value unchanged.
  std::vector<RepNodes> src2 = {{1, {rep(0, 0), rep(0, 0)}}};
  std::vector<RepNodes> tgt2 = {{1, {rep(3, 4), rep(3, 4)}}};
  CHECK(scalar(representative_alignment_loss(src2, tgt2)) ==
        doctest::Approx(25.0));

  // Class lacking reps on one side is skipped.
  std::vector<RepNodes> src3 = {{1, {rep(0, 0)}}, {2, {rep(5, 5)}}};
  std::vector<RepNodes> tgt3 = {{1, {rep(3, 4)}}};
  int used = 0;
  CHECK(scalar(representative_alignment_loss(src3, tgt3, &used)) ==
        doctest::Approx(25.0));
  CHECK(used == 1);
}

TEST_CASE("gradcheck harness passes and catches corrupted adjoints") {
  const auto results = run_gradcheck(1234, 2, 1e-4);
  CHECK(results.size() == gradcheck_loss_names().size());
  for (const auto& r : results) {
    CAPTURE(r.loss_name);
    CHECK(r.pass);
    CHECK(r.max_rel_err <= 1e-4);
  }
  // Negative control: a corrupted matmul adjoint must be detected.
  const auto bad = run_gradcheck(1234, 1, 1e-4, "matmul");
  bool any_fail = false;
  for (const auto& r : bad) any_fail = any_fail || !r.pass;
  CHECK(any_fail);
}

}  // TEST_SUITE
