#include "jstn/autodiff.hpp"

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
Matrix m22(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}
}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("matmul forward") {
  Matrix id = Matrix::Identity(2, 2);
  Matrix m = m22(3.0, -1.0, 2.5, 7.0);
  CHECK(matmul(constant(id), constant(m))->values == m);

  Matrix a = m22(1, 2, 3, 4);
  Matrix b(2, 1);
  b << 1, 1;
  Matrix r = matmul(constant(a), constant(b))->values;
  CHECK(r(0, 0) == 3.0);
  CHECK(r(1, 0) == 7.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  NodePtr a = constant(Matrix::Zero(2, 3));
  NodePtr b = constant(Matrix::Zero(2, 2));
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       doctest::Contains("2x3"), DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(7);
  NodePtr a = parameter(random_matrix(3, 4, rng));
  NodePtr b = parameter(random_matrix(4, 2, rng));
  auto build = [&] { return sum(matmul(a, b)); };
  auto eval = [&] { return build()->values(0, 0); };
  CHECK(max_rel_err(fd_grad(a, eval), bp_grad(a, build)) <= 1e-6);
  CHECK(max_rel_err(fd_grad(b, eval), bp_grad(b, build)) <= 1e-6);
}

TEST_CASE("add identities and broadcast") {
  Rng rng(3);
  Matrix a = random_matrix(3, 2, rng);
  CHECK(add(constant(a), constant(Matrix::Zero(3, 2)))->values == a);

  Matrix one(1, 1), two(1, 1);
  one << 1.0;
  two << 2.0;
  CHECK(add(constant(one), constant(two))->values(0, 0) == 3.0);

  CHECK_THROWS_AS(add(constant(Matrix::Zero(2, 2)),
                      constant(Matrix::Zero(3, 2))),
                  DimensionError);
}

TEST_CASE("bias broadcast gradient is the column sum") {
  Rng rng(11);
  NodePtr x = constant(random_matrix(3, 4, rng));
  NodePtr bias = parameter(random_matrix(1, 4, rng));
  NodePtr w = constant(random_matrix(4, 1, rng));
  auto build = [&] { return sum(matmul(add(x, bias), w)); };
  auto eval = [&] { return build()->values(0, 0); };
  CHECK(max_rel_err(fd_grad(bias, eval), bp_grad(bias, build)) <= 1e-6);

  // Direct check of the column-sum contract with unit upstream gradient.
  NodePtr b2 = parameter(Matrix::Zero(1, 2));
  Matrix g = bp_grad(b2, [&] {
    return sum(add(constant(Matrix::Ones(3, 2)), b2));
  });
  CHECK(g(0, 0) == 3.0);
  CHECK(g(0, 1) == 3.0);
}

TEST_CASE("leaky_relu values and slope gradient") {
  Matrix x(1, 2);
  x << 5.0, -1.0;
  Matrix y = leaky_relu(constant(x), 0.01)->values;
  CHECK(y(0, 0) == 5.0);
  CHECK(y(0, 1) == doctest::Approx(-0.01));

  NodePtr p = parameter(Matrix::Constant(1, 1, -2.0));
  auto build = [&] { return sum(leaky_relu(p, 0.01)); };
  auto eval = [&] { return build()->values(0, 0); };
  Matrix g = bp_grad(p, build);
  CHECK(g(0, 0) == 0.01);
  CHECK(max_rel_err(fd_grad(p, eval), g) <= 1e-6);

  CHECK_THROWS_AS(leaky_relu(p, 0.0), ParameterError);
  CHECK_THROWS_AS(leaky_relu(p, 1.0), ParameterError);
}

TEST_CASE("softmax rows with temperature") {
  Matrix z(1, 2);
  z << 0.0, 0.0;
  Matrix s = softmax_rows_t(constant(z), 3.7)->values;
  CHECK(s(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

  z << 2.0, 0.0;
  s = softmax_rows_t(constant(z), 2.0)->values;
  CHECK(s(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(s(0, 1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));

  CHECK_THROWS_AS(softmax_rows_t(constant(z), 0.0), ParameterError);
  CHECK_THROWS_AS(softmax_rows_t(constant(z), -1.0), ParameterError);
}

TEST_CASE("softmax approaches uniform at large temperature") {
  Rng rng(5);
  Matrix z = random_matrix(4, 6, rng, -1.0, 1.0);
  Matrix s = softmax_rows_t(constant(z), 1e4)->values;
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    CHECK(s.row(r).maxCoeff() - s.row(r).minCoeff() < 1e-3);
  }
}

TEST_CASE("softmax rows sum to one and stay in (0,1)") {
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    Matrix z = random_matrix(5, 4, rng, -30.0, 30.0);
    const double t = rng.uniform(0.1, 20.0);
    Matrix s = softmax_rows_t(constant(z), t)->values;
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      CHECK(std::fabs(s.row(r).sum() - 1.0) <= 1e-12);
      CHECK(s.row(r).minCoeff() > 0.0);
      CHECK(s.row(r).maxCoeff() < 1.0);
    }
  }
}

TEST_CASE("elementwise and reduction primitives") {
  Matrix z(1, 1);
  z << 0.0;
  CHECK(sigmoid(constant(z))->values(0, 0) == 0.5);

  Matrix a(1, 2), b(1, 2);
  a << 1.0, 0.0;
  b << 0.0, 0.0;
  CHECK(sq_l2_rowdiff(constant(a), constant(b))->values(0, 0) == 1.0);

  Rng rng(23);
  NodePtr p = parameter(random_matrix(3, 3, rng, 0.2, 2.0));
  NodePtr q = parameter(random_matrix(3, 3, rng, 0.2, 2.0));

  struct Case {
    const char* name;
    std::function<NodePtr()> build;
  };
  const std::vector<Case> cases = {
      {"sigmoid", [&] { return sum(sigmoid(p)); }},
      {"log", [&] { return sum(log(p)); }},
      {"mean", [&] { return mean(p); }},
      {"sum", [&] { return sum(p); }},
      {"scale", [&] { return sum(scale(p, -2.5)); }},
      {"add_scalar", [&] { return sum(add_scalar(p, 1.5)); }},
      {"mul", [&] { return sum(mul(p, q)); }},
      {"sub", [&] { return sum(sub(p, q)); }},
      {"sq_l2_rowdiff", [&] { return sum(sq_l2_rowdiff(p, q)); }},
      {"clamp", [&] { return sum(clamp(p, 0.3, 1.8)); }},
      {"softmax", [&] { return sum(mul(q, softmax_rows_t(p, 2.0))); }},
      {"leaky_relu", [&] { return sum(leaky_relu(sub(p, q), 0.05)); }},
      {"rows", [&] { return sum(rows(p, {2, 0})); }},
      {"mean_rows", [&] { return sum(mul(rows(q, {0}), mean_rows(p))); }},
      {"concat_rows", [&] { return sum(sq_l2_rowdiff(concat_rows(p, q),
                                                     concat_rows(q, p))); }},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    auto eval = [&] { return c.build()->values(0, 0); };
    CHECK(max_rel_err(fd_grad(p, eval), bp_grad(p, c.build)) <= 1e-6);
  }
}

TEST_CASE("log rejects non-positive input") {
  Matrix z(1, 1);
  z << -0.5;
  CHECK_THROWS_AS(log(constant(z)), UsageError);
}

TEST_CASE("grad_reverse forward identity and reversal") {
  Matrix v(1, 1);
  v << 3.0;
  CHECK(grad_reverse(constant(v), 1.0)->values(0, 0) == 3.0);

  NodePtr x = parameter(Matrix::Ones(2, 2));
  Matrix g = bp_grad(x, [&] { return sum(grad_reverse(x, 1.0)); });
  CHECK(g == Matrix::Constant(2, 2, -1.0));

  Matrix g0 = bp_grad(x, [&] { return sum(grad_reverse(x, 0.0)); });
  CHECK(g0 == Matrix::Zero(2, 2));
}

TEST_CASE("grad_reverse composed twice restores the gradient exactly") {
  Rng rng(31);
  NodePtr x = parameter(random_matrix(2, 3, rng));
  NodePtr w = constant(random_matrix(3, 2, rng));
  Matrix direct = bp_grad(x, [&] { return sum(matmul(x, w)); });
  Matrix doubled = bp_grad(x, [&] {
    return sum(matmul(grad_reverse(grad_reverse(x, 1.0), 1.0), w));
  });
  CHECK(direct == doubled);
}

TEST_CASE("backward basics") {
  NodePtr x = parameter(Matrix::Zero(2, 2));
  backward(sum(x));
  CHECK(x->grad == Matrix::Ones(2, 2));

  // Repeated calls accumulate.
  backward(sum(x));
  CHECK(x->grad == Matrix::Constant(2, 2, 2.0));
  x->zero_grad();

  CHECK_THROWS_AS(backward(constant(Matrix::Zero(2, 2))), UsageError);
}

TEST_CASE("backward sums contributions over shared subexpressions") {
  // loss = sum(x*x + x); d/dx = 2x + 1, both paths into x.
  Matrix v(2, 2);
  v << 0.5, -1.0, 2.0, 0.0;
  NodePtr x = parameter(v);
  backward(sum(add(mul(x, x), x)));
  Matrix expect = 2.0 * v + Matrix::Ones(2, 2);
  CHECK(x->grad == expect);
  x->zero_grad();

  NodePtr y = parameter(Matrix::Ones(1, 3));
  backward(sum(add(y, y)));
  CHECK(y->grad == Matrix::Constant(1, 3, 2.0));
}

TEST_CASE("leaves without requires_grad never receive gradient") {
  NodePtr x = constant(Matrix::Ones(2, 2));
  NodePtr w = parameter(Matrix::Ones(2, 2));
  backward(sum(matmul(x, w)));
  CHECK(x->grad.size() == 0);
  CHECK(w->grad.size() != 0);
}

TEST_CASE("adam leaves parameters unchanged on zero gradient") {
  NodePtr w = parameter(Matrix::Constant(2, 2, 1.5));
  std::vector<NodePtr> params = {w};
  AdamState st = make_adam(params, 0.1);
  adam_step(params, st);
  CHECK(w->values == Matrix::Constant(2, 2, 1.5));
}

TEST_CASE("adam descends on w^2") {
  NodePtr w = parameter(Matrix::Constant(1, 1, 1.0));
  std::vector<NodePtr> params = {w};
  AdamState st = make_adam(params, 0.1);
  backward(mul(w, w));
  adam_step(params, st);
  CHECK(w->values(0, 0) < 1.0);
  CHECK(w->grad == Matrix::Zero(1, 1));  // zeroed by the step
}

TEST_CASE("adam reaches a small gradient on a 2-D convex quadratic") {
  // f(d) = d A d^T with d = w - c, A symmetric positive definite.
  Matrix a(2, 2);
  a << 3.0, 0.5, 0.5, 1.0;
  Matrix c(1, 2);
  c << -0.5, 0.3;
  NodePtr w = parameter(Matrix::Ones(1, 2));
  std::vector<NodePtr> params = {w};
  AdamState st = make_adam(params, 0.05);
  for (int i = 0; i < 500; ++i) {
    NodePtr d = sub(w, constant(c));
    backward(sum(mul(d, matmul(d, constant(a)))));
    adam_step(params, st);
  }
  Matrix diff = w->values - c;
  Matrix grad = diff * (a + a.transpose());
  CHECK(grad.norm() < 1e-3);
}

}  // TEST_SUITE
