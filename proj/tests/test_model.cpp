#include "jstn/model.hpp"

#include "jstn/losses.hpp"
#include "jstn/plr.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>

using namespace jstn;
using namespace jstn::ad;
using jstn_test::bp_grad;
using jstn_test::fd_grad;
using jstn_test::max_rel_err;
using jstn_test::random_matrix;

namespace {

ModelSpec small_spec() {
  ModelSpec s;
  s.d_sn = 5;
  s.d_si = 4;
  s.d_t = 6;
  s.hidden = 8;
  s.d_c = 3;
  s.num_classes = 5;
  return s;
}

void zero_parameters(JstnModel& m) {
  for (const auto& p : m.parameters()) p->values.setZero();
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("zero parameters give zero features and uniform softmax") {
  JstnModel m = JstnModel::init(small_spec(), {42, 1.0});
  zero_parameters(m);
  Rng rng(1);
  NodePtr x = constant(random_matrix(4, 5, rng));
  NodePtr f = m.encode(x, Role::SN);
  CHECK(f->values == Matrix::Zero(4, 3));

  NodePtr logits = m.classify(f);
  CHECK(logits->values == Matrix::Zero(4, 5));
  Matrix probs = softmax_rows_plain(logits->values, 1.0);
  CHECK(probs(0, 0) == doctest::Approx(0.2).epsilon(1e-12));

  NodePtr d = m.discriminate(f);
  CHECK(d->values == Matrix::Constant(4, 1, 0.5));
}

TEST_CASE("encoder output width is d_c for every role") {
  JstnModel m = JstnModel::init(small_spec(), {3, 1.0});
  Rng rng(2);
  NodePtr f_sn = m.encode(constant(random_matrix(7, 5, rng)), Role::SN);
  NodePtr f_si = m.encode(constant(random_matrix(3, 4, rng)), Role::SI);
  NodePtr f_t = m.encode(constant(random_matrix(5, 6, rng)), Role::T);
  CHECK(f_sn->cols() == 3);
  CHECK(f_si->cols() == 3);
  CHECK(f_t->cols() == 3);
  // The shared subspace admits row-stacking across domains.
  NodePtr stacked = concat_rows(concat_rows(f_sn, f_si), f_t);
  CHECK(stacked->rows() == 15);
  CHECK(stacked->cols() == 3);
}

TEST_CASE("encode rejects wrong input width naming the role") {
  JstnModel m = JstnModel::init(small_spec(), {3, 1.0});
  CHECK_THROWS_WITH_AS(m.encode(constant(Matrix::Zero(2, 7)), Role::SI),
                       doctest::Contains("SI"), DimensionError);
  CHECK_THROWS_AS(m.classify(constant(Matrix::Zero(2, 4))), DimensionError);
  CHECK_THROWS_AS(m.discriminate(constant(Matrix::Zero(2, 9))),
                  DimensionError);
}

TEST_CASE("encode gradients match finite differences") {
  JstnModel m = JstnModel::init(small_spec(), {9, 1.0});
  Rng rng(4);
  Matrix x = random_matrix(6, 6, rng);
  auto build = [&] { return sum(m.encode(constant(x), Role::T)); };
  auto eval = [&] { return build()->values(0, 0); };
  for (const auto& p : m.encoder_params(Role::T)) {
    CHECK(max_rel_err(fd_grad(p, eval), bp_grad(p, build)) <= 1e-4);
  }
}

TEST_CASE("discriminator BCE gradient at output 0.5 matches fd") {
  JstnModel m = JstnModel::init(small_spec(), {11, 1.0});
  zero_parameters(m);  // sigmoid output exactly 0.5
  Rng rng(5);
  Matrix x = random_matrix(4, 6, rng);
  auto build = [&] {
    NodePtr d = m.discriminate(m.encode(constant(x), Role::T));
    NodePtr dc = clamp(d, kProbEps, 1.0 - kProbEps);
    return scale(mean(log(dc)), -1.0);  // BCE with label 1
  };
  auto eval = [&] { return build()->values(0, 0); };
  for (const auto& p : m.discriminator_params()) {
    CHECK(max_rel_err(fd_grad(p, eval), bp_grad(p, build)) <= 1e-4);
  }
}

TEST_CASE("classifier argmax defines the neural-network label") {
  JstnModel m = JstnModel::init(small_spec(), {13, 1.0});
  Rng rng(6);
  NodePtr logits = m.classify(m.encode(constant(random_matrix(8, 6, rng)),
                                       Role::T));
  const auto y = argmax_rows(logits->values);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto row = logits->values.row(static_cast<Eigen::Index>(i));
    CHECK(row(y[i] - 1) == row.maxCoeff());
  }
}

TEST_CASE("init determinism and bounds") {
  const ModelSpec spec = small_spec();
  JstnModel a = JstnModel::init(spec, {77, 1.0});
  JstnModel b = JstnModel::init(spec, {77, 1.0});
  JstnModel c = JstnModel::init(spec, {78, 1.0});
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  const auto pc = c.parameters();
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    all_equal = all_equal && pa[i]->values == pb[i]->values;
    any_diff = any_diff || pa[i]->values != pc[i]->values;
  }
  CHECK(all_equal);
  CHECK(any_diff);

  // Weight magnitudes bounded by 1/sqrt(fan_in); biases zero.
  const auto enc = a.encoder_params(Role::SN);
  CHECK(enc[0]->values.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(5.0));
  CHECK(enc[1]->values == Matrix::Zero(1, 8));
  CHECK(enc[2]->values.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(8.0));

  ModelSpec bad = spec;
  bad.d_c = 0;
  CHECK_THROWS_AS(JstnModel::init(bad, {1, 1.0}), ParameterError);
}

TEST_CASE("forward pass is deterministic") {
  JstnModel m = JstnModel::init(small_spec(), {21, 1.0});
  Rng rng(8);
  Matrix x = random_matrix(5, 6, rng);
  Matrix f1 = m.encode(constant(x), Role::T)->values;
  Matrix f2 = m.encode(constant(x), Role::T)->values;
  CHECK(f1 == f2);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  JstnModel m = JstnModel::init(small_spec(), {99, 1.0});
  // Dirty the parameters so they are not fresh-init values.
  Rng rng(9);
  for (const auto& p : m.parameters()) {
    p->values += 0.01 * random_matrix(p->rows(), p->cols(), rng);
  }
  const std::string path =
      (std::filesystem::temp_directory_path() / "jstn_ckpt_test.txt").string();
  m.save(path, 0xabcdef1234ULL);

  std::uint64_t hash = 0;
  JstnModel loaded = JstnModel::load(path, &hash);
  CHECK(hash == 0xabcdef1234ULL);
  const auto pm = m.parameters();
  const auto pl = loaded.parameters();
  REQUIRE(pm.size() == pl.size());
  for (std::size_t i = 0; i < pm.size(); ++i) {
    CHECK(pm[i]->values == pl[i]->values);
  }
  CHECK(loaded.spec().d_sn == 5);
  CHECK(loaded.spec().num_classes == 5);
  std::remove(path.c_str());

  CHECK_THROWS_AS(JstnModel::load("/nonexistent/ckpt.txt"), DataError);
}

}  // TEST_SUITE
