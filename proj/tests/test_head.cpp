#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gma/head.hpp"
#include "test_util.hpp"

using gma::Tape;
using gma::Tensor;
using gma::Var;

TEST_CASE("fuse_and_pool takes the column max over valid fused rows") {
  Tape<double> t;
  Tensor<double> vm(1, 2, {1, 2});
  Tensor<double> vn(1, 2, {3, 0});
  auto h = t.val(gma::fuse_and_pool(t, t.leaf(vm), t.leaf(vn), {1}, {1}));
  CHECK(h.rows == 1);
  CHECK(h.data == std::vector<double>{3, 2});

  // all-negative features relu to zero
  Tensor<double> neg(2, 2, {-1, -2, -3, -4});
  auto h2 = t.val(gma::fuse_and_pool(t, t.leaf(neg), t.leaf(neg), {1, 1},
                                     {1, 1}));
  CHECK(h2.data == std::vector<double>{0, 0});

  // masked rows cannot win the max
  Tensor<double> vm3(2, 1, {5, 100});
  Tensor<double> vn3(1, 1, {2});
  auto h3 = t.val(gma::fuse_and_pool(t, t.leaf(vm3), t.leaf(vn3), {1, 0},
                                     {1}));
  CHECK(h3.data == std::vector<double>{5});
}

TEST_CASE("fuse_and_pool is invariant to row order") {
  std::mt19937_64 rng(1);
  Tape<double> t;
  Tensor<double> vm = test_util::random_tensor(3, 4, rng);
  Tensor<double> vn = test_util::random_tensor(2, 4, rng);
  Tensor<double> vm_perm(3, 4);
  std::vector<int> perm{2, 0, 1};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) vm_perm.at(i, j) = vm.at(perm[i], j);
  auto a = t.val(gma::fuse_and_pool(t, t.leaf(vm), t.leaf(vn), {1, 1, 1},
                                    {1, 1}));
  auto b = t.val(gma::fuse_and_pool(t, t.leaf(vm_perm), t.leaf(vn),
                                    {1, 1, 1}, {1, 1}));
  CHECK(a.data == b.data);
}

TEST_CASE("predict_logits gating and shape checks") {
  std::mt19937_64 rng(2);
  auto p = gma::HeadParams<double>::init(3, 4, 5, rng);

  // q = 0 kills the gate; with zero biases every logit is b2, so scores 0.5
  {
    gma::HeadParams<double> zb = p;
    zb.b1 = Tensor<double>(1, 4);
    zb.b2 = Tensor<double>(1, 5);
    Tape<double> t;
    auto vars = gma::HeadVars<double>::make(t, zb, false);
    Var h = t.leaf(Tensor<double>(1, 3, {1, 2, 3}));
    Var q = t.leaf(Tensor<double>(1, 3));
    auto logits = t.val(gma::predict_logits(t, h, q, vars));
    auto pred = gma::prediction_from_logits(logits);
    for (double s : pred.scores) CHECK(s == doctest::Approx(0.5));
  }

  // the gate is elementwise: scaling q by c and h by 1/c leaves logits fixed
  {
    Tape<double> t;
    auto vars = gma::HeadVars<double>::make(t, p, false);
    Tensor<double> hv(1, 3, {1, -2, 3});
    Tensor<double> qv(1, 3, {0.5, 4, -1});
    Tensor<double> hs = hv, qs = qv;
    double c = 2.5;
    for (double& v : hs.data) v /= c;
    for (double& v : qs.data) v *= c;
    auto l1 = t.val(gma::predict_logits(t, t.leaf(hv), t.leaf(qv), vars));
    auto l2 = t.val(gma::predict_logits(t, t.leaf(hs), t.leaf(qs), vars));
    for (size_t i = 0; i < l1.size(); ++i)
      CHECK(l1.data[i] == doctest::Approx(l2.data[i]).epsilon(1e-12));
  }

  {
    Tape<double> t;
    auto vars = gma::HeadVars<double>::make(t, p, false);
    Var bad = t.leaf(Tensor<double>(1, 2));
    Var q = t.leaf(Tensor<double>(1, 3));
    CHECK_THROWS_AS(gma::predict_logits(t, bad, q, vars),
                    std::invalid_argument);
  }

  CHECK_THROWS_AS(gma::HeadParams<double>::init(3, 4, 1, rng),
                  std::invalid_argument);
}

TEST_CASE("prediction_from_logits picks the argmax and sigmoids stably") {
  Tensor<double> logits(1, 4, {-800, 0, 3, 800});
  auto p = gma::prediction_from_logits(logits);
  CHECK(p.answer == 3);
  CHECK(p.scores[0] == doctest::Approx(0.0));
  CHECK(p.scores[1] == doctest::Approx(0.5));
  CHECK(p.scores[2] == doctest::Approx(1.0 / (1.0 + std::exp(-3.0))));
  CHECK(p.scores[3] == doctest::Approx(1.0));
  for (double s : p.scores) CHECK(std::isfinite(s));
}

TEST_CASE("soft loss closed forms") {
  Tape<double> t;
  // logit 0: softplus(0) - t*0 = ln 2 regardless of the target
  for (double target : {0.0, 0.3, 1.0}) {
    Var l = t.leaf(Tensor<double>(1, 1));
    auto loss = t.val(gma::soft_loss(t, l, Tensor<double>(1, 1, {target})));
    CHECK(loss.at(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  // saturated correct predictions cost ~0, wrong ones cost ~|y|
  {
    Var l = t.leaf(Tensor<double>(1, 2, {50, -50}));
    auto good = t.val(gma::soft_loss(t, l, Tensor<double>(1, 2, {1, 0})));
    CHECK(good.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    auto bad = t.val(gma::soft_loss(t, l, Tensor<double>(1, 2, {0, 1})));
    CHECK(bad.at(0, 0) == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(bad.all_finite());
  }
  // sums across elements
  {
    Var l = t.leaf(Tensor<double>(1, 3));
    auto loss = t.val(gma::soft_loss(t, l, Tensor<double>(1, 3)));
    CHECK(loss.at(0, 0) == doctest::Approx(3 * std::log(2.0)));
  }
  // targets outside [0,1] rejected
  {
    Var l = t.leaf(Tensor<double>(1, 1));
    CHECK_THROWS_AS(gma::soft_loss(t, l, Tensor<double>(1, 1, {1.5})),
                    std::invalid_argument);
  }
}

TEST_CASE("soft loss gradient is sigmoid(y) - t") {
  Tensor<double> logits(1, 4, {-2, -0.5, 0.7, 3});
  Tensor<double> targets(1, 4, {1, 0.6, 0, 0.3});
  Tape<double> t;
  Var l = t.leaf(logits, true);
  t.backward(gma::soft_loss(t, l, targets));
  auto g = t.grad(l);
  for (int j = 0; j < 4; ++j) {
    double y = logits.at(0, j);
    double s = 1.0 / (1.0 + std::exp(-y));
    CHECK(g.at(0, j) == doctest::Approx(s - targets.at(0, j)).epsilon(1e-10));
  }

  // and it agrees with central differences
  double err = test_util::check_gradients(
      {&logits}, [&](Tape<double>& tp, const std::vector<Var>& v) {
        return gma::soft_loss(tp, v[0], targets);
      });
  CHECK(err < 1e-4);
}

TEST_CASE("head pipeline end-to-end gradients") {
  std::mt19937_64 rng(5);
  auto p = gma::HeadParams<double>::init(4, 6, 5, rng);
  Tensor<double> vm = test_util::random_tensor(3, 4, rng);
  Tensor<double> vn = test_util::random_tensor(2, 4, rng);
  Tensor<double> q = test_util::random_tensor(1, 4, rng);
  Tensor<double> targets(1, 5, {1, 0, 0.3, 0, 1});

  std::vector<Tensor<double>*> params{&p.w1, &p.b1, &p.w2, &p.b2, &vm, &vn,
                                      &q};
  double err = test_util::check_gradients(
      params, [&](Tape<double>& t, const std::vector<Var>& v) {
        gma::HeadVars<double> vars{v[0], v[1], v[2], v[3]};
        Var h = gma::fuse_and_pool(t, v[4], v[5], {1, 1, 1}, {1, 1});
        Var logits = gma::predict_logits(t, h, v[6], vars);
        return gma::soft_loss(t, logits, targets);
      });
  CHECK(err < 1e-4);
}

TEST_CASE("vqa accuracy anchors and monotonicity") {
  CHECK(gma::vqa_accuracy(0) == 0.0);
  CHECK(gma::vqa_accuracy(1) == doctest::Approx(1.0 / 3.0));
  CHECK(gma::vqa_accuracy(2) == doctest::Approx(2.0 / 3.0));
  CHECK(gma::vqa_accuracy(3) == 1.0);
  CHECK(gma::vqa_accuracy(10) == 1.0);
  for (int v = 1; v <= 10; ++v)
    CHECK(gma::vqa_accuracy(v) >= gma::vqa_accuracy(v - 1));
  CHECK_THROWS_AS(gma::vqa_accuracy(-1), std::invalid_argument);
  CHECK_THROWS_AS(gma::vqa_accuracy(11), std::invalid_argument);
}
