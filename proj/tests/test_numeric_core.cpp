#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gma/adamax.hpp"
#include "gma/gradcheck.hpp"
#include "gma/tape.hpp"
#include "gma/tensor.hpp"
#include "test_util.hpp"

using gma::AdamaxState;
using gma::Tape;
using gma::Tensor;
using gma::Var;
using test_util::check_gradients;
using test_util::random_tensor;

TEST_CASE("matmul basics") {
  Tape<double> t;
  Var i2 = t.leaf(Tensor<double>::identity(2));
  Var a = t.leaf(Tensor<double>(2, 2, {1, 2, 3, 4}));
  Tensor<double> out = t.val(t.matmul(i2, a));
  CHECK(out.data == std::vector<double>{1, 2, 3, 4});

  Var r = t.leaf(Tensor<double>(1, 2, {1, 2}));
  Var c = t.leaf(Tensor<double>(2, 1, {3, 4}));
  CHECK(t.val(t.matmul(r, c)).at(0, 0) == doctest::Approx(11.0));

  CHECK_THROWS_AS(t.matmul(r, r), std::invalid_argument);
}

TEST_CASE("matmul backward matches b-transpose row sums and finite diffs") {
  std::mt19937_64 rng(7);
  Tensor<double> a = random_tensor(3, 4, rng);
  Tensor<double> b = random_tensor(4, 2, rng);

  Tape<double> t;
  Var av = t.leaf(a, true);
  Var bv = t.leaf(b, false);
  t.backward(t.sum_all(t.matmul(av, bv)));
  Tensor<double> ga = t.grad(av);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 4; ++k) {
      double row_sum = 0;
      for (int j = 0; j < 2; ++j) row_sum += b.at(k, j);
      CHECK(ga.at(i, k) == doctest::Approx(row_sum));
    }

  double err = check_gradients({&a, &b}, [](Tape<double>& t,
                                            const std::vector<Var>& v) {
    return t.sum_all(t.matmul(v[0], v[1]));
  });
  CHECK(err < 1e-7);
}

TEST_CASE("softmax_rows values, masking and normalization") {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>(1, 2, {0, 0}));
  Tensor<double> s = t.val(t.softmax_rows(x));
  CHECK(s.at(0, 0) == doctest::Approx(0.5));

  Var y = t.leaf(Tensor<double>(1, 2, {std::log(2.0), 0}));
  Tensor<double> sy = t.val(t.softmax_rows(y));
  CHECK(sy.at(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(sy.at(0, 1) == doctest::Approx(1.0 / 3.0));

  Var z = t.leaf(Tensor<double>(1, 3, {5, 5, 5}));
  Tensor<double> mask(1, 3, {1, 1, 0});
  Tensor<double> sz = t.val(t.softmax_rows(z, &mask));
  CHECK(sz.at(0, 0) == doctest::Approx(0.5));
  CHECK(sz.at(0, 2) == 0.0);

  Tensor<double> all_masked(1, 3, {0, 0, 0});
  CHECK_THROWS_AS(t.softmax_rows(z, &all_masked), std::runtime_error);

  // rows sum to 1 within 1e-9 on random inputs
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    Tape<double> tt;
    Tensor<double> r = random_tensor(4, 6, rng, 3.0);
    Tensor<double> sm = tt.val(tt.softmax_rows(tt.leaf(r)));
    for (int i = 0; i < 4; ++i) {
      double sum = 0;
      for (int j = 0; j < 6; ++j) sum += sm.at(i, j);
      CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("softmax_rows gradient") {
  std::mt19937_64 rng(11);
  Tensor<double> x = random_tensor(3, 5, rng);
  Tensor<double> w = random_tensor(3, 5, rng);
  double err = check_gradients({&x}, [&](Tape<double>& t,
                                         const std::vector<Var>& v) {
    Var s = t.softmax_rows(v[0]);
    return t.sum_all(t.elementwise_mul(s, t.leaf(w)));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("concat ops and adjoint split") {
  Tape<double> t;
  CHECK(t.val(t.concat_cols(t.leaf(Tensor<double>(1, 1, {1})),
                            t.leaf(Tensor<double>(1, 1, {2}))))
            .data == std::vector<double>{1, 2});
  CHECK(t.val(t.concat_rows(t.leaf(Tensor<double>(1, 2, {1, 2})),
                            t.leaf(Tensor<double>(1, 2, {3, 4}))))
            .data == std::vector<double>{1, 2, 3, 4});
  CHECK_THROWS_AS(t.concat_cols(t.leaf(Tensor<double>(1, 1)),
                                t.leaf(Tensor<double>(2, 1))),
                  std::invalid_argument);

  Tensor<double> a(2, 2, {1, 2, 3, 4});
  Tensor<double> b(2, 3, {5, 6, 7, 8, 9, 10});
  Tape<double> t2;
  Var av = t2.leaf(a, true);
  Var bv = t2.leaf(b, true);
  t2.backward(t2.sum_all(t2.concat_cols(av, bv)));
  CHECK(t2.grad(av).data == std::vector<double>(4, 1.0));
  CHECK(t2.grad(bv).data == std::vector<double>(6, 1.0));

  double err = check_gradients({&a, &b}, [](Tape<double>& t,
                                            const std::vector<Var>& v) {
    return t.sum_all(t.relu(t.concat_cols(v[0], v[1])));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("max_over_rows values, masking, permutation invariance") {
  Tape<double> t;
  CHECK(t.val(t.max_over_rows(t.leaf(Tensor<double>(2, 2, {1, 2, 3, 0}))))
            .data == std::vector<double>{3, 2});
  CHECK(t.val(t.max_over_rows(t.leaf(Tensor<double>(1, 3, {4, 5, 6}))))
            .data == std::vector<double>{4, 5, 6});

  std::vector<uint8_t> mask{0, 1};
  CHECK(t.val(t.max_over_rows(t.leaf(Tensor<double>(2, 2, {9, 9, 0, 0})),
                              &mask))
            .data == std::vector<double>{0, 0});

  std::vector<uint8_t> none{0, 0};
  CHECK_THROWS_AS(t.max_over_rows(t.leaf(Tensor<double>(2, 2)), &none),
                  std::runtime_error);

  std::mt19937_64 rng(5);
  Tensor<double> x = random_tensor(6, 4, rng);
  std::vector<uint8_t> m{1, 0, 1, 1, 0, 1};
  std::vector<int> perm{3, 5, 0, 2, 4, 1};
  Tensor<double> xp(6, 4);
  std::vector<uint8_t> mp(6);
  for (int i = 0; i < 6; ++i) {
    mp[i] = m[perm[i]];
    for (int j = 0; j < 4; ++j) xp.at(i, j) = x.at(perm[i], j);
  }
  Tape<double> t2;
  Tensor<double> a = t2.val(t2.max_over_rows(t2.leaf(x), &m));
  Tensor<double> b = t2.val(t2.max_over_rows(t2.leaf(xp), &mp));
  CHECK(a.data == b.data);
}

TEST_CASE("pointwise family") {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>(1, 2, {-1, 2}));
  CHECK(t.val(t.relu(x)).data == std::vector<double>{0, 2});
  CHECK(t.val(t.sigmoid(t.leaf(Tensor<double>(1, 1, {0})))).at(0, 0) ==
        doctest::Approx(0.5));
  CHECK(t.val(t.elementwise_mul(t.leaf(Tensor<double>(1, 2, {2, 3})),
                                t.leaf(Tensor<double>(1, 2, {4, 5}))))
            .data == std::vector<double>{8, 15});
  CHECK_THROWS_AS(t.elementwise_mul(x, t.leaf(Tensor<double>(1, 3))),
                  std::invalid_argument);

  std::mt19937_64 rng(13);
  Tensor<double> a = random_tensor(2, 3, rng);
  Tensor<double> b = random_tensor(2, 3, rng);
  double err = check_gradients({&a, &b}, [](Tape<double>& t,
                                            const std::vector<Var>& v) {
    Var h = t.elementwise_mul(t.tanh_(v[0]), t.sigmoid(v[1]));
    return t.sum_all(t.elementwise_mul(h, t.exp_(t.scale(v[0], 0.3))));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("backward contracts") {
  Tape<double> t;
  Var w = t.leaf(Tensor<double>(2, 2, {1, 2, 3, 4}), true);
  t.backward(t.sum_all(w));
  CHECK(t.grad(w).data == std::vector<double>(4, 1.0));

  Tape<double> t2;
  Var x = t2.leaf(Tensor<double>(1, 1, {3}), true);
  t2.backward(t2.sum_all(t2.elementwise_mul(x, x)));
  CHECK(t2.grad(x).at(0, 0) == doctest::Approx(6.0));

  // loss constant w.r.t. w
  Tape<double> t3;
  Var w3 = t3.leaf(Tensor<double>(2, 2, {1, 2, 3, 4}), true);
  Var c = t3.leaf(Tensor<double>(1, 1, {5}));
  t3.backward(t3.sum_all(c));
  CHECK(t3.grad(w3).data == std::vector<double>(4, 0.0));

  // non-scalar loss rejected
  Tape<double> t4;
  Var m = t4.leaf(Tensor<double>(2, 2), true);
  CHECK_THROWS_AS(t4.backward(m), std::invalid_argument);

  // repeated backward accumulates
  Tape<double> t5;
  Var x5 = t5.leaf(Tensor<double>(1, 1, {2}), true);
  Var l5 = t5.sum_all(x5);
  t5.backward(l5);
  t5.backward(l5);
  CHECK(t5.grad(x5).at(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("grad_check oracle on closed forms") {
  Tensor<double> x(1, 1, {3});
  double err = check_gradients({&x}, [](Tape<double>& t,
                                        const std::vector<Var>& v) {
    return t.sum_all(t.elementwise_mul(v[0], v[0]));
  });
  CHECK(err < 1e-7);

  // linear function: error near machine epsilon
  Tensor<double> y(1, 3, {1, -2, 0.5});
  double lin_err = check_gradients({&y}, [](Tape<double>& t,
                                            const std::vector<Var>& v) {
    return t.sum_all(t.scale(v[0], 2.5));
  });
  CHECK(lin_err < 1e-9);
}

TEST_CASE("adamax: zero grad is a no-op, first step is lr*sign(g)") {
  Tensor<double> p(1, 2, {0.5, -0.25});
  std::vector<double> zeros{0, 0};
  AdamaxState<double> st(0.01);
  st.add_slot(2);
  for (int i = 0; i < 3; ++i)
    gma::adamax_step<double>({&p}, {&zeros}, st);
  CHECK(p.data == std::vector<double>{0.5, -0.25});
  CHECK(st.t == 3);

  Tensor<double> q(1, 1, {1.0});
  std::vector<double> g{0.37};
  AdamaxState<double> st2(0.01);
  st2.add_slot(1);
  gma::adamax_step<double>({&q}, {&g}, st2);
  CHECK(q.at(0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));

  // |update| <= lr/(1-beta1^t) for constant gradients
  Tensor<double> r(1, 1, {0.0});
  std::vector<double> gc{-2.0};
  AdamaxState<double> st3(0.05);
  st3.add_slot(1);
  double prev = r.at(0, 0);
  for (int step = 1; step <= 2; ++step) {
    gma::adamax_step<double>({&r}, {&gc}, st3);
    double bound = 0.05 / (1.0 - std::pow(0.9, step));
    CHECK(std::fabs(r.at(0, 0) - prev) <= bound + 1e-12);
    prev = r.at(0, 0);
  }

  CHECK_THROWS_AS(AdamaxState<double>(0.0), std::invalid_argument);

  // u is non-negative and non-decreasing under beta2-decayed max updates
  AdamaxState<double> st4(0.01);
  st4.add_slot(1);
  Tensor<double> s(1, 1, {0.0});
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0, 1);
  double last_u = 0;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> gr{n(rng)};
    gma::adamax_step<double>({&s}, {&gr}, st4);
    double u = st4.slots[0].u[0];
    CHECK(u >= 0.0);
    CHECK(u >= 0.999 * last_u - 1e-15);
    last_u = u;
  }
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(23);
  Tape<double> t;
  Var x = t.leaf(Tensor<double>(1, 4, {1, 2, 3, 4}));
  CHECK(t.val(t.dropout(x, 0.0, true, rng)).data ==
        std::vector<double>{1, 2, 3, 4});
  CHECK(t.val(t.dropout(x, 0.5, false, rng)).data ==
        std::vector<double>{1, 2, 3, 4});
  CHECK_THROWS_AS(t.dropout(x, 1.0, true, rng), std::invalid_argument);

  Tape<double> t2;
  Var ones = t2.leaf(Tensor<double>::ones(100, 1000));
  Tensor<double> d = t2.val(t2.dropout(ones, 0.5, true, rng));
  double mean = 0;
  for (double v : d.data) mean += v;
  mean /= d.size();
  CHECK(std::fabs(mean - 1.0) < 0.02);
}

TEST_CASE("forward outputs finite for bounded inputs") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int rep = 0; rep < 5; ++rep) {
    Tape<double> t;
    Tensor<double> x(3, 3);
    for (double& v : x.data) v = u(rng);
    Var xv = t.leaf(x);
    Var out = t.softmax_rows(t.tanh_(xv));
    out = t.matmul(out, t.sigmoid(xv));
    CHECK(t.val(out).all_finite());
  }
}
