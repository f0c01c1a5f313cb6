#include <cmath>

#include "doctest.h"
#include "mp/autodiff.hpp"
#include "mp/layers.hpp"
#include "mp/tensor.hpp"
#include "test_support.hpp"

using namespace mp;

TEST_SUITE_BEGIN("numerics");

TEST_CASE("softmax of equal logits is uniform") {
  const auto out = softmax_rows(Tensor<double>::from_rows({{0.0, 0.0}}));
  CHECK(out(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax hand-evaluated on log-odds") {
  // e^x / sum e^x with x = [ln 1, ln 3] gives [1/4, 3/4]
  const auto out = softmax_rows(Tensor<double>::from_rows({{std::log(1.0), std::log(3.0)}}));
  CHECK(out(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(out(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax is shift invariant") {
  const auto a = softmax_rows(Tensor<double>::from_rows({{5.0, 5.0}}));
  const auto b = softmax_rows(Tensor<double>::from_rows({{0.0, 0.0}}));
  CHECK(a(0, 0) == doctest::Approx(b(0, 0)).epsilon(1e-12));
  CHECK(a(0, 1) == doctest::Approx(b(0, 1)).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and lie in [0,1] for random inputs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto t = mp_test::random_tensor<double>(4, 7, seed, 5.0);
    const auto s = softmax_rows(t);
    CHECK(s.all_finite());
    for (std::int64_t r = 0; r < s.rows(); ++r) {
      double sum = 0;
      for (std::int64_t c = 0; c < s.cols(); ++c) {
        CHECK(s(r, c) >= 0.0);
        CHECK(s(r, c) <= 1.0);
        sum += s(r, c);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("zscore of 1,2,3") {
  // mean 2, population std sqrt(2/3)
  const std::vector<double> v{1, 2, 3};
  const auto z = zscore_normalize(v);
  CHECK(z[0] == doctest::Approx(-1.2247448714).epsilon(1e-9));
  CHECK(z[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(z[2] == doctest::Approx(1.2247448714).epsilon(1e-9));
}

TEST_CASE("zscore zero-variance guard") {
  const std::vector<double> v{5, 5, 5};
  const auto z = zscore_normalize(v);
  for (double x : z) CHECK(x == 0.0);
}

TEST_CASE("zscore affine invariance with positive scale") {
  RandomSource rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(6);
    for (auto& x : v) x = rng.gaussian();
    const double a = 0.1 + 5.0 * rng.uniform01();
    const double b = 10.0 * (rng.uniform01() - 0.5);
    std::vector<double> w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) w[i] = a * v[i] + b;
    const auto zv = zscore_normalize(v);
    const auto zw = zscore_normalize(w);
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(zw[i] == doctest::Approx(zv[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("zscore rejects empty input") {
  std::vector<double> v;
  CHECK_THROWS_AS(zscore_normalize(v), DataError);
}

TEST_CASE("mlp with zero weights is the constant bias map") {
  ParamStore<double> store(1);
  mlp_init(store, "mlp", 4, 3);
  store.set("mlp.w1", Tensor<double>(4, 3));
  store.set("mlp.w2", Tensor<double>(3, 3));
  store.set("mlp.b2", Tensor<double>::from_rows({{0.5, -1.0, 2.0}}));
  ad::Graph<double> g(store, false);
  const auto out = mlp_forward(g, "mlp", g.constant(mp_test::random_tensor<double>(5, 4, 7)));
  for (std::int64_t r = 0; r < 5; ++r) {
    CHECK(out.value()(r, 0) == doctest::Approx(0.5));
    CHECK(out.value()(r, 1) == doctest::Approx(-1.0));
    CHECK(out.value()(r, 2) == doctest::Approx(2.0));
  }
}

TEST_CASE("mlp preserves the index dimension") {
  ParamStore<double> store(2);
  mlp_init(store, "mlp", 512, 512);
  ad::Graph<double> g(store, false);
  const auto out = mlp_forward(g, "mlp", g.constant(mp_test::random_tensor<double>(7, 512, 3)));
  CHECK(out.rows() == 7);
  CHECK(out.cols() == 512);
}

TEST_CASE("mlp row count preserved for 1..64 rows") {
  ParamStore<double> store(3);
  mlp_init(store, "mlp", 6, 6);
  for (std::int64_t rows = 1; rows <= 64; ++rows) {
    ad::Graph<double> g(store, false);
    const auto out = mlp_forward(g, "mlp", g.constant(mp_test::random_tensor<double>(rows, 6, rows)));
    CHECK(out.rows() == rows);
  }
}

TEST_CASE("gelu fixed point at zero keeps zero input at zero") {
  ParamStore<double> store(4);
  mlp_init(store, "mlp", 3, 3);
  store.set("mlp.w1", mp_test::random_tensor<double>(3, 3, 1));
  ad::Graph<double> g(store, false);
  const auto out = mlp_forward(g, "mlp", g.constant(Tensor<double>(2, 3)));
  for (double v : out.value().raw()) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("mlp rejects width mismatch naming the tensor") {
  ParamStore<double> store(5);
  mlp_init(store, "mlp", 4, 3);
  ad::Graph<double> g(store, false);
  CHECK_THROWS_WITH_AS(mlp_forward(g, "mlp", g.constant(Tensor<double>(2, 5))),
                       doctest::Contains("mlp.w1"), ConfigError);
}

TEST_CASE("value_and_grad on w squared") {
  ParamStore<double> store(0);
  store.add("w", Tensor<double>::from_rows({{3.0}}));
  auto [value, tape] = ad::value_and_grad<double>(store, [](ad::Graph<double>& g) {
    auto w = g.param("w");
    return ad::sum_all(ad::hadamard(w, w));
  });
  CHECK(value == doctest::Approx(9.0));
  CHECK(tape.at("w")(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("softmax cross-entropy gradient is p minus one-hot") {
  ParamStore<double> store(0);
  store.add("logits", Tensor<double>(1, 2));
  auto [value, tape] = ad::value_and_grad<double>(store, [](ad::Graph<double>& g) {
    auto probs = ad::softmax_rows(g.param("logits"));
    Tensor<double> mask(1, 2);
    mask(0, 0) = 1.0;  // target class 0
    return ad::scale(ad::sum_all(ad::hadamard(ad::log(probs), g.constant(std::move(mask)))), -1.0);
  });
  CHECK(value == doctest::Approx(std::log(2.0)));
  CHECK(tape.at("logits")(0, 0) == doctest::Approx(-0.5));
  CHECK(tape.at("logits")(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("frozen parameters receive no gradient entry") {
  ParamStore<double> store(0);
  store.add("w", Tensor<double>::from_rows({{2.0}}), /*trainable=*/true);
  store.add("frozen", Tensor<double>::from_rows({{4.0}}), /*trainable=*/false);
  auto [value, tape] = ad::value_and_grad<double>(store, [](ad::Graph<double>& g) {
    return ad::sum_all(ad::hadamard(g.param("w"), g.param("frozen")));
  });
  CHECK(value == doctest::Approx(8.0));
  CHECK(tape.has("w"));
  CHECK_FALSE(tape.has("frozen"));
}

namespace {

/// A random 2-layer MLP loss over all trainable parameters.
ad::ComputeFn<double> mlp_loss(const Tensor<double>& input) {
  return [input](ad::Graph<double>& g) {
    auto h = ad::gelu(ad::add_rowvec(ad::matmul(g.constant(input), g.param("mlp.w1")), g.param("mlp.b1")));
    auto out = ad::add_rowvec(ad::matmul(h, g.param("mlp.w2")), g.param("mlp.b2"));
    return ad::mean_all(ad::hadamard(out, out));
  };
}

}  // namespace

TEST_CASE("random 2-layer mlp matches central finite differences") {
  ParamStore<double> store(0);
  mlp_init(store, "mlp", 5, 4);
  mp_test::randomize_all(store, 42, 0.5);
  const auto input = mp_test::random_tensor<double>(3, 5, 9, 0.8);
  const double err = ad::finite_diff_check(store, mlp_loss(input), 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("finite difference check over elementary ops") {
  // softmax, layer norm, gelu, slices, clamp and log composed into one loss
  ParamStore<double> store(0);
  store.add("a", mp_test::random_tensor<double>(3, 4, 21, 0.7));
  store.add("b", mp_test::random_tensor<double>(3, 4, 22, 0.7));
  store.add("gain", mp_test::random_tensor<double>(1, 4, 23, 0.3));
  store.add("bias", mp_test::random_tensor<double>(1, 4, 24, 0.3));
  auto fn = [](ad::Graph<double>& g) {
    auto x = ad::layer_norm_rows(ad::hadamard(g.param("a"), g.param("b")), g.param("gain"),
                                 g.param("bias"), 1e-5);
    auto sm = ad::softmax_rows(ad::matmul_nt(x, g.param("b")));
    auto picked = ad::slice_cols(ad::slice_rows(ad::matmul(sm, g.param("a")), 0, 2), 1, 3);
    auto bounded = ad::clamp(ad::softmax_rows(picked), 1e-7, 1.0 - 1e-7);
    return ad::scale(ad::mean_all(ad::log(bounded)), -1.0);
  };
  const auto report = ad::finite_diff_report(store, fn, 1e-5);
  CHECK(report.max_rel_error < 1e-4);
  CHECK(report.entries_checked == 3 * 4 + 3 * 4 + 4 + 4);
}

TEST_CASE("finite difference check flags a doubled gradient as 0.5 error") {
  ParamStore<double> store(0);
  store.add("w", Tensor<double>::from_rows({{1.5, -2.0}}));
  auto fn = [](ad::Graph<double>& g) {
    auto w = g.param("w");
    // square with an intentionally doubled backward rule
    auto bad = ad::detail::make_op<double>("bad_square", hadamard(w.value(), w.value()), {w},
                                           [](ad::Node<double>& n) {
                                             auto dx = hadamard(n.grad, n.parents[0]->value);
                                             n.parents[0]->accumulate(scale(dx, 4.0));
                                           });
    return ad::sum_all(bad);
  };
  const double err = ad::finite_diff_check(store, fn);
  CHECK(err == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(err > 1e-4);  // the check fails as it should
}

TEST_CASE("finite difference check with no trainable parameters is empty") {
  ParamStore<double> store(0);
  store.add("frozen", Tensor<double>::from_rows({{1.0, 2.0}}), /*trainable=*/false);
  const auto report = ad::finite_diff_report(store, [](ad::Graph<double>& g) {
    return ad::sum_all(g.param("frozen"));
  });
  CHECK(report.max_rel_error == 0.0);
  CHECK(report.entries_checked == 0);
}

TEST_CASE("non-finite loss raises a numerical error naming the op") {
  ParamStore<double> store(0);
  store.add("w", Tensor<double>::from_rows({{-1.0}}));
  CHECK_THROWS_WITH_AS(
      ad::value_and_grad<double>(store, [](ad::Graph<double>& g) {
        return ad::sum_all(ad::log(g.param("w")));  // log of a negative
      }),
      doctest::Contains("log"), NumericalError);
}

TEST_CASE("exported tensor ops keep values finite") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = mp_test::random_tensor<double>(4, 6, seed, 3.0);
    const auto b = mp_test::random_tensor<double>(4, 6, seed + 100, 3.0);
    CHECK(softmax_rows(a).all_finite());
    CHECK(gelu(a).all_finite());
    CHECK(add(a, b).all_finite());
    CHECK(hadamard(a, b).all_finite());
    CHECK(matmul_nt(a, b).all_finite());
  }
}

TEST_CASE("parameter init is reproducible and order independent") {
  ParamStore<double> s1(7);
  s1.add_trunc_normal("alpha", 2, 3);
  s1.add_trunc_normal("beta", 2, 3);
  ParamStore<double> s2(7);
  s2.add_trunc_normal("beta", 2, 3);
  s2.add_trunc_normal("alpha", 2, 3);
  CHECK(s1.value("alpha") == s2.value("alpha"));
  CHECK(s1.value("beta") == s2.value("beta"));
  ParamStore<double> s3(8);
  s3.add_trunc_normal("alpha", 2, 3);
  CHECK_FALSE(s1.value("alpha") == s3.value("alpha"));
}

TEST_CASE("duplicate parameter names are rejected") {
  ParamStore<double> store(0);
  store.add_zeros("w", 1, 1);
  CHECK_THROWS_AS(store.add_zeros("w", 1, 1), ConfigError);
}

TEST_SUITE_END();
