#include <cmath>

#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "thn/tape.hpp"

using namespace thn;
using fixtures::max_abs_diff;
using fixtures::random_tensor;

namespace {

Tensor run_conv(const Tensor& in, const Tensor& w, const Tensor* bias, ad::ConvSpec spec) {
  ad::Tape t;
  ad::Var x = t.leaf(in);
  ad::Var wv = t.leaf(w);
  ad::Var bv = bias ? t.leaf(*bias) : ad::Var{};
  return t.value(t.conv2d(x, wv, bv, spec));
}

}  // namespace

TEST_CASE("conv2d identity and box-sum cases") {
  Tensor in = Tensor::from(Shape{1, 1, 1, 1}, {5.0});
  Tensor w = Tensor::from(Shape{1, 1, 1, 1}, {1.0});
  CHECK(run_conv(in, w, nullptr, {})(0, 0, 0, 0) == 5.0);

  Tensor ones = Tensor::full(Shape{1, 1, 3, 3}, 1.0);
  Tensor k3 = Tensor::full(Shape{1, 1, 3, 3}, 1.0);
  Tensor out = run_conv(ones, k3, nullptr, {.stride = 1, .pad = 0});
  CHECK(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out(0, 0, 0, 0) == 9.0);
}

TEST_CASE("conv2d matches the naive-loop oracle") {
  Rng rng(7001);
  Tensor in = random_tensor(Shape{2, 3, 8, 8}, rng);
  Tensor w = random_tensor(Shape{4, 3, 3, 3}, rng);
  Tensor b = random_tensor(Shape{4, 1, 1, 1}, rng);
  for (ad::ConvSpec spec : {ad::ConvSpec{1, 0, 1}, ad::ConvSpec{1, 1, 1}, ad::ConvSpec{1, 2, 2}}) {
    Tensor got = run_conv(in, w, &b, spec);
    Tensor want = oracle::conv2d_naive(in, w, &b, spec.stride, spec.pad, spec.dilation);
    CHECK(max_abs_diff(got, want) < 1e-12);
  }
}

TEST_CASE("conv2d rejects mismatched shapes with both reported") {
  Tensor in = Tensor::zeros(Shape{1, 3, 4, 4});
  Tensor w = Tensor::zeros(Shape{2, 4, 3, 3});
  CHECK_THROWS_AS(run_conv(in, w, nullptr, {}), DimensionError);
  try {
    run_conv(in, w, nullptr, {});
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(1,3,4,4)") != std::string::npos);
    CHECK(msg.find("(2,4,3,3)") != std::string::npos);
  }
}

TEST_CASE("global_avg_pool") {
  ad::Tape t;
  SUBCASE("constant plane") {
    Tensor c = Tensor::full(Shape{2, 3, 4, 5}, 3.5);
    Tensor out = t.value(t.global_avg_pool(t.leaf(c)));
    CHECK(out.shape() == Shape{2, 3, 1, 1});
    for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == 3.5);
  }
  SUBCASE("arithmetic mean") {
    Tensor x = Tensor::from(Shape{1, 1, 2, 2}, {1, 3, 5, 7});
    CHECK(t.value(t.global_avg_pool(t.leaf(x)))(0, 0, 0, 0) == 4.0);
  }
  SUBCASE("zeros stay zero") {
    Tensor z = Tensor::zeros(Shape{1, 2, 3, 3});
    Tensor out = t.value(t.global_avg_pool(t.leaf(z)));
    for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
  }
}

TEST_CASE("sigmoid values and symmetry") {
  ad::Tape t;
  Tensor x = Tensor::from(Shape{1, 1, 1, 3}, {0.0, 2.0, -17.0});
  Tensor y = t.value(t.sigmoid(t.leaf(x)));
  CHECK(y[0] == 0.5);
  CHECK(y[1] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));

  Rng rng(42);
  Tensor r = random_tensor(Shape{1, 2, 5, 5}, rng, 3.0);
  Tensor neg = r;
  for (std::int64_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
  ad::Tape t2;
  Tensor a = t2.value(t2.sigmoid(t2.leaf(r)));
  Tensor b = t2.value(t2.sigmoid(t2.leaf(neg)));
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] + b[i] - 1.0) < 1e-12);
  for (std::int64_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] > 0.0);
    CHECK(a[i] < 1.0);
  }
}

TEST_CASE("elementwise add/mul with channel broadcast") {
  Rng rng(99);
  Tensor x = random_tensor(Shape{1, 2, 3, 3}, rng);
  ad::Tape t;
  ad::Var xv = t.leaf(x);

  Tensor ones = Tensor::full(Shape{1, 2, 1, 1}, 1.0);
  CHECK(max_abs_diff(t.value(t.mul(xv, t.leaf(ones))), x) == 0.0);

  Tensor zeros = Tensor::zeros(Shape{1, 2, 3, 3});
  CHECK(max_abs_diff(t.value(t.add(xv, t.leaf(zeros))), x) == 0.0);

  Tensor wgt = Tensor::from(Shape{1, 2, 1, 1}, {0.5, 2.0});
  Tensor scaled = t.value(t.mul(xv, t.leaf(wgt)));
  for (int y = 0; y < 3; ++y)
    for (int c = 0; c < 3; ++c) {
      CHECK(scaled(0, 0, y, c) == 0.5 * x(0, 0, y, c));
      CHECK(scaled(0, 1, y, c) == 2.0 * x(0, 1, y, c));
    }

  Tensor bad = Tensor::zeros(Shape{1, 3, 1, 1});
  CHECK_THROWS_AS(t.mul(xv, t.leaf(bad)), DimensionError);
}

TEST_CASE("center_crop windows") {
  ad::Tape t;
  SUBCASE("full crop is the identity") {
    Rng rng(5);
    Tensor x = random_tensor(Shape{1, 2, 7, 7}, rng);
    CHECK(max_abs_diff(t.value(t.center_crop(t.leaf(x), 7)), x) == 0.0);
  }
  SUBCASE("9 -> 7 keeps rows 1..7") {
    Tensor x(Shape{1, 1, 9, 9});
    for (int y = 0; y < 9; ++y)
      for (int c = 0; c < 9; ++c) x(0, 0, y, c) = y;
    Tensor out = t.value(t.center_crop(t.leaf(x), 7));
    for (int y = 0; y < 7; ++y)
      for (int c = 0; c < 7; ++c) CHECK(out(0, 0, y, c) == y + 1);
  }
  SUBCASE("15 -> 7 keeps rows 4..10") {
    Tensor x(Shape{1, 1, 15, 15});
    for (int y = 0; y < 15; ++y)
      for (int c = 0; c < 15; ++c) x(0, 0, y, c) = y * 100 + c;
    Tensor out = t.value(t.center_crop(t.leaf(x), 7));
    CHECK(out(0, 0, 0, 0) == 404);
    CHECK(out(0, 0, 6, 6) == 1010);
  }
  SUBCASE("oversized crop rejected") {
    Tensor x = Tensor::zeros(Shape{1, 1, 5, 5});
    CHECK_THROWS_AS(t.center_crop(t.leaf(x), 7), DimensionError);
  }
}

TEST_CASE("softmax2 values, shift invariance, normalization") {
  ad::Tape t;
  Tensor z = Tensor::zeros(Shape{1, 2, 1, 1});
  Tensor out = t.value(t.softmax2(t.leaf(z)));
  CHECK(out(0, 0, 0, 0) == 0.5);

  Tensor l = Tensor::from(Shape{1, 2, 1, 1}, {1.0, 3.0});
  Tensor p = t.value(t.softmax2(t.leaf(l)));
  const double e2 = std::exp(2.0);
  CHECK(p(0, 0, 0, 0) == doctest::Approx(1.0 / (1.0 + e2)).epsilon(1e-15));
  CHECK(p(0, 1, 0, 0) == doctest::Approx(e2 / (1.0 + e2)).epsilon(1e-15));

  Rng rng(12);
  Tensor a = random_tensor(Shape{1, 2, 4, 4}, rng);
  Tensor shifted = a;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      shifted(0, 0, y, x) += 11.25;
      shifted(0, 1, y, x) += 11.25;
    }
  Tensor pa = t.value(t.softmax2(t.leaf(a)));
  Tensor pb = t.value(t.softmax2(t.leaf(shifted)));
  CHECK(max_abs_diff(pa, pb) < 1e-12);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      CHECK(std::fabs(pa(0, 0, y, x) + pa(0, 1, y, x) - 1.0) < 1e-12);

  Tensor bad = Tensor::zeros(Shape{1, 3, 2, 2});
  CHECK_THROWS_AS(t.softmax2(t.leaf(bad)), DimensionError);
}

TEST_CASE("ops are pure: reruns are bitwise identical and inputs untouched") {
  Rng rng(77);
  Tensor in = random_tensor(Shape{1, 3, 6, 6}, rng);
  Tensor w = random_tensor(Shape{2, 3, 3, 3}, rng);
  const Tensor in_copy = in, w_copy = w;

  Tensor first = run_conv(in, w, nullptr, {.stride = 1, .pad = 1});
  Tensor second = run_conv(in, w, nullptr, {.stride = 1, .pad = 1});
  CHECK(max_abs_diff(first, second) == 0.0);
  CHECK(max_abs_diff(in, in_copy) == 0.0);
  CHECK(max_abs_diff(w, w_copy) == 0.0);
  CHECK(first.all_finite());
}
