#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cia/prng.hpp>
#include <cia/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "testutil.hpp"

using namespace cia;
using testutil::as_vec;

// independent convolution oracle: different loop structure, no shared code
// with the library implementation.
static Tensor naive_conv(const Tensor& img, const Tensor& ker, Padding pad) {
  const int h = img.shape()[0], w = img.shape()[1], cin = img.shape()[2];
  const int k = ker.shape()[0], cout = ker.shape()[3];
  const int lo = -(k / 2), hi = k - 1 - k / 2;
  Tensor out({h, w, cout});
  for (int co = 0; co < cout; ++co)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int dy = lo; dy <= hi; ++dy)
          for (int dx = lo; dx <= hi; ++dx)
            for (int ci = 0; ci < cin; ++ci) {
              int sy = y + dy, sx = x + dx;
              if (pad == Padding::Replicate) {
                sy = std::min(std::max(sy, 0), h - 1);
                sx = std::min(std::max(sx, 0), w - 1);
              } else if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
                continue;
              }
              acc += static_cast<double>(img.at(sy, sx, ci)) *
                     static_cast<double>(
                         ker[((dy - lo) * k + (dx - lo)) * cin * cout + ci * cout + co]);
            }
        out.at(y, x, co) = static_cast<float>(acc);
      }
  return out;
}

TEST_CASE("tensor shape validation") {
  CHECK_NOTHROW(Tensor({4}));
  CHECK_NOTHROW(Tensor({2, 3, 4, 5}));
  CHECK_THROWS_AS(Tensor(std::vector<int>{}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({1, 2, 3, 4, 5}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({3, 0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({-1}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.f, 2.f, 3.f}), std::invalid_argument);
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  for (int i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0f);
  Tensor f({2}, 0.25f);
  CHECK(as_vec(f) == std::vector<float>{0.25f, 0.25f});
}

TEST_CASE("tensor reshape preserves data and checks size") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = t.reshaped({6});
  CHECK(r.shape() == std::vector<int>{6});
  CHECK(as_vec(r) == as_vec(t));
  CHECK_THROWS_AS(t.reshaped({4}), std::invalid_argument);
}

TEST_CASE("elementwise map matches scalar math") {
  Tensor t = Tensor::from({3}, {-1.0f, 0.0f, 2.0f});
  Tensor s = elementwise_map(t, ScalarFn::Tanh);
  for (int i = 0; i < 3; ++i)
    CHECK(s[i] == doctest::Approx(std::tanh((double)t[i])).epsilon(1e-7));

  Tensor r = elementwise_map(t, ScalarFn::Relu);
  CHECK(as_vec(r) == std::vector<float>{0.0f, 0.0f, 2.0f});

  // saturation: tanh(20) is 1 to well below float precision
  Tensor big = Tensor::from({1}, {20.0f});
  CHECK(std::abs(elementwise_map(big, ScalarFn::Tanh)[0] - 1.0f) < 1e-8f);

  // derivative channels agree with scalar central differences
  for (auto [fn, dfn] : {std::pair{ScalarFn::Tanh, ScalarFn::DTanh},
                         std::pair{ScalarFn::Sigmoid, ScalarFn::DSigmoid},
                         std::pair{ScalarFn::Sin, ScalarFn::DSin}}) {
    Tensor x = Tensor::from({5}, {-2.0f, -0.3f, 0.1f, 0.9f, 3.0f});
    Tensor d = elementwise_map(x, dfn);
    const double h = 1e-4;
    for (int i = 0; i < 5; ++i) {
      double vp = (double)elementwise_map(Tensor::from({1}, {(float)(x[i] + h)}), fn)[0];
      double vm = (double)elementwise_map(Tensor::from({1}, {(float)(x[i] - h)}), fn)[0];
      CHECK(d[i] == doctest::Approx((vp - vm) / (2 * h)).epsilon(2e-3));
    }
  }
}

TEST_CASE("elementwise binary ops") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 2}, {4, 3, 2, 1});
  CHECK(as_vec(elementwise_binary(a, b, BinaryOp::Add)) == std::vector<float>{5, 5, 5, 5});
  CHECK(as_vec(elementwise_binary(a, b, BinaryOp::Sub)) == std::vector<float>{-3, -1, 1, 3});
  CHECK(as_vec(elementwise_binary(a, b, BinaryOp::Mul)) == std::vector<float>{4, 6, 6, 4});
  CHECK(as_vec(elementwise_binary(a, b, BinaryOp::Min)) == std::vector<float>{1, 2, 2, 1});
  CHECK(as_vec(elementwise_binary(a, b, BinaryOp::Max)) == std::vector<float>{4, 3, 3, 4});
  Tensor c = Tensor::from({4}, {1, 1, 1, 1});
  CHECK_THROWS_AS(elementwise_binary(a, c, BinaryOp::Add), std::invalid_argument);
}

TEST_CASE("conv2d frozen hand values") {
  // 3x3 single-channel image holding 1..9; 3x3 mean kernel
  Tensor img = Tensor::from({3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor ker({3, 3, 1, 1}, 1.0f / 9.0f);

  Tensor zr = conv2d(img, ker, Padding::Zero);
  CHECK(zr.at(1, 1, 0) == doctest::Approx(5.0).epsilon(1e-7));  // full-window mean of 1..9
  CHECK(zr.at(0, 0, 0) == doctest::Approx(12.0 / 9.0).epsilon(1e-6));  // (1+2+4+5)/9

  Tensor rr = conv2d(img, ker, Padding::Replicate);
  // replicate corner window rows: (1,1,2),(1,1,2),(4,4,5) -> 21/9
  CHECK(rr.at(0, 0, 0) == doctest::Approx(21.0 / 9.0).epsilon(1e-6));
  CHECK(rr.at(1, 1, 0) == doctest::Approx(5.0).epsilon(1e-7));
}

TEST_CASE("conv2d identity kernel reproduces the image") {
  SplitMix64 rng(42);
  Tensor img = testutil::random_image(5, 7, 3, rng);
  Tensor ker({3, 3, 3, 3});
  for (int c = 0; c < 3; ++c) ker[(1 * 3 + 1) * 9 + c * 3 + c] = 1.0f;  // center tap
  for (Padding p : {Padding::Zero, Padding::Replicate}) {
    Tensor out = conv2d(img, ker, p);
    CHECK(as_vec(out) == as_vec(img));
  }
}

TEST_CASE("mean kernel preserves a constant image exactly") {
  for (int k : {3, 5}) {
    Tensor img({6, 6, 2}, 0.3f);
    Tensor ker({k, k, 2, 2});
    for (int dy = 0; dy < k; ++dy)
      for (int dx = 0; dx < k; ++dx)
        for (int c = 0; c < 2; ++c)
          ker[(dy * k + dx) * 4 + c * 2 + c] = 1.0f / float(k * k);
    Tensor out = conv2d(img, ker, Padding::Replicate);
    CHECK(as_vec(out) == as_vec(img));  // bitwise
  }
}

TEST_CASE("conv2d agrees with an independent reimplementation") {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 12; ++trial) {
    const int h = 3 + int(rng.below(5)), w = 3 + int(rng.below(5));
    const int cin = 1 + int(rng.below(3)), cout = 1 + int(rng.below(3));
    const int ks[] = {1, 3, 5};
    const int k = ks[rng.below(3)];
    Padding pad = (trial % 2 == 0) ? Padding::Zero : Padding::Replicate;
    Tensor img = testutil::random_tensor({h, w, cin}, rng);
    Tensor ker = testutil::random_tensor({k, k, cin, cout}, rng, -1.0, 1.0);
    Tensor got = conv2d(img, ker, pad);
    Tensor want = naive_conv(img, ker, pad);
    REQUIRE(got.shape() == want.shape());
    for (int i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
  }
}

TEST_CASE("conv2d rejects malformed arguments") {
  Tensor img({4, 4, 2});
  CHECK_THROWS_AS(conv2d(img, Tensor({2, 2, 2, 1}), Padding::Zero),
                  std::invalid_argument);  // even kernel
  CHECK_THROWS_AS(conv2d(img, Tensor({3, 3, 3, 1}), Padding::Zero),
                  std::invalid_argument);  // channel mismatch
  CHECK_THROWS_AS(conv2d(img, Tensor({3, 1, 2, 1}), Padding::Zero),
                  std::invalid_argument);  // non-square
  CHECK_THROWS_AS(conv2d(Tensor({4, 4}), Tensor({3, 3, 2, 1}), Padding::Zero),
                  std::invalid_argument);  // image rank
  CHECK_NOTHROW(conv2d(img, Tensor({3, 3, 2, 2}), Padding::Zero));
}

TEST_CASE("even kernels anchor toward the upper-left in the any-size path") {
  // k=2 window offsets are [-1, 0]; on a 2x2 image with an all-ones kernel
  // the bottom-right output under zero padding sums the whole image.
  Tensor img = Tensor::from({2, 2, 1}, {1, 2, 3, 4});
  Tensor ker({2, 2, 1, 1}, 1.0f);
  Tensor z = detail::conv2d_any(img, ker, Padding::Zero);
  CHECK(z.at(1, 1, 0) == doctest::Approx(10.0));
  CHECK(z.at(0, 0, 0) == doctest::Approx(1.0));  // only the (0,0) tap lands inside
  Tensor r = detail::conv2d_any(img, ker, Padding::Replicate);
  CHECK(r.at(0, 0, 0) == doctest::Approx(4.0));  // all four taps clamp to (0,0)
}

TEST_CASE("matvec frozen hand values and checks") {
  Tensor W = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor x = Tensor::from({2}, {5, 6});
  Tensor b = Tensor::from({2}, {0.5f, -0.5f});
  Tensor y = matvec(W, x, b);
  CHECK(as_vec(y) == std::vector<float>{17.5f, 38.5f});
  CHECK_THROWS_AS(matvec(W, Tensor({3}), b), std::invalid_argument);
  CHECK_THROWS_AS(matvec(W, x, Tensor({3})), std::invalid_argument);
}

TEST_CASE("argmax picks the first maximum") {
  CHECK(argmax(Tensor::from({4}, {1, 3, 3, 2})) == 1);
  CHECK(argmax(Tensor::from({1}, {5})) == 0);
  CHECK(argmax(Tensor::from({3}, {-2, -2, -2})) == 0);
  CHECK_THROWS_AS(argmax(Tensor({2, 2})), std::invalid_argument);
}

TEST_CASE("finite difference gradient matches known analytic gradients") {
  // f(x) = sum x_i^2  ->  grad = 2x
  auto f = [](const Tensor& t) {
    double s = 0;
    for (int i = 0; i < t.size(); ++i) s += (double)t[i] * t[i];
    return s;
  };
  Tensor x = Tensor::from({4}, {1.0f, -2.0f, 0.5f, 3.0f});
  Tensor fd = finite_difference_gradient(f, x, 1e-3f);
  Tensor an = Tensor::from({4}, {2.0f, -4.0f, 1.0f, 6.0f});
  CHECK(testutil::gradient_rel_error(fd, an) < 1e-3);

  // f(x) = sum sin(x_i) -> grad = cos(x)
  auto g = [](const Tensor& t) {
    double s = 0;
    for (int i = 0; i < t.size(); ++i) s += std::sin((double)t[i]);
    return s;
  };
  Tensor gfd = finite_difference_gradient(g, x, 1e-3f);
  Tensor gan({4});
  for (int i = 0; i < 4; ++i) gan[i] = (float)std::cos((double)x[i]);
  CHECK(testutil::gradient_rel_error(gfd, gan) < 1e-3);

  CHECK_THROWS_AS(finite_difference_gradient(f, x, 0.0f), std::invalid_argument);
}
