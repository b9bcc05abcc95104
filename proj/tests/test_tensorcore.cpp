// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors

#include <catch_amalgamated.hpp>

#include <tunnelwave/adam.hpp>
#include <tunnelwave/autograd.hpp>
#include <tunnelwave/rng.hpp>

#include <cmath>
#include <limits>

using namespace tunnelwave;
using namespace tunnelwave::tc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Direct nested-loop cross-correlation, written independently of im2col.
Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int s, int p) {
  const int ho = (x.height() + 2 * p - w.dim(2)) / s + 1;
  const int wo = (x.width() + 2 * p - w.dim(3)) / s + 1;
  Tensor y({x.batch(), w.dim(0), ho, wo});
  for (int n = 0; n < x.batch(); ++n)
    for (int o = 0; o < w.dim(0); ++o)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = b[o];
          for (int c = 0; c < w.dim(1); ++c)
            for (int ky = 0; ky < w.dim(2); ++ky)
              for (int kx = 0; kx < w.dim(3); ++kx) {
                const int iy = oy * s - p + ky, ix = ox * s - p + kx;
                if (iy >= 0 && iy < x.height() && ix >= 0 && ix < x.width())
                  acc += w.at(o, c, ky, kx) * x.at(n, c, iy, ix);
              }
          y.at(n, o, oy, ox) = acc;
        }
  return y;
}

struct ConvCase {
  int b, c_in, c_out, h, w, k, s, p;
};

}  // namespace

TEST_CASE("1x1 unit kernel is the identity for conv and its transpose") {
  Rng rng(1);
  auto x = random_tensor({2, 1, 5, 4}, rng);
  Tensor w({1, 1, 1, 1}, 1.0);
  Tensor b({1}, 0.0);
  CHECK(conv2d(x, w, &b, {}).storage() == x.storage());
  CHECK(conv_transpose2d(x, w, &b, {}).storage() == x.storage());
}

TEST_CASE("3x3 ones kernel over a 2x2 input sums everything") {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor w({1, 1, 3, 3}, 1.0);
  auto y = conv2d(x, w, nullptr, {1, 1});
  CHECK(y.storage() == std::vector<double>{10, 10, 10, 10});
}

TEST_CASE("projection geometry 12/8/2 maps 24 <-> 3") {
  const ConvGeometry g{8, 2};
  CHECK(conv_output_size(24, 12, g) == 3);
  CHECK(conv_transpose_output_size(3, 12, g) == 24);
  CHECK_THROWS_AS(conv_output_size(25, 12, g), InvalidArgument);
  Tensor x({1, 2, 24, 24});
  Tensor w({3, 2, 12, 12});
  CHECK(conv2d(x, w, nullptr, g).shape() == std::vector<int>{1, 3, 3, 3});
  Tensor lr({1, 3, 3, 3});
  CHECK(conv_transpose2d(lr, w, nullptr, g).shape() == std::vector<int>{1, 2, 24, 24});
  Tensor bad({1, 5, 24, 24});
  CHECK_THROWS_AS(conv2d(bad, w, nullptr, g), InvalidArgument);
}

TEST_CASE("conv2d matches a direct loop implementation") {
  Rng rng(2);
  const std::vector<ConvCase> cases{{2, 3, 4, 7, 6, 3, 1, 1}, {1, 2, 2, 16, 16, 12, 8, 2}, {1, 1, 3, 9, 5, 3, 2, 0},
                                    {3, 4, 1, 5, 5, 1, 1, 0}, {2, 3, 6, 6, 7, 3, 1, 1}, {1, 5, 2, 10, 9, 5, 1, 2}};
  for (const auto& c : cases) {
    auto x = random_tensor({c.b, c.c_in, c.h, c.w}, rng);
    auto w = random_tensor({c.c_out, c.c_in, c.k, c.k}, rng);
    auto b = random_tensor({c.c_out}, rng);
    const auto fast = conv2d(x, w, &b, {c.s, c.p});
    const auto slow = naive_conv2d(x, w, b, c.s, c.p);
    REQUIRE(fast.same_shape(slow));
    for (std::size_t k = 0; k < fast.size(); ++k) REQUIRE_THAT(fast[k], WithinAbs(slow[k], 1e-12));
  }
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d on 20 random shapes") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    ConvCase c;
    if (trial % 4 == 0) {
      c = {1 + static_cast<int>(rng.below(2)), 1 + static_cast<int>(rng.below(3)), 1 + static_cast<int>(rng.below(3)),
           8 * (1 + static_cast<int>(rng.below(3))), 8 * (1 + static_cast<int>(rng.below(3))), 12, 8, 2};
    } else {
      c.b = 1 + static_cast<int>(rng.below(2));
      c.c_in = 1 + static_cast<int>(rng.below(4));
      c.c_out = 1 + static_cast<int>(rng.below(4));
      c.k = 1 + static_cast<int>(rng.below(4));
      c.s = 1 + static_cast<int>(rng.below(3));
      c.p = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.k)));
      // choose output size first so the geometry is exact
      const int ho = 1 + static_cast<int>(rng.below(6)), wo = 1 + static_cast<int>(rng.below(6));
      c.h = (ho - 1) * c.s - 2 * c.p + c.k;
      c.w = (wo - 1) * c.s - 2 * c.p + c.k;
      if (c.h < 1 || c.w < 1) {
        c.p = 0;
        c.h = (ho - 1) * c.s + c.k;
        c.w = (wo - 1) * c.s + c.k;
      }
    }
    const ConvGeometry g{c.s, c.p};
    auto x = random_tensor({c.b, c.c_in, c.h, c.w}, rng);
    auto w = random_tensor({c.c_out, c.c_in, c.k, c.k}, rng);
    const auto ax = conv2d(x, w, nullptr, g);
    auto y = random_tensor(ax.shape(), rng);
    const auto aty = conv_transpose2d(y, w, nullptr, g);
    REQUIRE(aty.same_shape(x));
    const double lhs = dot(ax, y);
    const double rhs = dot(x, aty);
    INFO("trial " << trial << " lhs " << lhs << " rhs " << rhs);
    REQUIRE(std::abs(lhs - rhs) <= 1e-10 * std::max(std::abs(lhs), 1.0));
  }
}

TEST_CASE("prelu values and slope gradient") {
  Var x(Tensor({2}, {2.0, -2.0}), true);
  Var a(Tensor({1}, {0.25}), true);
  auto y = prelu(x, a);
  CHECK(y.value()[0] == 2.0);
  CHECK(y.value()[1] == -0.5);
  a.zero_grad();
  auto pick_neg = mul(y, Var(Tensor({2}, {0.0, 1.0})));
  backward(sum(pick_neg));
  CHECK(a.grad()[0] == -2.0);
  a.zero_grad();
  backward(sum(mul(prelu(x, a), Var(Tensor({2}, {1.0, 0.0})))));
  CHECK(a.grad()[0] == 0.0);
}

TEST_CASE("sigmoid is stable and has slope 1/4 at zero") {
  Var x(Tensor({3}, {0.0, 40.0, -40.0}), true);
  auto y = sigmoid(x);
  CHECK(y.value()[0] == 0.5);
  CHECK_THAT(y.value()[1], WithinAbs(1.0, 1e-15));
  CHECK_THAT(y.value()[2], WithinAbs(0.0, 1e-15));
  CHECK(y.value()[2] > 0.0);
  CHECK(stable_sigmoid(-1000.0) == 0.0);
  CHECK(stable_sigmoid(1000.0) == 1.0);
  backward(sum(y));
  CHECK(x.grad()[0] == 0.25);
}

TEST_CASE("backward basics") {
  Rng rng(4);
  Var x(random_tensor({1, 1, 3, 4}, rng), true);
  backward(sum(x));
  for (double g : x.grad().values()) CHECK(g == 1.0);

  x.zero_grad();
  Var w(Tensor({1, 1, 1, 1}, 1.0), true);
  Var b(Tensor({1}, 0.0), true);
  backward(sum(conv2d(x, w, b, {})));
  for (double g : x.grad().values()) CHECK(g == 1.0);

  Var untouched(Tensor({3}, 1.0), true);
  CHECK_THROWS_AS(backward(x), InvalidArgument);
  for (double g : untouched.grad().values()) CHECK(g == 0.0);
}

TEST_CASE("non-finite results raise") {
  Var x(Tensor({2}, {1.0, std::numeric_limits<double>::quiet_NaN()}), true);
  CHECK_THROWS_AS(scale(x, 2.0), NumericError);
}

TEST_CASE("ops are pure and repeatable") {
  Rng rng(5);
  Var x(random_tensor({1, 2, 6, 6}, rng), true);
  Var w(random_tensor({3, 2, 3, 3}, rng), true);
  Var b(random_tensor({3}, rng), true);
  const auto before = x.value().storage();
  auto y1 = conv2d(x, w, b, {1, 1});
  auto y2 = conv2d(x, w, b, {1, 1});
  CHECK(x.value().storage() == before);
  CHECK(y1.value().storage() == y2.value().storage());
}

TEST_CASE("gradient checker on closed forms and a corrupted op") {
  Rng rng(6);
  Var x(random_tensor({1, 1, 4, 5}, rng), true);
  auto squares = [&] { return sum(mul(x, x)); };
  CHECK(grad_check(squares, {{"x", x}}).max_rel_error < 1e-8);

  Var w(random_tensor({2, 1, 3, 3}, rng), true);
  Var b(random_tensor({2}, rng), true);
  auto conv_loss = [&] { return sum(mul(conv2d(x, w, b, {1, 1}), conv2d(x, w, b, {1, 1}))); };
  CHECK(grad_check(conv_loss, {{"x", x}, {"w", w}, {"b", b}}).max_rel_error < 1e-6);

  inject_gradient_fault("conv2d");
  const auto bad = grad_check(conv_loss, {{"x", x}, {"w", w}, {"b", b}});
  inject_gradient_fault("");
  CHECK_THAT(bad.max_rel_error, WithinAbs(1.0, 1e-4));
}

TEST_CASE("every differentiable op passes the gradient check") {
  Rng rng(7);
  auto rt = [&](std::vector<int> s) { return Var(random_tensor(std::move(s), rng), true); };
  // Fixed random readout so each check sees a generic cotangent. The 1e-3
  // scale keeps the round-off of the difference quotient, ulp(f) / 2h, far
  // below the 1e-8 denominator floor.
  auto readout = [&](const Var& y) {
    Rng r2(99);
    Var c(random_tensor(y.value().shape(), r2, -1e-3, 1e-3));
    return sum(mul(y, c));
  };
  auto small = [](const Var& loss) { return scale(loss, 1e-3); };
  struct Check {
    const char* name;
    std::function<Var()> f;
    std::vector<std::pair<std::string, Var>> inputs;
  };
  auto a = rt({1, 2, 4, 4}), b = rt({1, 2, 4, 4}), m = rt({1, 1, 4, 4});
  auto slope = Var(Tensor({1}, {0.25}), true);
  auto w3 = rt({3, 2, 3, 3}), b3 = rt({3});
  auto w6 = rt({6, 2, 3, 3}), b6 = rt({6});
  auto hr = rt({1, 2, 16, 16}), wp = rt({2, 2, 12, 12}), bp = rt({2});
  auto lr = rt({1, 2, 2, 2});
  Tensor target = random_tensor({1, 2, 4, 4}, rng, 2.0, 3.0);
  std::vector<Check> checks{
      {"add", [&] { return readout(add(a, b)); }, {{"a", a}, {"b", b}}},
      {"sub", [&] { return readout(sub(a, b)); }, {{"a", a}, {"b", b}}},
      {"mul", [&] { return readout(mul(a, b)); }, {{"a", a}, {"b", b}}},
      {"scale", [&] { return readout(scale(a, -1.7)); }, {{"a", a}}},
      {"add_scalar", [&] { return readout(add_scalar(a, 0.3)); }, {{"a", a}}},
      {"abs", [&] { return readout(abs(a)); }, {{"a", a}}},
      {"sigmoid", [&] { return readout(sigmoid(a)); }, {{"a", a}}},
      {"prelu", [&] { return readout(prelu(a, slope)); }, {{"a", a}, {"slope", slope}}},
      {"mul_channels", [&] { return readout(mul_channels(a, m)); }, {{"a", a}, {"m", m}}},
      {"mean_channels", [&] { return readout(mean_channels(a)); }, {{"a", a}}},
      {"concat_channels", [&] { return readout(concat_channels({a, m, b})); }, {{"a", a}, {"m", m}, {"b", b}}},
      {"mean", [&] { return small(mean(mul(a, a))); }, {{"a", a}}},
      {"l1_loss", [&] { return small(l1_loss(a, target)); }, {{"a", a}}},
      {"tv_loss", [&] { return small(tv_loss(a)); }, {{"a", a}}},
      {"conv2d 3x3", [&] { return readout(conv2d(a, w3, b3, {1, 1})); }, {{"x", a}, {"w", w3}, {"b", b3}}},
      {"conv2d 3x3 wide", [&] { return readout(conv2d(a, w6, b6, {1, 1})); }, {{"x", a}, {"w", w6}, {"b", b6}}},
      {"conv2d 12/8/2", [&] { return readout(conv2d(hr, wp, bp, {8, 2})); }, {{"x", hr}, {"w", wp}, {"b", bp}}},
      {"conv_transpose2d 12/8/2",
       [&] { return readout(conv_transpose2d(lr, wp, bp, {8, 2})); },
       {{"x", lr}, {"w", wp}, {"b", bp}}},
  };
  for (auto& c : checks) {
    const auto r = grad_check(c.f, c.inputs);
    INFO(c.name << " worst " << r.worst << " err " << r.max_rel_error);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("adam closed form and determinism") {
  Var p(Tensor({3}, {0.5, -0.25, 1.0}), true);
  Adam opt({p}, {});
  opt.step({Tensor({3}, {0.2, -3.0, 0.0})});
  // parameters are held at float32 precision
  CHECK_THAT(p.value()[0], WithinAbs(0.5 - 1e-4, 3e-8));
  CHECK_THAT(p.value()[1], WithinAbs(-0.25 + 1e-4, 3e-8));
  CHECK(p.value()[2] == 1.0);

  auto run = [] {
    Var q(Tensor({4}, {0.1, 0.2, 0.3, 0.4}), true);
    Adam o({q}, {1e-3, 0.9, 0.999, 1e-8});
    Rng rng(8);
    for (int k = 0; k < 50; ++k) o.step({random_tensor({4}, rng)});
    return std::make_pair(q.value().storage(), o.second_moments()[0].storage());
  };
  CHECK(run() == run());
  CHECK_THROWS_AS(opt.step({Tensor({2})}), InvalidArgument);
}
