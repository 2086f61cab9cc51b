// Gradient and value checks for every tape op. The oracle for gradients is
// central finite differencing (test_util.hpp); values are checked against
// tiny hand-evaluated cases computed directly in the test body.

#include <cmath>

#include "doctest.h"
#include "hsfuse/tape.hpp"
#include "test_util.hpp"

using namespace testutil;
using hsfuse::Reduce;

namespace {

Tensor<double> rand_tensor(Shape s, Rng& rng, double lo = -1.0,
                           double hi = 1.0) {
  Tensor<double> t(s);
  fill_uniform(t, rng, lo, hi);
  return t;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("conv2d gradients match finite differences") {
  struct Cfg { int in_c, out_c, k, stride, pad, h, w; };
  const Cfg cfgs[] = {
      {3, 2, 3, 1, 1, 6, 7},
      {2, 4, 3, 2, 0, 7, 9},
      {5, 3, 1, 1, 0, 4, 5},
      {2, 2, 5, 1, 2, 8, 6},
      {1, 2, 3, 3, 2, 9, 9},
  };
  int cse = 0;
  for (const Cfg& c : cfgs) {
    CAPTURE(cse);
    Rng rng(100 + cse);
    Tape<double> t;
    const int x = t.leaf(rand_tensor({c.in_c, c.h, c.w}, rng), true);
    const int ker = t.leaf(
        rand_tensor({c.out_c * c.in_c, c.k, c.k}, rng), true);
    const int y = t.conv2d(x, ker, c.out_c, c.k, c.stride, c.pad);
    const int root = scalar_head(t, y, rng);
    require_grad_ok(fd_check(t, root, {x, ker}));
    ++cse;
  }
}

TEST_CASE("conv2d output shape") {
  Tape<double> t;
  Rng rng(1);
  const int x = t.leaf(rand_tensor({3, 10, 8}, rng), false);
  const int ker = t.leaf(rand_tensor({6 * 3, 3, 3}, rng), false);
  const int y = t.conv2d(x, ker, 6, 3, 2, 1);
  CHECK(t.shape(y) == Shape{6, 5, 4});
  CHECK_THROWS(t.conv2d(x, ker, 4, 3, 1, 1));  // kernel planes do not match
}

TEST_CASE("add_bias value and gradients") {
  Rng rng(2);
  Tape<double> t;
  const int x = t.leaf(rand_tensor({3, 4, 5}, rng), true);
  const int b = t.leaf(rand_tensor({3, 1, 1}, rng), true);
  const int y = t.add_bias(x, b);
  t.forward();
  CHECK(t.val(y).at(2, 1, 3) ==
        doctest::Approx(t.val(x).at(2, 1, 3) + t.val(b).data[2]));
  const int root = scalar_head(t, y, rng);
  require_grad_ok(fd_check(t, root, {x, b}));
}

TEST_CASE("leaky_relu") {
  Rng rng(3);
  Tape<double> t;
  const int x = t.leaf(rand_tensor({2, 5, 5}, rng), true);
  const int y = t.leaky_relu(x, 0.2);
  t.forward();
  for (std::size_t i = 0; i < t.val(x).data.size(); ++i) {
    const double v = t.val(x).data[i];
    CHECK(t.val(y).data[i] == doctest::Approx(v > 0 ? v : 0.2 * v));
  }
  const int root = scalar_head(t, y, rng);
  require_grad_ok(fd_check(t, root, {x}));
}

TEST_CASE("leaky_relu subgradient at zero is the slope") {
  Tape<double> t;
  const int x = t.leaf(Tensor<double>(1, 1, 1, 0.0), true);
  const int y = t.leaky_relu(x, 0.2);
  const int root = t.reduce_sum(y, Reduce::All);
  t.forward();
  t.backward(root);
  CHECK(t.grad(x).data[0] == doctest::Approx(0.2));
}

TEST_CASE("clamp01 values, gradients and boundary behaviour") {
  Rng rng(4);
  Tape<double> t;
  const int x = t.leaf(rand_tensor({2, 6, 6}, rng, -0.5, 1.5), true);
  const int y = t.clamp01(x);
  t.forward();
  for (std::size_t i = 0; i < t.val(y).data.size(); ++i) {
    CHECK(t.val(y).data[i] >= 0.0);
    CHECK(t.val(y).data[i] <= 1.0);
  }
  const int root = scalar_head(t, y, rng);
  require_grad_ok(fd_check(t, root, {x}));

  // exact boundary points carry zero gradient
  Tape<double> t2;
  Tensor<double> edge(1, 1, 4);
  edge.data = {0.0, 1.0, -0.3, 0.5};
  const int x2 = t2.leaf(edge, true);
  const int r2 = t2.reduce_sum(t2.clamp01(x2), Reduce::All);
  t2.forward();
  t2.backward(r2);
  CHECK(t2.grad(x2).data[0] == 0.0);
  CHECK(t2.grad(x2).data[1] == 0.0);
  CHECK(t2.grad(x2).data[2] == 0.0);
  CHECK(t2.grad(x2).data[3] == 1.0);
}

TEST_CASE("softmax over channels") {
  Rng rng(5);
  Tape<double> t;
  const int x = t.leaf(rand_tensor({5, 3, 4}, rng, -3.0, 3.0), true);
  const int y = t.softmax_channels(x);
  t.forward();
  const auto& yv = t.val(y);
  for (int p = 0; p < 12; ++p) {
    double s = 0.0;
    for (int c = 0; c < 5; ++c) {
      const double v = yv.data[c * 12 + p];
      CHECK(v > 0.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  const int root = scalar_head(t, y, rng);
  require_grad_ok(fd_check(t, root, {x}));
}

TEST_CASE("softmax over the plane") {
  Rng rng(6);
  Tape<double> t;
  const int x = t.leaf(rand_tensor({2, 4, 5}, rng, -3.0, 3.0), true);
  const int y = t.softmax_spatial(x);
  t.forward();
  for (int c = 0; c < 2; ++c) {
    double s = 0.0;
    for (int i = 0; i < 20; ++i) s += t.val(y).plane_ptr(c)[i];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  const int root = scalar_head(t, y, rng);
  require_grad_ok(fd_check(t, root, {x}));
}

TEST_CASE("softmax is shift invariant (max subtraction)") {
  Tape<double> t;
  Tensor<double> big(3, 1, 1);
  big.data = {1000.0, 1001.0, 999.0};
  const int x = t.leaf(big, false);
  const int y = t.softmax_channels(x);
  t.forward();
  double s = 0.0;
  for (double v : t.val(y).data) {
    CHECK(std::isfinite(v));
    s += v;
  }
  CHECK(s == doctest::Approx(1.0));
}

TEST_CASE("concat_channels layout and gradients") {
  Rng rng(7);
  Tape<double> t;
  const int a = t.leaf(rand_tensor({2, 3, 4}, rng), true);
  const int b = t.leaf(rand_tensor({3, 3, 4}, rng), true);
  const int y = t.concat_channels(a, b);
  CHECK(t.shape(y) == Shape{5, 3, 4});
  t.forward();
  CHECK(t.val(y).at(1, 2, 3) == t.val(a).at(1, 2, 3));
  CHECK(t.val(y).at(4, 0, 1) == t.val(b).at(2, 0, 1));
  const int root = scalar_head(t, y, rng);
  require_grad_ok(fd_check(t, root, {a, b}));
}

TEST_CASE("add and mul with broadcasts") {
  Rng rng(8);
  SUBCASE("add") {
    Tape<double> t;
    const int a = t.leaf(rand_tensor({3, 4, 4}, rng), true);
    const int b = t.leaf(rand_tensor({3, 4, 4}, rng), true);
    const int root = scalar_head(t, t.add(a, b), rng);
    require_grad_ok(fd_check(t, root, {a, b}));
  }
  SUBCASE("mul equal shapes") {
    Tape<double> t;
    const int a = t.leaf(rand_tensor({3, 4, 4}, rng), true);
    const int b = t.leaf(rand_tensor({3, 4, 4}, rng), true);
    const int root = scalar_head(t, t.mul(a, b), rng);
    require_grad_ok(fd_check(t, root, {a, b}));
  }
  SUBCASE("mul channel broadcast") {
    Tape<double> t;
    const int a = t.leaf(rand_tensor({3, 4, 4}, rng), true);
    const int b = t.leaf(rand_tensor({3, 1, 1}, rng), true);
    const int root = scalar_head(t, t.mul(a, b), rng);
    require_grad_ok(fd_check(t, root, {a, b}));
  }
  SUBCASE("mul plane broadcast") {
    Tape<double> t;
    const int a = t.leaf(rand_tensor({3, 4, 4}, rng), true);
    const int b = t.leaf(rand_tensor({1, 4, 4}, rng), true);
    const int root = scalar_head(t, t.mul(a, b), rng);
    require_grad_ok(fd_check(t, root, {a, b}));
  }
}

TEST_CASE("same leaf feeding two consumers accumulates gradient") {
  Tape<double> t;
  Tensor<double> v(1, 1, 2);
  v.data = {0.7, -0.3};
  const int x = t.leaf(v, true);
  const int y = t.add(x, x);
  const int root = t.reduce_sum(y, Reduce::All);
  t.forward();
  t.backward(root);
  CHECK(t.grad(x).data[0] == doctest::Approx(2.0));
  CHECK(t.grad(x).data[1] == doctest::Approx(2.0));

  // diamond through mul: d(x*x)/dx = 2x
  Tape<double> t2;
  const int x2 = t2.leaf(v, true);
  const int r2 = t2.reduce_sum(t2.mul(x2, x2), Reduce::All);
  t2.forward();
  t2.backward(r2);
  CHECK(t2.grad(x2).data[0] == doctest::Approx(1.4));
  CHECK(t2.grad(x2).data[1] == doctest::Approx(-0.6));
}

TEST_CASE("scale and reduce_sum") {
  Rng rng(9);
  Tape<double> t;
  const int x = t.leaf(rand_tensor({3, 4, 5}, rng), true);
  const int y = t.scale(x, -2.5);
  const int rc = t.reduce_sum(x, Reduce::Channels);
  const int rs = t.reduce_sum(x, Reduce::Spatial);
  const int ra = t.reduce_sum(x, Reduce::All);
  CHECK(t.shape(rc) == Shape{1, 4, 5});
  CHECK(t.shape(rs) == Shape{3, 1, 1});
  CHECK(t.shape(ra) == Shape{1, 1, 1});
  t.forward();
  double all = 0.0;
  for (double v : t.val(x).data) all += v;
  CHECK(t.scalar_value(ra) == doctest::Approx(all).epsilon(1e-12));
  double px = 0.0;
  for (int c = 0; c < 3; ++c) px += t.val(x).at(c, 2, 3);
  CHECK(t.val(rc).at(0, 2, 3) == doctest::Approx(px).epsilon(1e-12));
  CHECK(t.val(y).data[0] == doctest::Approx(-2.5 * t.val(x).data[0]));

  Rng rng2(10);
  Tape<double> ts;
  const int xs = ts.leaf(rand_tensor({3, 4, 5}, rng2), true);
  const int root = scalar_head(ts, ts.scale(xs, -2.5), rng2);
  require_grad_ok(fd_check(ts, root, {xs}));

  for (Reduce mode : {Reduce::Channels, Reduce::Spatial, Reduce::All}) {
    Tape<double> tr;
    const int xr = tr.leaf(rand_tensor({3, 4, 5}, rng2), true);
    const int rootr = scalar_head(tr, tr.reduce_sum(xr, mode), rng2);
    require_grad_ok(fd_check(tr, rootr, {xr}));
  }
}

TEST_CASE("avg_pool value and gradients") {
  Rng rng(11);
  Tape<double> t;
  const int x = t.leaf(rand_tensor({2, 6, 4}, rng), true);
  const int y = t.avg_pool(x, 2);
  CHECK(t.shape(y) == Shape{2, 3, 2});
  t.forward();
  const auto& xv = t.val(x);
  const double expect = 0.25 * (xv.at(1, 2, 2) + xv.at(1, 2, 3) +
                                xv.at(1, 3, 2) + xv.at(1, 3, 3));
  CHECK(t.val(y).at(1, 1, 1) == doctest::Approx(expect).epsilon(1e-12));
  const int root = scalar_head(t, y, rng);
  require_grad_ok(fd_check(t, root, {x}));
}

TEST_CASE("global_filter value and gradients") {
  Rng rng(12);
  Tape<double> t;
  const int x = t.leaf(rand_tensor({3, 4, 4}, rng), true);
  const int u = t.leaf(rand_tensor({3, 4, 4}, rng), true);
  const int y = t.global_filter(x, u);
  CHECK(t.shape(y) == Shape{3, 1, 1});
  t.forward();
  double dot = 0.0;
  for (int i = 0; i < 16; ++i)
    dot += t.val(x).plane_ptr(2)[i] * t.val(u).plane_ptr(2)[i];
  CHECK(t.val(y).data[2] == doctest::Approx(dot).epsilon(1e-12));
  const int root = scalar_head(t, y, rng);
  require_grad_ok(fd_check(t, root, {x, u}));
}

TEST_CASE("srf_apply normalizes rows and differentiates through it") {
  Rng rng(13);
  Tape<double> t;
  const int L = 6, J = 2;
  const int x = t.leaf(rand_tensor({L, 3, 4}, rng, 0.0, 1.0), true);
  const int w = t.leaf(rand_tensor({J, 1, L}, rng, 0.2, 1.2), true);
  const int y = t.srf_apply(x, w);
  CHECK(t.shape(y) == Shape{J, 3, 4});
  t.forward();
  // row-normalized mixing reproduces a weighted average
  const auto& xv = t.val(x);
  const auto& wv = t.val(w);
  double num = 0.0, den = 0.0;
  for (int mu = 0; mu < L; ++mu) {
    num += wv.data[1 * L + mu] * xv.at(mu, 2, 1);
    den += wv.data[1 * L + mu];
  }
  CHECK(t.val(y).at(1, 2, 1) == doctest::Approx(num / den).epsilon(1e-12));
  const int root = scalar_head(t, y, rng);
  require_grad_ok(fd_check(t, root, {x, w}));
}

TEST_CASE("srf_apply rejects an all-zero response row") {
  Tape<double> t;
  const int x = t.leaf(Shape{3, 2, 2}, false);
  Tensor<double> w(2, 1, 3);
  w.data = {0.5, 0.2, 0.3, 0.0, 0.0, 0.0};
  const int wid = t.leaf(w, false);
  t.srf_apply(x, wid);
  CHECK_THROWS(t.forward());
}

TEST_CASE("psf_apply keeps constants and differentiates through it") {
  Rng rng(14);
  Tape<double> t;
  const int x = t.leaf(rand_tensor({3, 6, 6}, rng, 0.0, 1.0), true);
  const int w = t.leaf(rand_tensor({1, 2, 2}, rng, 0.1, 1.0), true);
  const int y = t.psf_apply(x, w, 2);
  CHECK(t.shape(y) == Shape{3, 3, 3});
  const int root = scalar_head(t, y, rng);
  require_grad_ok(fd_check(t, root, {x, w}));

  // unit-sum kernel maps a constant image to the same constant
  Tape<double> t2;
  const int x2 = t2.leaf(Tensor<double>(2, 4, 4, 0.37), false);
  const int w2 = t2.leaf(rand_tensor({1, 2, 2}, rng, 0.1, 1.0), false);
  const int y2 = t2.psf_apply(x2, w2, 2);
  t2.forward();
  for (double v : t2.val(y2).data)
    CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("psf_apply rejects a zero kernel") {
  Tape<double> t;
  const int x = t.leaf(Shape{1, 4, 4}, false);
  const int w = t.leaf(Tensor<double>(1, 2, 2, 0.0), false);
  t.psf_apply(x, w, 2);
  CHECK_THROWS(t.forward());
}

TEST_CASE("l1_loss value, gradients and sign(0)=0") {
  Rng rng(15);
  Tape<double> t;
  const int a = t.leaf(rand_tensor({2, 4, 4}, rng, 0.0, 1.0), true);
  const int b = t.leaf(rand_tensor({2, 4, 4}, rng, 0.0, 1.0), true);
  const int y = t.l1_loss(a, b);
  t.forward();
  double acc = 0.0;
  for (std::size_t i = 0; i < t.val(a).data.size(); ++i)
    acc += std::abs(t.val(a).data[i] - t.val(b).data[i]);
  CHECK(t.scalar_value(y) == doctest::Approx(acc / 32.0).epsilon(1e-12));
  require_grad_ok(fd_check(t, y, {a, b}));

  // identical operands: zero loss and (sign(0)=0) zero gradient
  Tape<double> t2;
  Tensor<double> same = rand_tensor({2, 3, 3}, rng, 0.0, 1.0);
  const int a2 = t2.leaf(same, true);
  const int b2 = t2.leaf(same, false);
  const int y2 = t2.l1_loss(a2, b2);
  t2.forward();
  t2.backward(y2);
  CHECK(t2.scalar_value(y2) == 0.0);
  for (double g : t2.grad(a2).data) CHECK(g == 0.0);
}

TEST_CASE("masked l1_loss only sees selected pixels") {
  Rng rng(16);
  Tape<double> t;
  Tensor<double> av = rand_tensor({2, 2, 3}, rng, 0.0, 1.0);
  Tensor<double> bv = rand_tensor({2, 2, 3}, rng, 0.0, 1.0);
  Tensor<double> mask(1, 2, 3, 0.0);
  mask.data = {1, 0, 1, 0, 0, 1};
  const int a = t.leaf(av, true);
  const int b = t.leaf(bv, false);
  const int y = t.l1_loss(a, b, &mask);
  t.forward();
  double acc = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 6; ++i)
      if (mask.data[i] != 0.0)
        acc += std::abs(av.data[c * 6 + i] - bv.data[c * 6 + i]);
  CHECK(t.scalar_value(y) == doctest::Approx(acc / 6.0).epsilon(1e-12));
  t.backward(y);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 6; ++i)
      if (mask.data[i] == 0.0) CHECK(t.grad(a).data[c * 6 + i] == 0.0);
  require_grad_ok(fd_check(t, y, {a}));
}

TEST_CASE("kl_sparsity matches the direct formula") {
  const double rho = 0.01;
  Tape<double> t;
  const int a = t.leaf(Tensor<double>(1, 1, 1, 0.5), true);
  const int y = t.kl_sparsity(a, rho);
  t.forward();
  const double expect =
      rho * std::log(rho / 0.5) + (1 - rho) * std::log((1 - rho) / 0.5);
  CHECK(t.scalar_value(y) == doctest::Approx(expect).epsilon(1e-12));

  Rng rng(17);
  Tape<double> t2;
  const int a2 = t2.leaf(rand_tensor({3, 4, 4}, rng, 0.05, 0.95), true);
  const int y2 = t2.kl_sparsity(a2, rho);
  require_grad_ok(fd_check(t2, y2, {a2}));
}

TEST_CASE("kl_sparsity is finite and flat at clamped activations") {
  Tape<double> t;
  Tensor<double> v(1, 1, 2);
  v.data = {0.0, 1.0};
  const int a = t.leaf(v, true);
  const int y = t.kl_sparsity(a, 0.01);
  t.forward();
  CHECK(std::isfinite(t.scalar_value(y)));
  t.backward(y);
  CHECK(t.grad(a).data[0] == 0.0);
  CHECK(t.grad(a).data[1] == 0.0);
}

TEST_CASE("masked kl_sparsity") {
  Rng rng(18);
  Tape<double> t;
  Tensor<double> av = rand_tensor({2, 2, 2}, rng, 0.1, 0.9);
  Tensor<double> mask(1, 2, 2, 0.0);
  mask.data = {1, 0, 0, 1};
  const int a = t.leaf(av, true);
  const int y = t.kl_sparsity(a, 0.01, &mask);
  t.forward();
  t.backward(y);
  CHECK(t.grad(a).at(0, 0, 1) == 0.0);
  CHECK(t.grad(a).at(1, 1, 0) == 0.0);
  CHECK(t.grad(a).at(0, 0, 0) != 0.0);
  require_grad_ok(fd_check(t, y, {a}));
}

TEST_CASE("backward rejects non-scalar roots") {
  Tape<double> t;
  const int x = t.leaf(Shape{2, 2, 2}, true);
  const int y = t.scale(x, 2.0);
  t.forward();
  CHECK_THROWS(t.backward(y));
}

TEST_CASE("first_nonfinite pinpoints the offending node") {
  Tape<double> t;
  const int x = t.leaf(Shape{1, 2, 2}, false);
  const int y = t.scale(x, 2.0);
  t.forward();
  CHECK(t.first_nonfinite() == -1);
  t.val(x).data[3] = std::numeric_limits<double>::quiet_NaN();
  t.forward();
  CHECK(t.first_nonfinite() == x);
  CHECK(t.describe(y) == "node 1 [scale] (1,2,2)");
}

}  // TEST_SUITE
