#include <cmath>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "hsfuse/datasim.hpp"
#include "hsfuse/mixing.hpp"
#include "hsfuse/network.hpp"
#include "hsfuse/trainer.hpp"
#include "test_util.hpp"

using namespace hsfuse;
using namespace testutil;

namespace {

NetworkConfig toy_config() {
  NetworkConfig c;
  c.k = 3;
  c.hs_bands = 8;
  c.ms_bands = 2;
  c.ratio = 2;
  c.height = 4;
  c.width = 4;
  c.hidden = {6, 4};
  c.msi_kernels = {3, 3, 3};
  return c;
}

template <typename T>
void fill_inputs(Network<T>& net, Rng& rng) {
  Tensor<T> x(Shape{net.config().hs_bands, net.config().height,
                    net.config().width});
  Tensor<T> y(Shape{net.config().ms_bands, net.config().msi_height(),
                    net.config().msi_width()});
  fill_uniform(x, rng);
  fill_uniform(y, rng);
  net.set_inputs(x, y);
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("hsfuse_network_" + name))
      .string();
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("config validation rejects inconsistent settings") {
  CHECK_NOTHROW(toy_config().validate());

  auto c = toy_config();
  c.msi_kernels = {3, 3};  // one per conv, projection included
  CHECK_THROWS_AS(c.validate(), std::runtime_error);

  c = toy_config();
  c.msi_kernels = {3, 5, 3};  // must not grow again
  CHECK_THROWS_AS(c.validate(), std::runtime_error);

  c = toy_config();
  c.msi_kernels = {4, 3, 3};  // even kernels break same-padding
  CHECK_THROWS_AS(c.validate(), std::runtime_error);

  c = toy_config();
  c.attention_p = 2;
  CHECK_THROWS_AS(c.validate(), std::runtime_error);

  c = toy_config();
  c.hidden.clear();
  CHECK_THROWS_AS(c.validate(), std::runtime_error);

  c = toy_config();
  c.leaky_slope = 1.0;
  CHECK_THROWS_AS(c.validate(), std::runtime_error);

  c = toy_config();
  c.k = 0;
  CHECK_THROWS_AS(Network<float>{c}, std::runtime_error);
}

TEST_CASE("shape contracts across the full graph") {
  const auto cfg = toy_config();
  Network<float> net(cfg);
  init_weights(net, 7);
  Rng rng(21);
  fill_inputs(net, rng);
  net.forward();

  const auto& t = net.tape();
  CHECK(t.shape(net.abund_hsi()) == Shape{3, 4, 4});
  CHECK(t.shape(net.abund_msi()) == Shape{3, 8, 8});
  CHECK(t.shape(net.recon_hsi()) == Shape{8, 4, 4});
  CHECK(t.shape(net.recon_msi()) == Shape{2, 8, 8});
  CHECK(t.shape(net.fused()) == Shape{8, 8, 8});
  CHECK(t.shape(net.x_hat()) == Shape{8, 4, 4});
  CHECK(t.shape(net.y_hat()) == Shape{2, 8, 8});
  CHECK(t.shape(net.u_hs()) == Shape{2, 4, 4});
  CHECK(t.shape(net.u_ms()) == Shape{2, 4, 4});
  CHECK(t.first_nonfinite() == -1);

  // attention doubles the channels feeding both projections
  CHECK(net.param("f_en.proj.w").shape == Shape{3 * 8, 1, 1});
  CHECK(net.param("g_en.proj.w").shape == Shape{3 * 8, 3, 3});

  auto plain = cfg;
  plain.use_ca = false;
  Network<float> net2(plain);
  CHECK(net2.param("f_en.proj.w").shape == Shape{3 * 4, 1, 1});
}

TEST_CASE("zero encoder weights give zero abundances") {
  Network<float> net(toy_config());  // parameters default to zero
  Rng rng(3);
  fill_inputs(net, rng);
  net.forward();
  for (float v : net.tape().val(net.abund_hsi()).data) CHECK(v == 0.0f);
  for (float v : net.tape().val(net.abund_msi()).data) CHECK(v == 0.0f);
  for (float v : net.tape().val(net.fused()).data) CHECK(v == 0.0f);
}

TEST_CASE("abundances stay inside the unit interval for any weights") {
  Network<float> net(toy_config());
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    init_weights(net, seed);
    Rng rng(seed + 1000);
    fill_inputs(net, rng);
    net.forward();
    for (int id : {net.abund_hsi(), net.abund_msi()}) {
      for (float v : net.tape().val(id).data) {
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= 1.0f);
      }
    }
  }
}

TEST_CASE("softmax head gives unit channel sums when clamp is off") {
  auto cfg = toy_config();
  cfg.use_clamp = false;
  Network<float> net(cfg);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    init_weights(net, seed);
    Rng rng(seed);
    fill_inputs(net, rng);
    net.forward();
    for (int id : {net.abund_hsi(), net.abund_msi()}) {
      const auto& s = net.tape().val(id);
      const std::size_t plane = s.shape.plane();
      for (std::size_t p = 0; p < plane; ++p) {
        double sum = 0.0;
        for (int c = 0; c < s.shape.c; ++c) sum += s.data[c * plane + p];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
}

// Direct step-by-step evaluation of the attention statistics on a small
// feature pair, mirroring the construction the network wires internally.
TEST_CASE("cross-attention matches a step-by-step oracle") {
  const int C = 2, h = 4, w = 4, r = 2, p = 3;
  const int H = r * h, W = r * w;
  Rng rng(99);
  Tensor<double> f(Shape{C, h, w}), g(Shape{C, H, W});
  Tensor<double> u(Shape{C, h, w}), v(Shape{C, p, p});
  fill_uniform(f, rng, -1.0, 1.0);
  fill_uniform(g, rng, -1.0, 1.0);
  fill_uniform(u, rng, -1.0, 1.0);
  fill_uniform(v, rng, -1.0, 1.0);

  Tape<double> t;
  const int fid = t.leaf(f, false), gid = t.leaf(g, false);
  const int uid = t.leaf(u, false), vid = t.leaf(v, false);
  const int chan = t.softmax_channels(t.global_filter(fid, uid));
  const int spat = t.softmax_spatial(t.conv2d(gid, vid, 1, p, 1, (p - 1) / 2));
  const int pooled = t.scale(t.avg_pool(spat, r), static_cast<double>(r * r));
  const int fcat = t.concat_channels(fid, t.mul(fid, pooled));
  const int gcat = t.concat_channels(gid, t.mul(gid, chan));
  t.forward();

  // channel statistics: per-channel inner product, then softmax over C
  std::vector<double> o(C, 0.0);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < h * w; ++i)
      o[c] += u.plane_ptr(c)[i] * f.plane_ptr(c)[i];
  double omax = std::max(o[0], o[1]);
  double osum = 0.0;
  std::vector<double> delta_o(C);
  for (int c = 0; c < C; ++c) osum += delta_o[c] = std::exp(o[c] - omax);
  for (int c = 0; c < C; ++c) delta_o[c] /= osum;

  // spatial statistics: channel-summed local conv, softmax over the plane
  Tensor<double> smap(Shape{1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int c = 0; c < C; ++c)
        for (int dy = 0; dy < p; ++dy)
          for (int dx = 0; dx < p; ++dx) {
            const int sy = y + dy - (p - 1) / 2, sx = x + dx - (p - 1) / 2;
            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
            acc += v.at(c, dy, dx) * g.at(c, sy, sx);
          }
      smap.at(0, y, x) = acc;
    }
  double smax = smap.data[0];
  for (double s : smap.data) smax = std::max(smax, s);
  double ssum = 0.0;
  Tensor<double> delta_s(Shape{1, H, W});
  for (std::size_t i = 0; i < smap.data.size(); ++i)
    ssum += delta_s.data[i] = std::exp(smap.data[i] - smax);
  for (auto& val : delta_s.data) val /= ssum;

  // pooled map rescaled to stay a distribution over the coarse grid
  Tensor<double> pool(Shape{1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx)
          acc += delta_s.at(0, y * r + dy, x * r + dx);
      pool.at(0, y, x) = acc;  // mean * r^2 = block sum
    }
  double mass = 0.0;
  for (double val : pool.data) mass += val;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));

  Tensor<double> fprime(Shape{2 * C, h, w}), gprime(Shape{2 * C, H, W});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < h * w; ++i) {
      fprime.plane_ptr(c)[i] = f.plane_ptr(c)[i];
      fprime.plane_ptr(C + c)[i] = f.plane_ptr(c)[i] * pool.data[i];
    }
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H * W; ++i) {
      gprime.plane_ptr(c)[i] = g.plane_ptr(c)[i];
      gprime.plane_ptr(C + c)[i] = g.plane_ptr(c)[i] * delta_o[c];
    }

  expect_close(t.val(fcat), fprime, 1e-12, 1e-12, "hsi-branch attention");
  expect_close(t.val(gcat), gprime, 1e-12, 1e-12, "msi-branch attention");
}

TEST_CASE("zero local filter yields an exactly uniform spatial map") {
  const int C = 2, h = 4, w = 4, r = 2, p = 3;
  Rng rng(5);
  Tensor<double> f(Shape{C, h, w}), g(Shape{C, r * h, r * w});
  fill_uniform(f, rng, -1.0, 1.0);
  fill_uniform(g, rng);
  Tensor<double> u(Shape{C, h, w}), v(Shape{C, p, p});  // v stays zero

  Tape<double> t;
  const int fid = t.leaf(f, false), gid = t.leaf(g, false);
  const int vid = t.leaf(v, false);
  const int spat = t.softmax_spatial(t.conv2d(gid, vid, 1, p, 1, 1));
  const int pooled = t.scale(t.avg_pool(spat, r), static_cast<double>(r * r));
  const int fcat = t.concat_channels(fid, t.mul(fid, pooled));
  t.forward();

  // flat statistics: every position carries exactly 1/(H*W), so the pooled
  // rescaled map is exactly 1/(h*w) and the copy is exactly proportional
  for (double val : t.val(spat).data) CHECK(val == 1.0 / 64.0);
  for (double val : t.val(pooled).data) CHECK(val == 1.0 / 16.0);
  const auto& out = t.val(fcat);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < h * w; ++i)
      CHECK(out.plane_ptr(C + c)[i] == f.plane_ptr(c)[i] * (1.0 / 16.0));
  (void)u;
}

TEST_CASE("dominant channel statistic saturates the channel map") {
  const int C = 3, h = 4, w = 4;
  Tensor<double> f(Shape{C, h, w}, 1.0);
  Tensor<double> u(Shape{C, h, w});
  for (int i = 0; i < h * w; ++i) u.plane_ptr(0)[i] = 0.625;  // sums to 10
  Tensor<double> g(Shape{C, 8, 8});
  Rng rng(17);
  fill_uniform(g, rng, -1.0, 1.0);

  Tape<double> t;
  const int fid = t.leaf(f, false), gid = t.leaf(g, false);
  const int uid = t.leaf(u, false);
  const int chan = t.softmax_channels(t.global_filter(fid, uid));
  const int gcat = t.concat_channels(gid, t.mul(gid, chan));
  t.forward();

  const auto& d = t.val(chan).data;
  CHECK(d[0] > 0.9999);
  CHECK(d[1] / d[0] <= std::exp(-10.0) * (1.0 + 1e-9));
  CHECK(d[1] == d[2]);
  const auto& out = t.val(gcat);
  for (int c = 1; c < C; ++c)
    for (int i = 0; i < 64; ++i)
      CHECK(std::abs(out.plane_ptr(C + c)[i]) <=
            std::exp(-10.0) * (1.0 + 1e-9) * std::abs(g.plane_ptr(c)[i]) +
                1e-300);
}

TEST_CASE("attention bypass reproduces the plain encoder bit-exactly") {
  auto cfg = toy_config();
  cfg.use_ca = false;
  Network<float> net(cfg);
  init_weights(net, 3);
  Rng rng(8);
  fill_inputs(net, rng);
  net.forward();

  // hand-built single branches with the identical weights
  Tape<float> ref;
  const int yid = ref.leaf(net.tape().val(net.y()), false);
  int cur = yid;
  int in_c = cfg.ms_bands;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    const int kk = cfg.msi_kernels[i];
    const std::string stage = "g_en." + std::to_string(i);
    cur = ref.conv2d(cur, ref.leaf(net.param(stage + ".w"), false),
                     cfg.hidden[i], kk, 1, (kk - 1) / 2);
    cur = ref.add_bias(cur, ref.leaf(net.param(stage + ".b"), false));
    cur = ref.leaky_relu(cur, static_cast<float>(cfg.leaky_slope));
    in_c = cfg.hidden[i];
  }
  cur = ref.conv2d(cur, ref.leaf(net.param("g_en.proj.w"), false), cfg.k,
                   cfg.msi_kernels.back(), 1, (cfg.msi_kernels.back() - 1) / 2);
  cur = ref.add_bias(cur, ref.leaf(net.param("g_en.proj.b"), false));
  cur = ref.clamp01(cur);

  const int xid = ref.leaf(net.tape().val(net.x()), false);
  int curx = xid;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    const std::string stage = "f_en." + std::to_string(i);
    curx = ref.conv2d(curx, ref.leaf(net.param(stage + ".w"), false),
                      cfg.hidden[i], 1, 1, 0);
    curx = ref.add_bias(curx, ref.leaf(net.param(stage + ".b"), false));
    curx = ref.leaky_relu(curx, static_cast<float>(cfg.leaky_slope));
  }
  curx = ref.conv2d(curx, ref.leaf(net.param("f_en.proj.w"), false), cfg.k, 1,
                    1, 0);
  curx = ref.add_bias(curx, ref.leaf(net.param("f_en.proj.b"), false));
  curx = ref.clamp01(curx);
  ref.forward();

  const auto& s_ms = net.tape().val(net.abund_msi());
  const auto& s_hs = net.tape().val(net.abund_hsi());
  REQUIRE(s_ms.shape == ref.val(cur).shape);
  CHECK(std::memcmp(s_ms.data.data(), ref.val(cur).data.data(),
                    s_ms.data.size() * sizeof(float)) == 0);
  REQUIRE(s_hs.shape == ref.val(curx).shape);
  CHECK(std::memcmp(s_hs.data.data(), ref.val(curx).data.data(),
                    s_hs.data.size() * sizeof(float)) == 0);
  (void)in_c;
}

TEST_CASE("decoders are linear mixtures of the abundances") {
  const auto cfg = toy_config();
  Network<double> net(cfg, /*inject_abundances=*/true);
  Rng rng(31);
  Tensor<double> s_hs(Shape{cfg.k, cfg.height, cfg.width});
  Tensor<double> s_ms(Shape{cfg.k, cfg.msi_height(), cfg.msi_width()});
  fill_uniform(s_hs, rng);
  fill_uniform(s_ms, rng);
  Mat<double> a_hs(cfg.k, cfg.hs_bands), a_ms(cfg.k, cfg.ms_bands);
  for (auto& v : a_hs.data) v = rng.uniform();
  for (auto& v : a_ms.data) v = rng.uniform();

  net.set_abundances(s_hs, s_ms);
  net.set_hsi_endmembers(a_hs);
  net.set_msi_endmembers(a_ms);
  fill_inputs(net, rng);
  net.forward();

  // getter round-trips the exact values
  CHECK(net.hsi_endmembers().data == a_hs.data);
  CHECK(net.msi_endmembers().data == a_ms.data);

  expect_close(net.tape().val(net.recon_hsi()), mixing::mix(s_hs, a_hs), 1e-12,
               1e-12, "hsi decode");
  expect_close(net.tape().val(net.recon_msi()), mixing::mix(s_ms, a_ms), 1e-12,
               1e-12, "msi decode");
  expect_close(net.tape().val(net.fused()), mixing::mix(s_ms, a_hs), 1e-12,
               1e-12, "fused decode");
}

TEST_CASE("response rows select and average bands") {
  const auto cfg = toy_config();
  Network<float> net(cfg, /*inject_abundances=*/true);
  Rng rng(12);
  fill_inputs(net, rng);
  Tensor<float> s_hs(Shape{cfg.k, cfg.height, cfg.width});
  Tensor<float> s_ms(Shape{cfg.k, cfg.msi_height(), cfg.msi_width()});
  fill_uniform(s_hs, rng);
  fill_uniform(s_ms, rng);
  net.set_abundances(s_hs, s_ms);

  Mat<float> srf(cfg.hs_bands, cfg.ms_bands);
  srf(5, 0) = 1.0f;                                   // one-hot column
  for (int mu = 0; mu < cfg.hs_bands; ++mu) srf(mu, 1) = 1.0f;  // uniform
  net.set_srf(srf);
  // delta blur kernel: decimation picks the top-left pixel of each block
  Tensor<float> delta(Shape{1, cfg.ratio, cfg.ratio});
  delta.at(0, 0, 0) = 1.0f;
  net.set_psf(delta);
  net.forward();

  const auto& x = net.tape().val(net.x());
  const auto& u_hs = net.tape().val(net.u_hs());
  for (std::size_t i = 0; i < x.shape.plane(); ++i)
    CHECK(u_hs.plane_ptr(0)[i] == x.plane_ptr(5)[i]);
  for (std::size_t i = 0; i < x.shape.plane(); ++i) {
    double mean = 0.0;
    for (int mu = 0; mu < cfg.hs_bands; ++mu) mean += x.plane_ptr(mu)[i];
    mean /= cfg.hs_bands;
    CHECK(static_cast<double>(u_hs.plane_ptr(1)[i]) ==
          doctest::Approx(mean).epsilon(1e-6));
  }

  const auto& y = net.tape().val(net.y());
  const auto& u_ms = net.tape().val(net.u_ms());
  for (int c = 0; c < cfg.ms_bands; ++c)
    for (int i = 0; i < cfg.height; ++i)
      for (int j = 0; j < cfg.width; ++j)
        CHECK(u_ms.at(c, i, j) == y.at(c, i * cfg.ratio, j * cfg.ratio));

  // normalization of an all-zero response column is undefined
  Mat<float> bad(cfg.hs_bands, cfg.ms_bands);
  bad(0, 0) = 1.0f;  // column 1 left zero
  net.set_srf(bad);
  CHECK_THROWS_AS(net.forward(), std::runtime_error);

  // the normalized view reports unit columns
  net.set_srf(srf);
  const auto norm = net.srf_normalized();
  for (int j = 0; j < norm.cols; ++j) {
    double s = 0.0;
    for (int mu = 0; mu < norm.rows; ++mu) s += norm(mu, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  const auto pk = net.psf_normalized();
  double ps = 0.0;
  for (float v : pk.data) ps += v;
  CHECK(ps == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("ground-truth wiring closes the degradation loop") {
  datasim::SceneSpec spec;
  spec.k = 3;
  spec.hs_bands = 16;
  spec.height = 16;
  spec.width = 16;
  spec.seed = 4;
  const auto scene = datasim::synth_scene(spec);
  const int ratio = 4;
  const auto srf = datasim::gaussian_srf_matrix(16, 2);
  const auto psf = datasim::gaussian_psf_kernel(ratio).cast<float>();
  const auto pair = datasim::simulate_pair(scene.z, srf, psf, ratio);

  NetworkConfig cfg;
  cfg.k = 3;
  cfg.hs_bands = 16;
  cfg.ms_bands = 2;
  cfg.ratio = ratio;
  cfg.height = 4;
  cfg.width = 4;
  cfg.hidden = {6, 4};
  cfg.msi_kernels = {3, 3, 3};
  Network<float> net(cfg, /*inject_abundances=*/true);
  net.set_inputs(pair.x, pair.y);

  // true abundances: the blur of an LMM cube is the LMM of blurred abundances
  const auto s_hs = mixing::apply_psf(scene.abund, psf, ratio);
  net.set_abundances(s_hs, scene.abund);
  net.set_hsi_endmembers(scene.endmembers);
  Mat<float> a_ms(cfg.k, cfg.ms_bands);
  for (int kk = 0; kk < cfg.k; ++kk)
    for (int j = 0; j < cfg.ms_bands; ++j) {
      double acc = 0.0;
      for (int mu = 0; mu < cfg.hs_bands; ++mu)
        acc += static_cast<double>(scene.endmembers(kk, mu)) * srf(mu, j);
      a_ms(kk, j) = static_cast<float>(acc);
    }
  net.set_msi_endmembers(a_ms);
  net.set_srf(srf);
  net.set_psf(psf);
  net.forward();

  const auto& t = net.tape();
  expect_close(t.val(net.fused()), scene.z, 0.0, 1e-6, "fused vs truth");
  expect_close(t.val(net.x_hat()), pair.x, 0.0, 1e-6, "x_hat vs x");
  expect_close(t.val(net.y_hat()), pair.y, 0.0, 1e-6, "y_hat vs y");
  expect_close(t.val(net.u_ms()), t.val(net.u_hs()), 0.0, 1e-6, "lrmsi");
  expect_close(t.val(net.recon_hsi()), pair.x, 0.0, 1e-6, "f(X) vs x");
  expect_close(t.val(net.recon_msi()), pair.y, 0.0, 1e-6, "g(Y) vs y");
}

TEST_CASE("whole-graph gradients match finite differences") {
  auto cfg = toy_config();
  Network<double> net(cfg);
  for (std::uint64_t seed : {1ull, 2ull}) {
    init_weights(net, seed);
    Rng rng(seed + 50);
    fill_inputs(net, rng);
    auto& t = net.tape();
    // scalar head mixing all four consistency outputs and the fused cube, so
    // every branch of the graph carries gradient
    int root = scalar_head(t, net.fused(), rng);
    root = t.add(root, scalar_head(t, net.x_hat(), rng));
    root = t.add(root, scalar_head(t, net.y_hat(), rng));
    root = t.add(root, scalar_head(t, net.u_ms(), rng));
    root = t.add(root, scalar_head(t, net.recon_hsi(), rng));

    std::vector<int> leaves;
    for (const auto& e : net.params()) leaves.push_back(e.id);
    const auto res = fd_check(t, root, leaves, 1e-5, 1e-4, 6, seed);
    require_grad_ok(res);
  }
}

TEST_CASE("checkpoints round-trip weights and optimizer state") {
  const auto cfg = toy_config();
  const std::string path = tmp_path("roundtrip.ckpt");

  Network<float> net(cfg);
  init_weights(net, 11);
  Rng rng(4);
  fill_inputs(net, rng);
  // a scalar head so a few optimizer steps produce nonzero moments
  Rng head_rng(42);
  auto& t = net.tape();
  const int root = scalar_head(t, net.fused(), head_rng);

  Adam<float> opt;
  const auto refs = net.param_refs();
  opt.init(refs);
  for (int i = 0; i < 3; ++i) {
    net.forward();
    t.backward(root);
    opt.step(0.01, refs);
  }
  save_checkpoint(path, net, &opt);

  CHECK(checkpoint_config(path) == cfg);

  Network<float> other(cfg);
  init_weights(other, 99);  // different starting point, fully overwritten
  Rng rng2(4);
  fill_inputs(other, rng2);
  Rng head_rng2(42);
  int root2 = scalar_head(other.tape(), other.fused(), head_rng2);
  Adam<float> opt2;
  const auto refs2 = other.param_refs();
  opt2.init(refs2);
  const auto step = load_checkpoint(path, other, &opt2);
  CHECK(step == 3);
  CHECK(opt2.steps() == 3);

  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const auto& a = net.tape().val(net.params()[i].id).data;
    const auto& b = other.tape().val(other.params()[i].id).data;
    CHECK(a == b);
  }
  CHECK(opt.m() == opt2.m());
  CHECK(opt.v() == opt2.v());

  // one more identical step on both instances stays bit-identical
  net.forward();
  t.backward(root);
  opt.step(0.005, refs);
  other.forward();
  other.tape().backward(root2);
  opt2.step(0.005, refs2);
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    CHECK(net.tape().val(net.params()[i].id).data ==
          other.tape().val(other.params()[i].id).data);
  }

  // weights-only checkpoints cannot resume an optimizer
  const std::string wpath = tmp_path("weights_only.ckpt");
  save_checkpoint(wpath, net);
  CHECK(load_checkpoint(wpath, other) == 0);
  Adam<float> opt3;
  opt3.init(refs2);
  CHECK_THROWS_AS(load_checkpoint(wpath, other, &opt3), std::runtime_error);

  // architecture mismatch is rejected
  auto cfg2 = cfg;
  cfg2.k = cfg.k + 1;
  Network<float> wrong(cfg2);
  CHECK_THROWS_AS(load_checkpoint(path, wrong), std::runtime_error);

  std::filesystem::remove(path);
  std::filesystem::remove(wpath);
}

TEST_CASE("misuse is rejected") {
  auto cfg = toy_config();
  Network<float> net(cfg);
  Tensor<float> bad(Shape{1, 2, 2});
  CHECK_THROWS_AS(net.set_inputs(bad, bad), std::runtime_error);
  CHECK_THROWS_AS(net.set_abundances(bad, bad), std::runtime_error);
  CHECK_THROWS_AS(net.param("no.such.parameter"), std::runtime_error);

  cfg.use_ssc = false;
  Network<float> lean(cfg);
  CHECK(lean.x_hat() == -1);
  CHECK(lean.y_hat() == -1);
  CHECK(lean.u_hs() == -1);
  CHECK(lean.u_ms() == -1);
  Mat<float> srf(cfg.hs_bands, cfg.ms_bands, 1.0f);
  CHECK_THROWS_AS(lean.set_srf(srf), std::runtime_error);
  CHECK_THROWS_AS(lean.srf_raw(), std::runtime_error);
  CHECK_THROWS_AS(lean.psf_raw(), std::runtime_error);
}

TEST_CASE("initialization is deterministic and seed-sensitive") {
  const auto cfg = toy_config();
  Network<float> a(cfg), b(cfg), c(cfg);
  init_weights(a, 123);
  init_weights(b, 123);
  init_weights(c, 124);
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& pa = a.tape().val(a.params()[i].id).data;
    const auto& pb = b.tape().val(b.params()[i].id).data;
    const auto& pc = c.tape().val(c.params()[i].id).data;
    if (pa != pb) all_equal = false;
    if (pa != pc) any_diff = true;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

}  // TEST_SUITE
