#include <cmath>

#include "doctest.h"
#include "hsfuse/metrics.hpp"
#include "hsfuse/rng.hpp"
#include "metric_oracles.hpp"
#include "test_util.hpp"

using namespace hsfuse;
using namespace testutil;

TEST_SUITE("metrics") {

TEST_CASE("ideal values are exact on identical inputs") {
  Rng rng(41);
  Tensor<float> z(5, 40, 40);
  fill_uniform(z, rng);
  CHECK(metrics::psnr(z, z) == 100.0);
  CHECK(metrics::sam_degrees(z, z) == 0.0);
  CHECK(metrics::ergas(z, z, 4) == 0.0);
  CHECK(metrics::ssim(z, z) == 1.0);
  CHECK(metrics::uiqi(z, z) == 1.0);
}

TEST_CASE("all five metrics match direct-formula oracles on 20 random pairs") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const int bands = 3 + static_cast<int>(rng.uniform_int(5));
    const int h = 35 + static_cast<int>(rng.uniform_int(12));
    const int w = 35 + static_cast<int>(rng.uniform_int(12));
    Tensor<float> ref(bands, h, w);
    fill_uniform(ref, rng);
    Tensor<float> est = ref;
    for (auto& v : est.data)
      v += static_cast<float>(0.2 * (rng.uniform() - 0.5));

    const auto psnr_b = metrics::psnr_per_band(ref, est);
    const auto psnr_o = oracle_psnr_band(ref, est);
    for (int b = 0; b < bands; ++b)
      CHECK(rel10(psnr_b[b], psnr_o[b]) <= 1e-10);
    CHECK(rel10(metrics::psnr(ref, est), vec_mean(psnr_o)) <= 1e-10);

    CHECK(rel10(metrics::sam_degrees(ref, est), oracle_sam(ref, est)) <=
          1e-10);
    CHECK(rel10(metrics::ergas(ref, est, 8), oracle_ergas(ref, est, 8)) <=
          1e-10);

    const auto ssim_b = metrics::ssim_per_band(ref, est);
    const auto ssim_o = oracle_ssim_band(ref, est);
    for (int b = 0; b < bands; ++b)
      CHECK(rel10(ssim_b[b], ssim_o[b]) <= 1e-10);
    CHECK(rel10(metrics::ssim(ref, est), vec_mean(ssim_o)) <= 1e-10);

    const auto uiqi_b = metrics::uiqi_per_band(ref, est);
    const auto uiqi_o = oracle_uiqi_band(ref, est);
    for (int b = 0; b < bands; ++b)
      CHECK(rel10(uiqi_b[b], uiqi_o[b]) <= 1e-10);
    CHECK(rel10(metrics::uiqi(ref, est), vec_mean(uiqi_o)) <= 1e-10);
  }
}

TEST_CASE("psnr: constant offset gives the closed-form 20 dB") {
  Rng rng(43);
  Tensor<float> ref(3, 16, 16);
  fill_uniform(ref, rng, 0.0, 0.8);
  Tensor<float> est = ref;
  for (auto& v : est.data) v += 0.1f;
  const auto bands = metrics::psnr_per_band(ref, est);
  for (const double b : bands) CHECK(b == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("sam: scale invariance, orthogonality, and skipped pixels") {
  Rng rng(44);
  Tensor<float> ref(4, 10, 10);
  fill_uniform(ref, rng, 0.1, 1.0);
  Tensor<float> est = ref;
  for (auto& v : est.data) v *= 2.0f;
  CHECK(metrics::sam_degrees(ref, est) == 0.0);
  // psnr and ergas are not scale invariant
  CHECK(metrics::psnr(ref, est) < 100.0);
  CHECK(metrics::ergas(ref, est, 2) > 0.0);

  Tensor<float> a(2, 3, 3), b(2, 3, 3);
  for (std::size_t p = 0; p < a.shape.plane(); ++p) {
    a.data[p] = 1.0f;               // ref spectra (1, 0)
    b.data[a.shape.plane() + p] = 1.0f;  // est spectra (0, 1)
  }
  CHECK(metrics::sam_degrees(a, b) == doctest::Approx(90.0).epsilon(1e-12));

  // a zero-norm pixel on either side is skipped and counted
  Tensor<float> r2(2, 1, 2), e2(2, 1, 2);
  r2.at(0, 0, 0) = 1.0f;  // pixel 0: ref (1,0), est (1,1) -> 45 degrees
  e2.at(0, 0, 0) = 1.0f;
  e2.at(1, 0, 0) = 1.0f;
  e2.at(0, 0, 1) = 1.0f;  // pixel 1: ref is zero-norm
  std::size_t skipped = 0;
  CHECK(metrics::sam_degrees(r2, e2, &skipped) ==
        doctest::Approx(45.0).epsilon(1e-12));
  CHECK(skipped == 1);
}

TEST_CASE("ergas: relative-error form and ratio linearity") {
  Rng rng(45);
  Tensor<float> ref(4, 12, 12);
  fill_uniform(ref, rng, 0.1, 1.0);
  Tensor<float> est = ref;
  for (auto& v : est.data) v *= 1.01f;

  const std::size_t plane = ref.shape.plane();
  double acc = 0.0;
  for (int b = 0; b < 4; ++b) {
    double mse = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double r = ref.plane_ptr(b)[i];
      const double d = r - est.plane_ptr(b)[i];
      mse += d * d;
      mean += r;
    }
    mse /= static_cast<double>(plane);
    mean /= static_cast<double>(plane);
    acc += mse / (mean * mean);
  }
  const double expect = 100.0 / 2 * std::sqrt(acc / 4.0);
  CHECK(metrics::ergas(ref, est, 2) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(metrics::ergas(ref, est, 4) ==
        doctest::Approx(metrics::ergas(ref, est, 2) / 2.0).epsilon(1e-12));

  Tensor<float> zero_band = ref;
  std::fill(zero_band.data.begin(), zero_band.data.begin() + plane, 0.0f);
  CHECK_THROWS(metrics::ergas(zero_band, est, 2));
}

TEST_CASE("ssim: constant images reduce to the luminance term") {
  Tensor<float> ref(1, 16, 16, 0.2f);
  Tensor<float> est(1, 16, 16, 0.7f);
  const double a = static_cast<double>(0.2f), b = static_cast<double>(0.7f);
  const double lum = (2.0 * a * b + 1e-4) / (a * a + b * b + 1e-4);
  CHECK(metrics::ssim(ref, est) == doctest::Approx(lum).epsilon(1e-9));
}

TEST_CASE("uiqi: negated zero-mean image scores exactly -1") {
  Tensor<float> ref(1, 40, 40);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      ref.at(0, y, x) = ((y + x) % 2 == 0) ? 0.5f : -0.5f;
  Tensor<float> est = ref;
  for (auto& v : est.data) v = -v;
  CHECK(metrics::uiqi(ref, est) == -1.0);
}

TEST_CASE("uiqi: degenerate windows are skipped and counted") {
  Tensor<float> ref(1, 40, 40, 0.3f);
  ref.at(0, 39, 39) = 0.9f;  // only windows reaching the corner have variance
  const Tensor<float> est = ref;
  std::size_t skipped = 0;
  CHECK(metrics::uiqi(ref, est, &skipped) == 1.0);
  CHECK(skipped == 3);

  Tensor<float> flat(1, 40, 40, 0.3f);
  CHECK_THROWS(metrics::uiqi(flat, flat));
}

TEST_CASE("window metrics reject undersized images") {
  Tensor<float> tiny(2, 8, 8, 0.5f);
  CHECK_THROWS(metrics::ssim(tiny, tiny));
  Tensor<float> small(2, 31, 31, 0.5f);
  CHECK_THROWS(metrics::uiqi(small, small));
  Tensor<float> other(2, 8, 9, 0.5f);
  CHECK_THROWS(metrics::psnr(tiny, other));  // shape mismatch
}

TEST_CASE("evaluate fills the full report") {
  Rng rng(46);
  Tensor<float> ref(4, 36, 36);
  fill_uniform(ref, rng);
  Tensor<float> est = ref;
  for (auto& v : est.data) v += static_cast<float>(0.05 * (rng.uniform() - 0.5));

  const auto rep = metrics::evaluate(ref, est, 4);
  CHECK(rep.psnr == metrics::psnr(ref, est));
  CHECK(rep.sam == metrics::sam_degrees(ref, est));
  CHECK(rep.ergas == metrics::ergas(ref, est, 4));
  CHECK(rep.ssim == metrics::ssim(ref, est));
  CHECK(rep.uiqi == metrics::uiqi(ref, est));
  CHECK(rep.psnr_band.size() == 4);
  CHECK(rep.ssim_band.size() == 4);
  CHECK(rep.uiqi_band.size() == 4);
  CHECK(rep.sam_skipped_pixels == 0);
  CHECK(rep.uiqi_skipped_windows == 0);
  CHECK(rep.psnr > 20.0);
  CHECK(rep.ssim > 0.5);
}

}  // TEST_SUITE
