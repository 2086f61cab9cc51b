#include "hsfuse/metrics.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <numbers>

namespace hsfuse::metrics {

namespace {

constexpr double kPsnrCap = 100.0;

void check_pair(const Tensor<float>& ref, const Tensor<float>& est) {
  check(ref.shape == est.shape, "metrics: shape mismatch " + ref.shape.str() +
                                    " vs " + est.shape.str());
  check(ref.numel() > 0, "metrics: empty cube");
}

}  // namespace

std::vector<double> psnr_per_band(const Tensor<float>& ref,
                                  const Tensor<float>& est) {
  check_pair(ref, est);
  const std::size_t plane = ref.shape.plane();
  std::vector<double> out(ref.shape.c);
  for (int b = 0; b < ref.shape.c; ++b) {
    const float* rp = ref.plane_ptr(b);
    const float* ep = est.plane_ptr(b);
    double mse = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = static_cast<double>(rp[i]) - ep[i];
      mse += d * d;
    }
    mse /= static_cast<double>(plane);
    out[b] = mse == 0.0 ? kPsnrCap
                        : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
  }
  return out;
}

double psnr(const Tensor<float>& ref, const Tensor<float>& est) {
  const auto bands = psnr_per_band(ref, est);
  double acc = 0.0;
  for (const double v : bands) acc += v;
  return acc / static_cast<double>(bands.size());
}

double sam_degrees(const Tensor<float>& ref, const Tensor<float>& est,
                   std::size_t* skipped) {
  check_pair(ref, est);
  const std::size_t plane = ref.shape.plane();
  const int L = ref.shape.c;
  double acc = 0.0;
  std::size_t used = 0, skip = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    double dot = 0.0, nr = 0.0, ne = 0.0;
    for (int b = 0; b < L; ++b) {
      const double r = ref.data[b * plane + p];
      const double e = est.data[b * plane + p];
      dot += r * e;
      nr += r * r;
      ne += e * e;
    }
    if (nr == 0.0 || ne == 0.0) {
      ++skip;
      continue;
    }
    const double den = nr * ne;
    if (dot * dot >= den) {
      // cosine at or beyond +-1 up to rounding: exactly (anti)parallel
      if (dot < 0.0) acc += std::numbers::pi;
    } else {
      acc += std::acos(std::clamp(dot / std::sqrt(den), -1.0, 1.0));
    }
    ++used;
  }
  if (skipped) *skipped = skip;
  if (used == 0) return 0.0;
  return acc / static_cast<double>(used) * 180.0 / std::numbers::pi;
}

double ergas(const Tensor<float>& ref, const Tensor<float>& est, int ratio) {
  check_pair(ref, est);
  check(ratio >= 1, "ergas: ratio must be >= 1");
  const std::size_t plane = ref.shape.plane();
  double acc = 0.0;
  for (int b = 0; b < ref.shape.c; ++b) {
    const float* rp = ref.plane_ptr(b);
    const float* ep = est.plane_ptr(b);
    double mse = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = static_cast<double>(rp[i]) - ep[i];
      mse += d * d;
      mean += rp[i];
    }
    mse /= static_cast<double>(plane);
    mean /= static_cast<double>(plane);
    check(mean != 0.0,
          "ergas: reference band " + std::to_string(b) + " has zero mean");
    acc += mse / (mean * mean);
  }
  acc /= static_cast<double>(ref.shape.c);
  return 100.0 / ratio * std::sqrt(acc);
}

namespace {

// 11x11 Gaussian window, sigma 1.5, unit sum
std::vector<double> ssim_window() {
  std::vector<double> w(11 * 11);
  double sum = 0.0;
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 11; ++x) {
      const double d2 = (y - 5.0) * (y - 5.0) + (x - 5.0) * (x - 5.0);
      w[y * 11 + x] = std::exp(-d2 / (2.0 * 1.5 * 1.5));
      sum += w[y * 11 + x];
    }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace

std::vector<double> ssim_per_band(const Tensor<float>& ref,
                                  const Tensor<float>& est) {
  check_pair(ref, est);
  const int h = ref.shape.h, w = ref.shape.w;
  check(h >= 11 && w >= 11, "ssim: image smaller than the 11x11 window");
  static const std::vector<double> win = ssim_window();
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

  std::vector<double> out(ref.shape.c);
  for (int b = 0; b < ref.shape.c; ++b) {
    const float* rp = ref.plane_ptr(b);
    const float* ep = est.plane_ptr(b);
    // bit-identical planes score exactly 1; the windowed accumulation would
    // only reproduce that up to fused-multiply-add rounding
    if (std::memcmp(rp, ep, ref.shape.plane() * sizeof(float)) == 0) {
      out[b] = 1.0;
      continue;
    }
    double acc = 0.0;
    std::size_t n = 0;
    for (int y = 0; y + 11 <= h; ++y)
      for (int x = 0; x + 11 <= w; ++x) {
        double mr = 0.0, me = 0.0, rr = 0.0, ee = 0.0, re = 0.0;
        for (int dy = 0; dy < 11; ++dy)
          for (int dx = 0; dx < 11; ++dx) {
            const double wv = win[dy * 11 + dx];
            const double r = rp[static_cast<std::size_t>(y + dy) * w + x + dx];
            const double e = ep[static_cast<std::size_t>(y + dy) * w + x + dx];
            mr += wv * r;
            me += wv * e;
            rr += wv * r * r;
            ee += wv * e * e;
            re += wv * r * e;
          }
        const double vr = rr - mr * mr;
        const double ve = ee - me * me;
        const double cov = re - mr * me;
        acc += ((2.0 * mr * me + c1) * (2.0 * cov + c2)) /
               ((mr * mr + me * me + c1) * (vr + ve + c2));
        ++n;
      }
    out[b] = acc / static_cast<double>(n);
  }
  return out;
}

double ssim(const Tensor<float>& ref, const Tensor<float>& est) {
  const auto bands = ssim_per_band(ref, est);
  double acc = 0.0;
  for (const double v : bands) acc += v;
  return acc / static_cast<double>(bands.size());
}

std::vector<double> uiqi_per_band(const Tensor<float>& ref,
                                  const Tensor<float>& est,
                                  std::size_t* skipped) {
  check_pair(ref, est);
  const int h = ref.shape.h, w = ref.shape.w;
  constexpr int kWin = 32, kStride = 8;
  check(h >= kWin && w >= kWin, "uiqi: image smaller than the 32x32 window");
  constexpr double kDegenerate = 1e-12;
  const double inv_n = 1.0 / (kWin * kWin);

  std::size_t skip = 0;
  std::vector<double> out(ref.shape.c, 0.0);
  for (int b = 0; b < ref.shape.c; ++b) {
    const float* rp = ref.plane_ptr(b);
    const float* ep = est.plane_ptr(b);
    // as in ssim: identical planes must score exactly 1 per used window
    const bool same =
        std::memcmp(rp, ep, ref.shape.plane() * sizeof(float)) == 0;
    double acc = 0.0;
    std::size_t n = 0;
    for (int y = 0; y + kWin <= h; y += kStride)
      for (int x = 0; x + kWin <= w; x += kStride) {
        double sr = 0.0, se = 0.0, srr = 0.0, see = 0.0, sre = 0.0;
        for (int dy = 0; dy < kWin; ++dy)
          for (int dx = 0; dx < kWin; ++dx) {
            const double r = rp[static_cast<std::size_t>(y + dy) * w + x + dx];
            const double e = ep[static_cast<std::size_t>(y + dy) * w + x + dx];
            sr += r;
            se += e;
            srr += r * r;
            see += e * e;
            sre += r * e;
          }
        const double mr = sr * inv_n, me = se * inv_n;
        const double vr = srr * inv_n - mr * mr;
        const double ve = see * inv_n - me * me;
        const double cov = sre * inv_n - mr * me;
        if (vr + ve <= kDegenerate) {
          ++skip;
          continue;
        }
        if (same) {
          acc += 1.0;
          ++n;
          continue;
        }
        const double m2 = mr * mr + me * me;
        const double lum = m2 <= kDegenerate ? 1.0 : 2.0 * mr * me / m2;
        acc += lum * (2.0 * cov / (vr + ve));
        ++n;
      }
    check(n > 0, "uiqi: all windows degenerate in band " + std::to_string(b));
    out[b] = acc / static_cast<double>(n);
  }
  if (skipped) *skipped = skip;
  return out;
}

double uiqi(const Tensor<float>& ref, const Tensor<float>& est,
            std::size_t* skipped) {
  const auto bands = uiqi_per_band(ref, est, skipped);
  double acc = 0.0;
  for (const double v : bands) acc += v;
  return acc / static_cast<double>(bands.size());
}

Report evaluate(const Tensor<float>& ref, const Tensor<float>& est,
                int ratio) {
  Report rep;
  rep.psnr_band = psnr_per_band(ref, est);
  rep.ssim_band = ssim_per_band(ref, est);
  rep.uiqi_band = uiqi_per_band(ref, est, &rep.uiqi_skipped_windows);
  auto mean = [](const std::vector<double>& v) {
    double a = 0.0;
    for (const double x : v) a += x;
    return a / static_cast<double>(v.size());
  };
  rep.psnr = mean(rep.psnr_band);
  rep.ssim = mean(rep.ssim_band);
  rep.uiqi = mean(rep.uiqi_band);
  rep.sam = sam_degrees(ref, est, &rep.sam_skipped_pixels);
  rep.ergas = ergas(ref, est, ratio);
  return rep;
}

}  // namespace hsfuse::metrics
