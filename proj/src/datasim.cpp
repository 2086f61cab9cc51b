#include "hsfuse/datasim.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hsfuse/mixing.hpp"
#include "hsfuse/rng.hpp"

namespace hsfuse::datasim {

Tensor<double> gaussian_psf_kernel(int ratio, double sigma) {
  check(ratio >= 1, "gaussian_psf_kernel: ratio must be >= 1");
  check(sigma > 0.0, "gaussian_psf_kernel: sigma must be positive");
  // generated in double so the unit-sum invariant holds to 1e-9 even for
  // large kernels; degradation pipelines cast to float at their boundary
  Tensor<double> k(Shape{1, ratio, ratio});
  const double c = 0.5 * (ratio - 1);
  double sum = 0.0;
  for (int y = 0; y < ratio; ++y)
    for (int x = 0; x < ratio; ++x) {
      const double d2 = (y - c) * (y - c) + (x - c) * (x - c);
      const double v = std::exp(-d2 / (2.0 * sigma * sigma));
      k.at(0, y, x) = v;
      sum += v;
    }
  for (auto& v : k.data) v /= sum;
  return k;
}

Mat<float> gaussian_srf_matrix(int hs_bands, int ms_bands) {
  check(hs_bands >= ms_bands && ms_bands >= 1,
        "gaussian_srf_matrix: need hs_bands >= ms_bands >= 1");
  Mat<float> r(hs_bands, ms_bands);
  const double sigma = static_cast<double>(hs_bands) / (2.0 * ms_bands);
  for (int j = 0; j < ms_bands; ++j) {
    const double center = (j + 0.5) * hs_bands / ms_bands - 0.5;
    for (int mu = 0; mu < hs_bands; ++mu)
      r(mu, j) = static_cast<float>(
          std::exp(-(mu - center) * (mu - center) / (2.0 * sigma * sigma)));
  }
  mixing::normalize_columns(r);
  return r;
}

namespace {

// 3x3 box smoothing with border-clipped renormalized windows. Applying the
// same window weights to every channel preserves the per-pixel channel sum.
void smooth_plane(Tensor<float>& cube, int channel, Tensor<float>& scratch) {
  const int h = cube.shape.h, w = cube.shape.w;
  const float* src = cube.plane_ptr(channel);
  float* dst = scratch.data.data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      int cnt = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          acc += src[static_cast<std::size_t>(yy) * w + xx];
          ++cnt;
        }
      dst[static_cast<std::size_t>(y) * w + x] =
          static_cast<float>(acc / cnt);
    }
  std::copy(scratch.data.begin(), scratch.data.end(),
            cube.data.begin() + channel * cube.shape.plane());
}

}  // namespace

Scene synth_scene(const SceneSpec& spec) {
  check(spec.k >= 1 && spec.hs_bands >= 2 && spec.height >= 1 &&
            spec.width >= 1,
        "synth_scene: bad spec");
  const int K = spec.k, L = spec.hs_bands;

  // Smooth nonnegative spectra: each a sum of 2-4 Gaussian bumps. Centers
  // are spread across disjoint spectral segments per endmember and the bump
  // widths stay narrow enough that distinct materials remain separable
  // (broad overlapping hills would make every spectrum nearly collinear and
  // the unmixing ill-conditioned, which is not what real libraries look
  // like).
  Rng erng(Rng::derive(spec.seed, "scene/endmembers"));
  Mat<float> endm(K, L);
  for (int k = 0; k < K; ++k) {
    const int bumps = 2 + erng.uniform_int(3);
    const double home = (k + 0.5) * (L - 1.0) / K;  // this material's segment
    for (int b = 0; b < bumps; ++b) {
      const double center =
          b == 0 ? home + erng.uniform(-L / (2.0 * K), L / (2.0 * K))
                 : erng.uniform(0.0, L - 1.0);
      const double width = erng.uniform(L / 16.0, L / 6.0);
      const double amp = b == 0 ? 1.0 : erng.uniform(0.15, 0.5);
      for (int mu = 0; mu < L; ++mu)
        endm(k, mu) += static_cast<float>(
            amp * std::exp(-(mu - center) * (mu - center) /
                           (2.0 * width * width)));
    }
  }

  // Per-pixel Dirichlet(eta) abundances with spatial smoothing: the gamma
  // fields are smoothed BEFORE the simplex normalization, which turns the
  // i.i.d. draws into material-like regions (correlation length grows with
  // the pass count) without flattening the per-pixel contrast the way
  // post-normalization averaging would.
  Rng arng(Rng::derive(spec.seed, "scene/abundances"));
  Tensor<float> abund(Shape{K, spec.height, spec.width});
  const std::size_t plane = abund.shape.plane();
  for (int k = 0; k < K; ++k)
    for (std::size_t p = 0; p < plane; ++p)
      abund.data[k * plane + p] =
          static_cast<float>(arng.gamma(spec.dirichlet_eta));
  Tensor<float> scratch(Shape{1, spec.height, spec.width});
  for (int pass = 0; pass < spec.smooth_passes; ++pass)
    for (int k = 0; k < K; ++k) smooth_plane(abund, k, scratch);
  for (std::size_t p = 0; p < plane; ++p) {
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += abund.data[k * plane + p];
    for (int k = 0; k < K; ++k)
      abund.data[k * plane + p] = static_cast<float>(abund.data[k * plane + p] / s);
  }

  // scale endmembers so the mixed cube peaks at exactly 1
  Tensor<float> z = mixing::mix(abund, endm);
  float peak = 0.0f;
  for (const float v : z.data) peak = std::max(peak, v);
  check(peak > 0.0f, "synth_scene: degenerate all-zero scene");
  for (auto& v : endm.data) v /= peak;
  z = mixing::mix(abund, endm);

  return Scene{std::move(z), std::move(abund), std::move(endm)};
}

namespace {

void add_noise(Tensor<float>& img, double snr_db, Rng& rng) {
  double power = 0.0;
  for (const float v : img.data) power += static_cast<double>(v) * v;
  power /= static_cast<double>(img.data.size());
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  for (auto& v : img.data) v += static_cast<float>(sigma * rng.normal());
}

}  // namespace

ObservedPair simulate_pair(const Tensor<float>& z, const Mat<float>& srf,
                           const Tensor<float>& psf, int ratio, double snr_db,
                           std::uint64_t seed) {
  ObservedPair pair;
  pair.x = mixing::apply_psf(z, psf, ratio);
  pair.y = mixing::apply_srf(z, srf);
  if (snr_db > 0.0) {
    Rng xr(Rng::derive(seed, "noise/x")), yr(Rng::derive(seed, "noise/y"));
    add_noise(pair.x, snr_db, xr);
    add_noise(pair.y, snr_db, yr);
  }
  return pair;
}

Mat<float> load_srf_csv(const std::string& path,
                        const std::vector<double>& grid_nm,
                        double max_gap_nm) {
  check(!grid_nm.empty(), "load_srf_csv: cube wavelength grid required");
  std::ifstream f(path);
  check(f.good(), "cannot open: " + path);

  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? ""
                                             : cell.substr(b, e - b + 1));
    }
    return cells;
  };

  std::string line;
  check(static_cast<bool>(std::getline(f, line)), "empty SRF file: " + path);
  const std::size_t cols = split(line).size();
  check(cols >= 2, "SRF header needs wavelength plus >= 1 channel: " + path);
  const int channels = static_cast<int>(cols) - 1;

  std::vector<double> wl;
  std::vector<std::vector<double>> resp;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    check(cells.size() == cols, "SRF row " + std::to_string(lineno) +
                                    " has " + std::to_string(cells.size()) +
                                    " cells, expected " +
                                    std::to_string(cols));
    try {
      wl.push_back(std::stod(cells[0]));
      std::vector<double> r(channels);
      for (int j = 0; j < channels; ++j) {
        r[j] = std::stod(cells[j + 1]);
        check(r[j] >= 0.0, "negative response at SRF row " +
                               std::to_string(lineno));
      }
      resp.push_back(std::move(r));
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("unparseable number at SRF row " +
                               std::to_string(lineno));
    }
  }
  check(!wl.empty(), "SRF file has no data rows: " + path);

  Mat<float> r(static_cast<int>(grid_nm.size()), channels);
  for (std::size_t i = 0; i < grid_nm.size(); ++i) {
    std::size_t best = 0;
    double best_gap = std::abs(wl[0] - grid_nm[i]);
    for (std::size_t s = 1; s < wl.size(); ++s) {
      const double gap = std::abs(wl[s] - grid_nm[i]);
      if (gap < best_gap) {
        best_gap = gap;
        best = s;
      }
    }
    check(best_gap <= max_gap_nm,
          "band at " + std::to_string(grid_nm[i]) + " nm is " +
              std::to_string(best_gap) + " nm from the nearest SRF sample");
    for (int j = 0; j < channels; ++j)
      r(static_cast<int>(i), j) = static_cast<float>(resp[best][j]);
  }
  mixing::normalize_columns(r);
  return r;
}

}  // namespace hsfuse::datasim
