#pragma once

#include <cstddef>
#include <vector>

#include "hsfuse/tensor.hpp"

namespace hsfuse::metrics {

// All statistics are accumulated in double regardless of input precision.

// Per band 10*log10(1/MSE) with peak 1; each band capped at the 100 dB
// sentinel (identical bands would otherwise be infinite); mean over bands.
double psnr(const Tensor<float>& ref, const Tensor<float>& est);
std::vector<double> psnr_per_band(const Tensor<float>& ref,
                                  const Tensor<float>& est);

// Mean per-pixel angle between the two spectra, in degrees. Pixels where
// either spectrum has zero norm are skipped and counted.
double sam_degrees(const Tensor<float>& ref, const Tensor<float>& est,
                   std::size_t* skipped = nullptr);

// 100/ratio * sqrt(mean over bands of (RMSE_b / mean_b)^2); a zero-mean
// reference band is an error.
double ergas(const Tensor<float>& ref, const Tensor<float>& est, int ratio);

// Single-scale structural similarity per band (11x11 Gaussian window,
// sigma 1.5, C1=0.01^2, C2=0.03^2 on data range 1, valid windows only),
// averaged over bands.
double ssim(const Tensor<float>& ref, const Tensor<float>& est);
std::vector<double> ssim_per_band(const Tensor<float>& ref,
                                  const Tensor<float>& est);

// Wang-Bovik index on sliding 32x32 windows with stride 8, averaged over
// windows then bands, using population moments:
//   q = lum * cs,  cs = 2*cov / (var_r + var_e),
//   lum = 1 when mean_r^2 + mean_e^2 <= 1e-12, else
//         2*mean_r*mean_e / (mean_r^2 + mean_e^2).
// Windows with var_r + var_e <= 1e-12 are degenerate: skipped and counted.
double uiqi(const Tensor<float>& ref, const Tensor<float>& est,
            std::size_t* skipped = nullptr);
std::vector<double> uiqi_per_band(const Tensor<float>& ref,
                                  const Tensor<float>& est,
                                  std::size_t* skipped = nullptr);

struct Report {
  double psnr = 0.0;
  double sam = 0.0;
  double ergas = 0.0;
  double ssim = 0.0;
  double uiqi = 0.0;
  std::vector<double> psnr_band;
  std::vector<double> ssim_band;
  std::vector<double> uiqi_band;
  std::size_t sam_skipped_pixels = 0;
  std::size_t uiqi_skipped_windows = 0;
};

Report evaluate(const Tensor<float>& ref, const Tensor<float>& est, int ratio);

}  // namespace hsfuse::metrics
