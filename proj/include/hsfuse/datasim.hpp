#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hsfuse/tensor.hpp"

namespace hsfuse::datasim {

// r x r isotropic Gaussian centered on the kernel grid, unit sum. Support
// equals the decimation block, so the blur stays block-local.
Tensor<double> gaussian_psf_kernel(int ratio, double sigma = 0.5);

// Synthetic multispectral response: ms_bands broad Gaussian channels evenly
// spread over the hs band grid, columns normalized to unit sum.
Mat<float> gaussian_srf_matrix(int hs_bands, int ms_bands);

struct SceneSpec {
  int k = 4;         // endmember count
  int hs_bands = 31; // L
  int height = 64;   // H (high resolution)
  int width = 64;    // W
  double dirichlet_eta = 0.8;
  int smooth_passes = 4;
  std::uint64_t seed = 0;
};

struct Scene {
  Tensor<float> z;        // (L,H,W), global max scaled to 1
  Tensor<float> abund;    // (K,H,W), nonneg, rows sum to 1
  Mat<float> endmembers;  // K x L, scaled together with z
};

// Smooth random endmember spectra (sums of 2-4 Gaussians over the band
// grid) mixed with spatially smoothed per-pixel Dirichlet abundances.
// Bit-reproducible under the seed.
Scene synth_scene(const SceneSpec& spec);

struct ObservedPair {
  Tensor<float> x;  // blurred + decimated hyperspectral observation
  Tensor<float> y;  // band-integrated multispectral observation
};

// snr_db > 0 adds white Gaussian noise of that signal-to-noise ratio to both
// observations (independent streams); snr_db == 0 keeps them exact.
ObservedPair simulate_pair(const Tensor<float>& z, const Mat<float>& srf,
                           const Tensor<float>& psf, int ratio,
                           double snr_db = 0.0, std::uint64_t seed = 0);

// CSV with one header row (first column wavelength nm, remaining columns
// channel names); rows are response samples. Samples are matched to the cube
// band grid by nearest wavelength; a gap beyond max_gap_nm is an error.
// Columns come back normalized to unit sum.
Mat<float> load_srf_csv(const std::string& path,
                        const std::vector<double>& grid_nm,
                        double max_gap_nm = 10.0);

}  // namespace hsfuse::datasim
