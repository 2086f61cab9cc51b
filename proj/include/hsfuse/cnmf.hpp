#pragma once

#include <vector>

#include "hsfuse/tensor.hpp"

namespace hsfuse::cnmf {

// Coupled nonnegative matrix factorization fusion with known degradation
// operators. Gradient-free, deterministic, no random state: serves as an
// independent cross-check for the learned fusion.

struct CnmfConfig {
  int k = 4;            // endmember count, >= 2 for fusion (1 allowed in init)
  int outer_iters = 4;  // coupled alternations
  int inner_iters = 200;  // multiplicative updates per stage
  double tol = 1e-6;      // relative objective change for convergence
};

// Purest-pixel endmember seeding: repeatedly pick the pixel spectrum with the
// largest residual norm after projecting out the spectra chosen so far.
Mat<float> init_endmembers(const Tensor<float>& x, int k);

// One multiplicative Frobenius-NMF update on V ~= W*H. UpdateLeft refreshes
// W from (V H^T) / (W H H^T); UpdateRight refreshes H from (W^T V) / (W^T W H).
// Nonnegativity is preserved and the fit does not increase.
enum class NmfSide { UpdateLeft, UpdateRight };
void nmf_update(const Mat<double>& v, Mat<double>& w, Mat<double>& h,
                NmfSide side);

struct FuseResult {
  Tensor<float> z;        // fused (L,H,W) estimate
  Mat<float> endmembers;  // K x L
  Tensor<float> abund;    // (K,H,W), rows renormalized to sum 1
  std::vector<double> objective;  // coupled objective per outer iteration
  bool converged = false;
  bool warning = false;  // not converged, or the objective ever increased
};

// Alternates (a) unmixing X for the endmembers with the spatially degraded
// abundances held fixed and (b) unmixing Y for the abundances with the
// band-integrated endmembers held fixed; returns the best-so-far factors.
FuseResult cnmf_fuse(const Tensor<float>& x, const Tensor<float>& y,
                     const Mat<float>& srf, const Tensor<float>& psf,
                     int ratio, const CnmfConfig& cfg);

}  // namespace hsfuse::cnmf
