#pragma once

#include "hsfuse/tensor.hpp"

namespace hsfuse::mixing {

// Linear mixing: every pixel spectrum is the abundance-weighted combination
// of the endmember spectra. abund is (K,h,w), endmembers is K x L; the result
// is (L,h,w).
template <typename T>
Tensor<T> mix(const Tensor<T>& abund, const Mat<T>& endmembers);

// Spectral degradation: per-pixel product with the response matrix
// (L x l, unit-sum columns). (L,h,w) -> (l,h,w).
template <typename T>
Tensor<T> apply_srf(const Tensor<T>& z, const Mat<T>& srf);

// Spatial degradation: depthwise blur with the (1,r,r) unit-sum kernel and
// stride-r decimation over disjoint blocks. Extents must divide by r.
template <typename T>
Tensor<T> apply_psf(const Tensor<T>& z, const Tensor<T>& psf, int ratio);

// Mean absolute difference between the two routes to the doubly degraded
// image: band-integrated X versus blurred-and-decimated Y. Zero when both
// observations come from one scene through the same operators.
template <typename T>
double lrmsi_consistency(const Tensor<T>& x, const Tensor<T>& y,
                         const Mat<T>& srf, const Tensor<T>& psf, int ratio);

struct ConstraintReport {
  bool anc_ok = false;           // abundances >= 0
  bool asc_ok = false;           // abundance rows sum to 1 within tol
  bool endmembers_nonneg = false;
  double max_anc_violation = 0.0;
  double max_asc_violation = 0.0;
  double max_endmember_violation = 0.0;
  bool all_ok() const { return anc_ok && asc_ok && endmembers_nonneg; }
};

template <typename T>
ConstraintReport check_constraints(const Tensor<T>& abund,
                                   const Mat<T>& endmembers,
                                   double tol = 1e-5);

// Scales every column to unit sum; a (near) zero column is an error.
template <typename T>
void normalize_columns(Mat<T>& m);

}  // namespace hsfuse::mixing
