#include "hsfuse/mixing.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "hsfuse/kernels.hpp"

namespace hsfuse::mixing {

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const EMat<T>> as_mat(const Mat<T>& m) {
  return {m.data.data(), m.rows, m.cols};
}

// cube (C,h,w) viewed as channels x pixels
template <typename T>
Eigen::Map<const EMat<T>> as_mat(const Tensor<T>& t) {
  return {t.data.data(), t.shape.c, static_cast<Eigen::Index>(t.shape.plane())};
}

}  // namespace

template <typename T>
Tensor<T> mix(const Tensor<T>& abund, const Mat<T>& endmembers) {
  check(abund.shape.c == endmembers.rows,
        "mix: abundance channels (" + std::to_string(abund.shape.c) +
            ") do not match endmember count (" +
            std::to_string(endmembers.rows) + ")");
  Tensor<T> z(Shape{endmembers.cols, abund.shape.h, abund.shape.w});
  Eigen::Map<EMat<T>> out(z.data.data(), z.shape.c,
                          static_cast<Eigen::Index>(z.shape.plane()));
  out.noalias() = as_mat(endmembers).transpose() * as_mat(abund);
  return z;
}

template <typename T>
Tensor<T> apply_srf(const Tensor<T>& z, const Mat<T>& srf) {
  check(z.shape.c == srf.rows,
        "apply_srf: cube has " + std::to_string(z.shape.c) +
            " bands, response matrix expects " + std::to_string(srf.rows));
  Tensor<T> y(Shape{srf.cols, z.shape.h, z.shape.w});
  Eigen::Map<EMat<T>> out(y.data.data(), y.shape.c,
                          static_cast<Eigen::Index>(y.shape.plane()));
  out.noalias() = as_mat(srf).transpose() * as_mat(z);
  return y;
}

template <typename T>
Tensor<T> apply_psf(const Tensor<T>& z, const Tensor<T>& psf, int ratio) {
  check(psf.shape.c == 1 && psf.shape.h == ratio && psf.shape.w == ratio,
        "apply_psf: kernel must be (1,r,r) with r = " + std::to_string(ratio));
  check(z.shape.h % ratio == 0 && z.shape.w % ratio == 0,
        "apply_psf: extents " + z.shape.str() + " not divisible by ratio " +
            std::to_string(ratio));
  Tensor<T> x(Shape{z.shape.c, z.shape.h / ratio, z.shape.w / ratio});
  kernels::psf_apply(x, z, psf.data.data(), ratio);
  return x;
}

template <typename T>
double lrmsi_consistency(const Tensor<T>& x, const Tensor<T>& y,
                         const Mat<T>& srf, const Tensor<T>& psf, int ratio) {
  const Tensor<T> u_hs = apply_srf(x, srf);
  const Tensor<T> u_ms = apply_psf(y, psf, ratio);
  check(u_hs.shape == u_ms.shape,
        "lrmsi_consistency: degraded shapes disagree, " + u_hs.shape.str() +
            " vs " + u_ms.shape.str());
  double acc = 0.0;
  for (std::size_t i = 0; i < u_hs.data.size(); ++i)
    acc += std::abs(static_cast<double>(u_hs.data[i]) - u_ms.data[i]);
  return acc / static_cast<double>(u_hs.data.size());
}

template <typename T>
ConstraintReport check_constraints(const Tensor<T>& abund,
                                   const Mat<T>& endmembers, double tol) {
  ConstraintReport rep;
  for (const T v : abund.data)
    if (v < T(0))
      rep.max_anc_violation =
          std::max(rep.max_anc_violation, -static_cast<double>(v));
  const std::size_t plane = abund.shape.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    double s = 0.0;
    for (int k = 0; k < abund.shape.c; ++k)
      s += static_cast<double>(abund.data[k * plane + p]);
    rep.max_asc_violation = std::max(rep.max_asc_violation, std::abs(s - 1.0));
  }
  for (const T v : endmembers.data)
    if (v < T(0))
      rep.max_endmember_violation =
          std::max(rep.max_endmember_violation, -static_cast<double>(v));
  rep.anc_ok = rep.max_anc_violation == 0.0;
  rep.asc_ok = rep.max_asc_violation <= tol;
  rep.endmembers_nonneg = rep.max_endmember_violation == 0.0;
  return rep;
}

template <typename T>
void normalize_columns(Mat<T>& m) {
  for (int c = 0; c < m.cols; ++c) {
    double s = 0.0;
    for (int r = 0; r < m.rows; ++r) s += static_cast<double>(m(r, c));
    check(s > 1e-12, "normalize_columns: column " + std::to_string(c) +
                         " sums to (near) zero");
    const T inv = static_cast<T>(1.0 / s);
    for (int r = 0; r < m.rows; ++r) m(r, c) *= inv;
  }
}

#define HSFUSE_INSTANTIATE_MIXING(T)                                          \
  template Tensor<T> mix<T>(const Tensor<T>&, const Mat<T>&);                 \
  template Tensor<T> apply_srf<T>(const Tensor<T>&, const Mat<T>&);           \
  template Tensor<T> apply_psf<T>(const Tensor<T>&, const Tensor<T>&, int);   \
  template double lrmsi_consistency<T>(const Tensor<T>&, const Tensor<T>&,    \
                                       const Mat<T>&, const Tensor<T>&, int); \
  template ConstraintReport check_constraints<T>(const Tensor<T>&,            \
                                                 const Mat<T>&, double);      \
  template void normalize_columns<T>(Mat<T>&);

HSFUSE_INSTANTIATE_MIXING(float)
HSFUSE_INSTANTIATE_MIXING(double)

}  // namespace hsfuse::mixing
