#include "hsfuse/cnmf.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "hsfuse/kernels.hpp"

namespace hsfuse::cnmf {

namespace {

constexpr double kDenomEps = 1e-12;

using Ematrix = Eigen::MatrixXd;

// cube (C,h,w) viewed as a pixels x C matrix, pixel rows stacked row-by-row
Ematrix cube_to_matrix(const Tensor<float>& t) {
  const auto plane = static_cast<Eigen::Index>(t.shape.plane());
  Ematrix m(plane, t.shape.c);
  for (int c = 0; c < t.shape.c; ++c)
    for (Eigen::Index p = 0; p < plane; ++p)
      m(p, c) = t.data[static_cast<std::size_t>(c) * plane + p];
  return m;
}

Tensor<float> matrix_to_cube(const Ematrix& m, int h, int w) {
  Tensor<float> t(static_cast<int>(m.cols()), h, w);
  const auto plane = static_cast<Eigen::Index>(t.shape.plane());
  check(m.rows() == plane, "matrix_to_cube: pixel count mismatch");
  for (int c = 0; c < t.shape.c; ++c)
    for (Eigen::Index p = 0; p < plane; ++p)
      t.data[static_cast<std::size_t>(c) * plane + p] =
          static_cast<float>(m(p, c));
  return t;
}

// blur + decimate each column of the pixels x K abundance matrix
Ematrix degrade_spatial(const Ematrix& s, int hh, int ww,
                        const Tensor<double>& psf, int ratio) {
  const int k = static_cast<int>(s.cols());
  Tensor<double> hi(k, hh, ww);
  const auto plane = static_cast<Eigen::Index>(hi.shape.plane());
  for (int c = 0; c < k; ++c)
    for (Eigen::Index p = 0; p < plane; ++p)
      hi.data[static_cast<std::size_t>(c) * plane + p] = s(p, c);
  Tensor<double> lo(k, hh / ratio, ww / ratio);
  kernels::psf_apply(lo, hi, psf.data.data(), ratio);
  const auto lo_plane = static_cast<Eigen::Index>(lo.shape.plane());
  Ematrix out(lo_plane, k);
  for (int c = 0; c < k; ++c)
    for (Eigen::Index p = 0; p < lo_plane; ++p)
      out(p, c) = lo.data[static_cast<std::size_t>(c) * lo_plane + p];
  return out;
}

void multiplicative_left(const Ematrix& v, Ematrix& w, const Ematrix& h) {
  const Ematrix num = v * h.transpose();
  const Ematrix den = w * (h * h.transpose());
  w = w.cwiseProduct(num.cwiseQuotient(
      den.cwiseMax(0.0) + Ematrix::Constant(den.rows(), den.cols(), kDenomEps)));
}

void multiplicative_right(const Ematrix& v, const Ematrix& w, Ematrix& h) {
  const Ematrix num = w.transpose() * v;
  const Ematrix den = (w.transpose() * w) * h;
  h = h.cwiseProduct(num.cwiseQuotient(
      den.cwiseMax(0.0) + Ematrix::Constant(den.rows(), den.cols(), kDenomEps)));
}

// inner NMF stage on one factor with early stopping on the stage fit
template <typename Update>
void nmf_stage(const Ematrix& v, const Ematrix& fixed_fit_w,
               const Ematrix& fixed_fit_h, int iters, double tol,
               Update update) {
  double prev = (v - fixed_fit_w * fixed_fit_h).squaredNorm();
  for (int i = 0; i < iters; ++i) {
    update();
    const double cur = (v - fixed_fit_w * fixed_fit_h).squaredNorm();
    if (prev > 0.0 && std::abs(prev - cur) <= tol * prev) break;
    prev = cur;
  }
}

}  // namespace

Mat<float> init_endmembers(const Tensor<float>& x, int k) {
  check(k >= 1, "init_endmembers: k must be >= 1");
  const auto m = cube_to_matrix(x);
  const auto pixels = m.rows();
  const int l = static_cast<int>(m.cols());
  check(pixels >= k, "init_endmembers: fewer pixels than endmembers");

  // Gram-Schmidt basis of the selected spectra; the next pick maximizes the
  // norm of the component orthogonal to that basis (ties -> lowest index)
  Ematrix basis(l, k);
  Mat<float> out(k, l);
  int chosen = 0;
  while (chosen < k) {
    Eigen::Index best = -1;
    double best_norm = -1.0;
    for (Eigen::Index p = 0; p < pixels; ++p) {
      Eigen::VectorXd v = m.row(p).transpose();
      for (int b = 0; b < chosen; ++b)
        v -= basis.col(b).dot(v) * basis.col(b);
      const double n = v.norm();
      if (n > best_norm) {
        best_norm = n;
        best = p;
      }
    }
    check(best_norm > 1e-12,
          "init_endmembers: data rank below the requested endmember count");
    Eigen::VectorXd v = m.row(best).transpose();
    for (int i = 0; i < l; ++i) out(chosen, i) = static_cast<float>(v(i));
    for (int b = 0; b < chosen; ++b) v -= basis.col(b).dot(v) * basis.col(b);
    basis.col(chosen) = v / v.norm();
    ++chosen;
  }
  return out;
}

void nmf_update(const Mat<double>& v, Mat<double>& w, Mat<double>& h,
                NmfSide side) {
  check(v.rows == w.rows && v.cols == h.cols && w.cols == h.rows,
        "nmf_update: factor shapes do not match");
  using Map = Eigen::Map<
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using CMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                              Eigen::Dynamic, Eigen::RowMajor>>;
  const CMap vm(v.data.data(), v.rows, v.cols);
  Map wm(w.data.data(), w.rows, w.cols);
  Map hm(h.data.data(), h.rows, h.cols);
  Ematrix wd = wm, hd = hm;
  if (side == NmfSide::UpdateLeft) {
    multiplicative_left(vm, wd, hd);
    wm = wd;
  } else {
    multiplicative_right(vm, wd, hd);
    hm = hd;
  }
}

FuseResult cnmf_fuse(const Tensor<float>& x, const Tensor<float>& y,
                     const Mat<float>& srf, const Tensor<float>& psf,
                     int ratio, const CnmfConfig& cfg) {
  check(cfg.k >= 2, "cnmf_fuse: k must be >= 2");
  check(cfg.outer_iters >= 1 && cfg.inner_iters >= 1,
        "cnmf_fuse: iteration counts must be >= 1");
  check(y.shape.h == x.shape.h * ratio && y.shape.w == x.shape.w * ratio,
        "cnmf_fuse: extents do not match the ratio");
  check(srf.rows == x.shape.c && srf.cols == y.shape.c,
        "cnmf_fuse: response matrix does not match the band counts");

  const int hh = y.shape.h, ww = y.shape.w;
  const Ematrix xm = cube_to_matrix(x);   // lo pixels x L
  const Ematrix ym = cube_to_matrix(y);   // hi pixels x l
  Ematrix r(srf.rows, srf.cols);
  for (int i = 0; i < srf.rows; ++i)
    for (int j = 0; j < srf.cols; ++j) r(i, j) = srf(i, j);
  const Tensor<double> psfd = psf.cast<double>();

  // endmembers from the purest pixels of X; abundances start uniform
  const Mat<float> a0 = init_endmembers(x, cfg.k);
  Ematrix a(cfg.k, x.shape.c);
  for (int i = 0; i < cfg.k; ++i)
    for (int j = 0; j < x.shape.c; ++j) a(i, j) = a0(i, j);
  Ematrix s = Ematrix::Constant(ym.rows(), cfg.k, 1.0 / cfg.k);

  auto coupled_objective = [&](const Ematrix& aa, const Ematrix& ss) {
    const Ematrix s_lo = degrade_spatial(ss, hh, ww, psfd, ratio);
    return (xm - s_lo * aa).squaredNorm() + (ym - ss * (aa * r)).squaredNorm();
  };

  FuseResult res;
  Ematrix best_a = a, best_s = s;
  double best_obj = coupled_objective(a, s);
  double prev_obj = best_obj;
  res.objective.push_back(best_obj);  // pre-iteration baseline

  for (int outer = 0; outer < cfg.outer_iters; ++outer) {
    // (a) unmix X for the endmembers, degraded abundances fixed
    const Ematrix s_lo = degrade_spatial(s, hh, ww, psfd, ratio);
    nmf_stage(xm, s_lo, a, cfg.inner_iters, cfg.tol,
              [&] { multiplicative_right(xm, s_lo, a); });

    // (b) unmix Y for the abundances, band-integrated endmembers fixed
    const Ematrix a_ms = a * r;
    nmf_stage(ym, s, a_ms, cfg.inner_iters, cfg.tol,
              [&] { multiplicative_left(ym, s, a_ms); });

    // abundance sum-to-one by row renormalization
    for (Eigen::Index p = 0; p < s.rows(); ++p) {
      const double rs = s.row(p).sum();
      if (rs > 0.0) s.row(p) /= rs;
    }

    const double obj = coupled_objective(a, s);
    res.objective.push_back(obj);
    if (obj > prev_obj * (1.0 + 1e-12)) res.warning = true;
    if (obj < best_obj) {
      best_obj = obj;
      best_a = a;
      best_s = s;
    }
    if (obj == 0.0 ||
        (prev_obj > 0.0 && std::abs(prev_obj - obj) <= cfg.tol * prev_obj)) {
      res.converged = true;
      break;
    }
    prev_obj = obj;
  }
  if (!res.converged) res.warning = true;

  res.z = matrix_to_cube(best_s * best_a, hh, ww);
  res.abund = matrix_to_cube(best_s, hh, ww);
  Mat<float> af(cfg.k, x.shape.c);
  for (int i = 0; i < cfg.k; ++i)
    for (int j = 0; j < x.shape.c; ++j)
      af(i, j) = static_cast<float>(best_a(i, j));
  res.endmembers = af;
  return res;
}

}  // namespace hsfuse::cnmf
