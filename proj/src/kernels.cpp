#include "hsfuse/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>

namespace hsfuse::kernels {

int max_threads() {
  static const int n = [] {
    int limit = omp_get_max_threads();
    if (const char* env = std::getenv("HSFUSE_THREADS")) {
      const int req = std::atoi(env);
      if (req >= 1) limit = std::min(limit, req);
    }
    return std::max(1, limit);
  }();
  return n;
}

namespace {

// Smallest output index whose input coordinate idx*stride + offset is >= 0.
inline int lo_index(int offset, int stride) {
  if (offset >= 0) return 0;
  return (-offset + stride - 1) / stride;
}

// Largest output index still inside [0, extent). May come out negative when
// the tap never hits the input; callers treat that as an empty range.
inline int hi_index(int offset, int stride, int extent, int out_extent) {
  return std::min(out_extent - 1, (extent - 1 - offset) / stride);
}

template <typename T>
void check_conv_shapes(const Tensor<T>& out, const Tensor<T>& in,
                       const Tensor<T>& ker, int out_c, int k, int stride,
                       int pad) {
  check(in.shape.c >= 1 && k >= 1 && stride >= 1 && pad >= 0,
        "conv2d: bad parameters");
  check(ker.shape.c == out_c * in.shape.c && ker.shape.h == k &&
            ker.shape.w == k,
        "conv2d: kernel shape mismatch " + ker.shape.str());
  const int oh = (in.shape.h + 2 * pad - k) / stride + 1;
  const int ow = (in.shape.w + 2 * pad - k) / stride + 1;
  check(out.shape.c == out_c && out.shape.h == oh && out.shape.w == ow,
        "conv2d: output shape mismatch, expected (" + std::to_string(out_c) +
            "," + std::to_string(oh) + "," + std::to_string(ow) + ") got " +
            out.shape.str());
}

}  // namespace

// Tap-major loop nests: the innermost loop walks the output row contiguously
// (a saxpy for stride 1), which is what the single-core SIMD budget relies
// on. Threads split over disjoint output channels, and every accumulation
// order is fixed per element, so results do not depend on the thread count.
template <typename T>
void conv2d(Tensor<T>& out, const Tensor<T>& in, const Tensor<T>& ker,
            int out_c, int k, int stride, int pad) {
  check_conv_shapes(out, in, ker, out_c, k, stride, pad);
  const int in_c = in.shape.c;
  const int ih = in.shape.h, iw = in.shape.w;
  const int oh = out.shape.h, ow = out.shape.w;

#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int o = 0; o < out_c; ++o) {
    T* op = out.plane_ptr(o);
    std::fill(op, op + out.shape.plane(), T(0));
    for (int i = 0; i < in_c; ++i) {
      const T* ip = in.plane_ptr(i);
      const T* kp = ker.plane_ptr(o * in_c + i);
      for (int dy = 0; dy < k; ++dy) {
        const int y_lo = lo_index(dy - pad, stride);
        const int y_hi = hi_index(dy - pad, stride, ih, oh);
        for (int dx = 0; dx < k; ++dx) {
          const T wv = kp[dy * k + dx];
          const int x_lo = lo_index(dx - pad, stride);
          const int x_hi = hi_index(dx - pad, stride, iw, ow);
          if (x_lo > x_hi) continue;
          const int ix0 = x_lo * stride + dx - pad;
          for (int y = y_lo; y <= y_hi; ++y) {
            const int iy = y * stride + dy - pad;
            const T* irow = ip + static_cast<std::size_t>(iy) * iw + ix0;
            T* orow = op + static_cast<std::size_t>(y) * ow;
            if (stride == 1) {
              for (int x = x_lo; x <= x_hi; ++x) orow[x] += wv * irow[x - x_lo];
            } else {
              for (int x = x_lo; x <= x_hi; ++x)
                orow[x] += wv * irow[static_cast<std::size_t>(x - x_lo) * stride];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_grad_input(Tensor<T>& gin, const Tensor<T>& gout,
                       const Tensor<T>& ker, int out_c, int k, int stride,
                       int pad) {
  check_conv_shapes(gout, gin, ker, out_c, k, stride, pad);
  const int in_c = gin.shape.c;
  const int ih = gin.shape.h, iw = gin.shape.w;
  const int oh = gout.shape.h, ow = gout.shape.w;

#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int i = 0; i < in_c; ++i) {
    T* gp = gin.plane_ptr(i);
    for (int o = 0; o < out_c; ++o) {
      const T* gop = gout.plane_ptr(o);
      const T* kp = ker.plane_ptr(o * in_c + i);
      for (int dy = 0; dy < k; ++dy) {
        const int y_lo = lo_index(dy - pad, stride);
        const int y_hi = hi_index(dy - pad, stride, ih, oh);
        for (int dx = 0; dx < k; ++dx) {
          const T wv = kp[dy * k + dx];
          const int x_lo = lo_index(dx - pad, stride);
          const int x_hi = hi_index(dx - pad, stride, iw, ow);
          if (x_lo > x_hi) continue;
          const int ix0 = x_lo * stride + dx - pad;
          for (int y = y_lo; y <= y_hi; ++y) {
            const int iy = y * stride + dy - pad;
            T* grow = gp + static_cast<std::size_t>(iy) * iw + ix0;
            const T* gorow = gop + static_cast<std::size_t>(y) * ow;
            if (stride == 1) {
              for (int x = x_lo; x <= x_hi; ++x) grow[x - x_lo] += wv * gorow[x];
            } else {
              for (int x = x_lo; x <= x_hi; ++x)
                grow[static_cast<std::size_t>(x - x_lo) * stride] += wv * gorow[x];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_grad_kernel(Tensor<T>& gker, const Tensor<T>& gout,
                        const Tensor<T>& in, int out_c, int k, int stride,
                        int pad) {
  check_conv_shapes(gout, in, gker, out_c, k, stride, pad);
  const int in_c = in.shape.c;
  const int ih = in.shape.h, iw = in.shape.w;
  const int oh = gout.shape.h, ow = gout.shape.w;

#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int o = 0; o < out_c; ++o) {
    const T* gop = gout.plane_ptr(o);
    for (int i = 0; i < in_c; ++i) {
      const T* ip = in.plane_ptr(i);
      T* kp = gker.plane_ptr(o * in_c + i);
      for (int dy = 0; dy < k; ++dy) {
        const int y_lo = lo_index(dy - pad, stride);
        const int y_hi = hi_index(dy - pad, stride, ih, oh);
        for (int dx = 0; dx < k; ++dx) {
          const int x_lo = lo_index(dx - pad, stride);
          const int x_hi = hi_index(dx - pad, stride, iw, ow);
          if (x_lo > x_hi) continue;
          const int ix0 = x_lo * stride + dx - pad;
          double acc = 0.0;
          for (int y = y_lo; y <= y_hi; ++y) {
            const int iy = y * stride + dy - pad;
            const T* irow = ip + static_cast<std::size_t>(iy) * iw + ix0;
            const T* gorow = gop + static_cast<std::size_t>(y) * ow;
            if (stride == 1) {
              for (int x = x_lo; x <= x_hi; ++x)
                acc += static_cast<double>(gorow[x]) * irow[x - x_lo];
            } else {
              for (int x = x_lo; x <= x_hi; ++x)
                acc += static_cast<double>(gorow[x]) *
                       irow[static_cast<std::size_t>(x - x_lo) * stride];
            }
          }
          kp[dy * k + dx] += static_cast<T>(acc);
        }
      }
    }
  }
}

template <typename T>
void psf_apply(Tensor<T>& out, const Tensor<T>& in, const T* w, int r) {
  check(in.shape.c == out.shape.c && in.shape.h == r * out.shape.h &&
            in.shape.w == r * out.shape.w,
        "psf_apply: shape mismatch");
  const int oh = out.shape.h, ow = out.shape.w, iw = in.shape.w;

#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int c = 0; c < in.shape.c; ++c) {
    const T* ip = in.plane_ptr(c);
    T* op = out.plane_ptr(c);
    std::fill(op, op + out.shape.plane(), T(0));
    for (int dy = 0; dy < r; ++dy) {
      for (int dx = 0; dx < r; ++dx) {
        const T wv = w[dy * r + dx];
        for (int y = 0; y < oh; ++y) {
          const T* irow = ip + static_cast<std::size_t>(y * r + dy) * iw + dx;
          T* orow = op + static_cast<std::size_t>(y) * ow;
          for (int x = 0; x < ow; ++x)
            orow[x] += wv * irow[static_cast<std::size_t>(x) * r];
        }
      }
    }
  }
}

template <typename T>
void psf_grad_input(Tensor<T>& gin, const Tensor<T>& gout, const T* w, int r) {
  check(gin.shape.c == gout.shape.c && gin.shape.h == r * gout.shape.h &&
            gin.shape.w == r * gout.shape.w,
        "psf_grad_input: shape mismatch");
  const int oh = gout.shape.h, ow = gout.shape.w, iw = gin.shape.w;

#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int c = 0; c < gin.shape.c; ++c) {
    T* gp = gin.plane_ptr(c);
    const T* gop = gout.plane_ptr(c);
    for (int dy = 0; dy < r; ++dy) {
      for (int dx = 0; dx < r; ++dx) {
        const T wv = w[dy * r + dx];
        for (int y = 0; y < oh; ++y) {
          T* grow = gp + static_cast<std::size_t>(y * r + dy) * iw + dx;
          const T* gorow = gop + static_cast<std::size_t>(y) * ow;
          for (int x = 0; x < ow; ++x)
            grow[static_cast<std::size_t>(x) * r] += wv * gorow[x];
        }
      }
    }
  }
}

template <typename T>
void psf_grad_kernel(T* gw, const Tensor<T>& gout, const Tensor<T>& in,
                     int r) {
  check(in.shape.c == gout.shape.c && in.shape.h == r * gout.shape.h &&
            in.shape.w == r * gout.shape.w,
        "psf_grad_kernel: shape mismatch");
  const int oh = gout.shape.h, ow = gout.shape.w, iw = in.shape.w;
  const int taps = r * r;

#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int t = 0; t < taps; ++t) {
    const int dy = t / r, dx = t % r;
    double acc = 0.0;
    for (int c = 0; c < in.shape.c; ++c) {
      const T* ip = in.plane_ptr(c);
      const T* gop = gout.plane_ptr(c);
      for (int y = 0; y < oh; ++y) {
        const T* irow = ip + static_cast<std::size_t>(y * r + dy) * iw + dx;
        const T* gorow = gop + static_cast<std::size_t>(y) * ow;
        for (int x = 0; x < ow; ++x)
          acc += static_cast<double>(gorow[x]) *
                 irow[static_cast<std::size_t>(x) * r];
      }
    }
    gw[t] += static_cast<T>(acc);
  }
}

template <typename T>
void avg_pool(Tensor<T>& out, const Tensor<T>& in, int r) {
  check(in.shape.c == out.shape.c && in.shape.h == r * out.shape.h &&
            in.shape.w == r * out.shape.w,
        "avg_pool: shape mismatch");
  const int oh = out.shape.h, ow = out.shape.w, iw = in.shape.w;
  const T inv = T(1) / static_cast<T>(r * r);

#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int c = 0; c < in.shape.c; ++c) {
    const T* ip = in.plane_ptr(c);
    T* op = out.plane_ptr(c);
    for (int y = 0; y < oh; ++y) {
      T* orow = op + static_cast<std::size_t>(y) * ow;
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < r; ++dy) {
          const T* irow = ip + static_cast<std::size_t>(y * r + dy) * iw +
                          static_cast<std::size_t>(x) * r;
          for (int dx = 0; dx < r; ++dx) acc += irow[dx];
        }
        orow[x] = static_cast<T>(acc) * inv;
      }
    }
  }
}

template <typename T>
void avg_pool_grad(Tensor<T>& gin, const Tensor<T>& gout, int r) {
  check(gin.shape.c == gout.shape.c && gin.shape.h == r * gout.shape.h &&
            gin.shape.w == r * gout.shape.w,
        "avg_pool_grad: shape mismatch");
  const int oh = gout.shape.h, ow = gout.shape.w, iw = gin.shape.w;
  const T inv = T(1) / static_cast<T>(r * r);

#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int c = 0; c < gin.shape.c; ++c) {
    T* gp = gin.plane_ptr(c);
    const T* gop = gout.plane_ptr(c);
    for (int y = 0; y < oh; ++y) {
      const T* gorow = gop + static_cast<std::size_t>(y) * ow;
      for (int dy = 0; dy < r; ++dy) {
        T* grow = gp + static_cast<std::size_t>(y * r + dy) * iw;
        for (int x = 0; x < ow; ++x) {
          const T g = gorow[x] * inv;
          T* cell = grow + static_cast<std::size_t>(x) * r;
          for (int dx = 0; dx < r; ++dx) cell[dx] += g;
        }
      }
    }
  }
}

namespace serial {

template <typename T>
void conv2d(Tensor<T>& out, const Tensor<T>& in, const Tensor<T>& ker,
            int out_c, int k, int stride, int pad) {
  check_conv_shapes(out, in, ker, out_c, k, stride, pad);
  const int in_c = in.shape.c;
  for (int o = 0; o < out_c; ++o)
    for (int y = 0; y < out.shape.h; ++y)
      for (int x = 0; x < out.shape.w; ++x) {
        double acc = 0.0;
        for (int i = 0; i < in_c; ++i)
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              const int iy = y * stride + dy - pad;
              const int ix = x * stride + dx - pad;
              if (iy < 0 || iy >= in.shape.h || ix < 0 || ix >= in.shape.w)
                continue;
              acc += static_cast<double>(ker.at(o * in_c + i, dy, dx)) *
                     in.at(i, iy, ix);
            }
        out.at(o, y, x) = static_cast<T>(acc);
      }
}

template <typename T>
void conv2d_grad_input(Tensor<T>& gin, const Tensor<T>& gout,
                       const Tensor<T>& ker, int out_c, int k, int stride,
                       int pad) {
  check_conv_shapes(gout, gin, ker, out_c, k, stride, pad);
  const int in_c = gin.shape.c;
  for (int o = 0; o < out_c; ++o)
    for (int y = 0; y < gout.shape.h; ++y)
      for (int x = 0; x < gout.shape.w; ++x)
        for (int i = 0; i < in_c; ++i)
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              const int iy = y * stride + dy - pad;
              const int ix = x * stride + dx - pad;
              if (iy < 0 || iy >= gin.shape.h || ix < 0 || ix >= gin.shape.w)
                continue;
              gin.at(i, iy, ix) +=
                  ker.at(o * in_c + i, dy, dx) * gout.at(o, y, x);
            }
}

template <typename T>
void conv2d_grad_kernel(Tensor<T>& gker, const Tensor<T>& gout,
                        const Tensor<T>& in, int out_c, int k, int stride,
                        int pad) {
  check_conv_shapes(gout, in, gker, out_c, k, stride, pad);
  const int in_c = in.shape.c;
  for (int o = 0; o < out_c; ++o)
    for (int i = 0; i < in_c; ++i)
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          double acc = 0.0;
          for (int y = 0; y < gout.shape.h; ++y)
            for (int x = 0; x < gout.shape.w; ++x) {
              const int iy = y * stride + dy - pad;
              const int ix = x * stride + dx - pad;
              if (iy < 0 || iy >= in.shape.h || ix < 0 || ix >= in.shape.w)
                continue;
              acc += static_cast<double>(gout.at(o, y, x)) * in.at(i, iy, ix);
            }
          gker.at(o * in_c + i, dy, dx) += static_cast<T>(acc);
        }
}

template <typename T>
void psf_apply(Tensor<T>& out, const Tensor<T>& in, const T* w, int r) {
  check(in.shape.c == out.shape.c && in.shape.h == r * out.shape.h &&
            in.shape.w == r * out.shape.w,
        "psf_apply: shape mismatch");
  for (int c = 0; c < in.shape.c; ++c)
    for (int y = 0; y < out.shape.h; ++y)
      for (int x = 0; x < out.shape.w; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < r; ++dy)
          for (int dx = 0; dx < r; ++dx)
            acc += static_cast<double>(w[dy * r + dx]) *
                   in.at(c, y * r + dy, x * r + dx);
        out.at(c, y, x) = static_cast<T>(acc);
      }
}

template <typename T>
void psf_grad_input(Tensor<T>& gin, const Tensor<T>& gout, const T* w, int r) {
  check(gin.shape.c == gout.shape.c && gin.shape.h == r * gout.shape.h &&
            gin.shape.w == r * gout.shape.w,
        "psf_grad_input: shape mismatch");
  for (int c = 0; c < gin.shape.c; ++c)
    for (int y = 0; y < gout.shape.h; ++y)
      for (int x = 0; x < gout.shape.w; ++x)
        for (int dy = 0; dy < r; ++dy)
          for (int dx = 0; dx < r; ++dx)
            gin.at(c, y * r + dy, x * r + dx) +=
                w[dy * r + dx] * gout.at(c, y, x);
}

template <typename T>
void psf_grad_kernel(T* gw, const Tensor<T>& gout, const Tensor<T>& in,
                     int r) {
  check(in.shape.c == gout.shape.c && in.shape.h == r * gout.shape.h &&
            in.shape.w == r * gout.shape.w,
        "psf_grad_kernel: shape mismatch");
  for (int dy = 0; dy < r; ++dy)
    for (int dx = 0; dx < r; ++dx) {
      double acc = 0.0;
      for (int c = 0; c < in.shape.c; ++c)
        for (int y = 0; y < gout.shape.h; ++y)
          for (int x = 0; x < gout.shape.w; ++x)
            acc += static_cast<double>(gout.at(c, y, x)) *
                   in.at(c, y * r + dy, x * r + dx);
      gw[dy * r + dx] += static_cast<T>(acc);
    }
}

template <typename T>
void avg_pool(Tensor<T>& out, const Tensor<T>& in, int r) {
  check(in.shape.c == out.shape.c && in.shape.h == r * out.shape.h &&
            in.shape.w == r * out.shape.w,
        "avg_pool: shape mismatch");
  for (int c = 0; c < in.shape.c; ++c)
    for (int y = 0; y < out.shape.h; ++y)
      for (int x = 0; x < out.shape.w; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < r; ++dy)
          for (int dx = 0; dx < r; ++dx) acc += in.at(c, y * r + dy, x * r + dx);
        out.at(c, y, x) = static_cast<T>(acc / (r * r));
      }
}

template <typename T>
void avg_pool_grad(Tensor<T>& gin, const Tensor<T>& gout, int r) {
  check(gin.shape.c == gout.shape.c && gin.shape.h == r * gout.shape.h &&
            gin.shape.w == r * gout.shape.w,
        "avg_pool_grad: shape mismatch");
  for (int c = 0; c < gout.shape.c; ++c)
    for (int y = 0; y < gout.shape.h; ++y)
      for (int x = 0; x < gout.shape.w; ++x)
        for (int dy = 0; dy < r; ++dy)
          for (int dx = 0; dx < r; ++dx)
            gin.at(c, y * r + dy, x * r + dx) +=
                gout.at(c, y, x) / static_cast<T>(r * r);
}

}  // namespace serial

#define HSFUSE_INSTANTIATE_KERNELS(T)                                         \
  template void conv2d<T>(Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                          int, int, int, int);                                \
  template void conv2d_grad_input<T>(Tensor<T>&, const Tensor<T>&,           \
                                     const Tensor<T>&, int, int, int, int);   \
  template void conv2d_grad_kernel<T>(Tensor<T>&, const Tensor<T>&,          \
                                      const Tensor<T>&, int, int, int, int);  \
  template void psf_apply<T>(Tensor<T>&, const Tensor<T>&, const T*, int);    \
  template void psf_grad_input<T>(Tensor<T>&, const Tensor<T>&, const T*,    \
                                  int);                                       \
  template void psf_grad_kernel<T>(T*, const Tensor<T>&, const Tensor<T>&,   \
                                   int);                                      \
  template void avg_pool<T>(Tensor<T>&, const Tensor<T>&, int);               \
  template void avg_pool_grad<T>(Tensor<T>&, const Tensor<T>&, int);          \
  template void serial::conv2d<T>(Tensor<T>&, const Tensor<T>&,              \
                                  const Tensor<T>&, int, int, int, int);      \
  template void serial::conv2d_grad_input<T>(Tensor<T>&, const Tensor<T>&,   \
                                             const Tensor<T>&, int, int, int, \
                                             int);                            \
  template void serial::conv2d_grad_kernel<T>(Tensor<T>&, const Tensor<T>&,  \
                                              const Tensor<T>&, int, int,     \
                                              int, int);                      \
  template void serial::psf_apply<T>(Tensor<T>&, const Tensor<T>&, const T*, \
                                     int);                                    \
  template void serial::psf_grad_input<T>(Tensor<T>&, const Tensor<T>&,      \
                                          const T*, int);                     \
  template void serial::psf_grad_kernel<T>(T*, const Tensor<T>&,             \
                                           const Tensor<T>&, int);            \
  template void serial::avg_pool<T>(Tensor<T>&, const Tensor<T>&, int);       \
  template void serial::avg_pool_grad<T>(Tensor<T>&, const Tensor<T>&, int);

HSFUSE_INSTANTIATE_KERNELS(float)
HSFUSE_INSTANTIATE_KERNELS(double)

}  // namespace hsfuse::kernels
