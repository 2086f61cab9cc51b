#pragma once

#include "hsfuse/tensor.hpp"

namespace hsfuse::kernels {

// Number of worker threads the OpenMP kernels may use. Reads HSFUSE_THREADS
// once (clamped to [1, omp_get_max_threads()]); defaults to the OpenMP limit.
int max_threads();

// 2-D cross correlation, single batch. `ker` has shape (out_c*in_c, k, k)
// where plane o*in_c+i connects input channel i to output channel o.
// `out` must be pre-shaped to (out_c, oh, ow) with
// oh = (in.h + 2*pad - k) / stride + 1 (likewise ow) and is overwritten.
template <typename T>
void conv2d(Tensor<T>& out, const Tensor<T>& in, const Tensor<T>& ker,
            int out_c, int k, int stride, int pad);

// Accumulates d(loss)/d(in) into `gin` (pre-shaped like `in`).
template <typename T>
void conv2d_grad_input(Tensor<T>& gin, const Tensor<T>& gout,
                       const Tensor<T>& ker, int out_c, int k, int stride,
                       int pad);

// Accumulates d(loss)/d(ker) into `gker`.
template <typename T>
void conv2d_grad_kernel(Tensor<T>& gker, const Tensor<T>& gout,
                        const Tensor<T>& in, int out_c, int k, int stride,
                        int pad);

// Depthwise blur + decimate: one shared r x r kernel `w`, stride r, no
// padding. out(c,y,x) = sum_{dy,dx} w[dy*r+dx] * in(c, y*r+dy, x*r+dx).
// Requires in.h == r*out.h and in.w == r*out.w.
template <typename T>
void psf_apply(Tensor<T>& out, const Tensor<T>& in, const T* w, int r);

template <typename T>
void psf_grad_input(Tensor<T>& gin, const Tensor<T>& gout, const T* w, int r);

template <typename T>
void psf_grad_kernel(T* gw, const Tensor<T>& gout, const Tensor<T>& in, int r);

// Non-overlapping r x r mean pooling; in.h == r*out.h, in.w == r*out.w.
template <typename T>
void avg_pool(Tensor<T>& out, const Tensor<T>& in, int r);

template <typename T>
void avg_pool_grad(Tensor<T>& gin, const Tensor<T>& gout, int r);

// Straightforward single-thread versions of the kernels above. These are the
// reference implementations the tests compare the OpenMP kernels against and
// the baseline for the benchmark tool. Keep them naive on purpose.
namespace serial {

template <typename T>
void conv2d(Tensor<T>& out, const Tensor<T>& in, const Tensor<T>& ker,
            int out_c, int k, int stride, int pad);

template <typename T>
void conv2d_grad_input(Tensor<T>& gin, const Tensor<T>& gout,
                       const Tensor<T>& ker, int out_c, int k, int stride,
                       int pad);

template <typename T>
void conv2d_grad_kernel(Tensor<T>& gker, const Tensor<T>& gout,
                        const Tensor<T>& in, int out_c, int k, int stride,
                        int pad);

template <typename T>
void psf_apply(Tensor<T>& out, const Tensor<T>& in, const T* w, int r);

template <typename T>
void psf_grad_input(Tensor<T>& gin, const Tensor<T>& gout, const T* w, int r);

template <typename T>
void psf_grad_kernel(T* gw, const Tensor<T>& gout, const Tensor<T>& in, int r);

template <typename T>
void avg_pool(Tensor<T>& out, const Tensor<T>& in, int r);

template <typename T>
void avg_pool_grad(Tensor<T>& gin, const Tensor<T>& gout, int r);

}  // namespace serial

}  // namespace hsfuse::kernels
