// Micro-benchmark for the hot compute kernels: OpenMP loop nests vs the
// naive serial references used by the tests. Thread count follows
// HSFUSE_THREADS (and OMP_NUM_THREADS).

#include <chrono>
#include <cstdio>
#include <functional>

#include "hsfuse/kernels.hpp"
#include "hsfuse/rng.hpp"

using hsfuse::Rng;
using hsfuse::Tensor;
namespace K = hsfuse::kernels;

namespace {

void fill_random(Tensor<float>& t, Rng& rng) {
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double flops, double ms_par, double ms_ser) {
  std::printf("%-28s  par %8.3f ms (%6.2f GFLOP/s)   serial %8.3f ms (%6.2f GFLOP/s)   speedup %.2fx\n",
              name, ms_par, flops / ms_par / 1e6, ms_ser,
              flops / ms_ser / 1e6, ms_ser / ms_par);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", K::max_threads());
  Rng rng(7);

  // shapes sized like the high-res branch of a typical fusion run
  const int C = 32, H = 80, W = 80, k = 5, pad = 2;
  Tensor<float> in(C, H, W), out(C, H, W);
  Tensor<float> ker = hsfuse::make_conv_kernel<float>(C, C, k);
  Tensor<float> gin(C, H, W), gker = hsfuse::make_conv_kernel<float>(C, C, k);
  fill_random(in, rng);
  fill_random(ker, rng);
  fill_random(out, rng);

  const double conv_flops = 2.0 * C * C * k * k * H * W;
  {
    const int reps = 10;
    double par = time_ms([&] { K::conv2d(out, in, ker, C, k, 1, pad); }, reps);
    double ser = time_ms([&] { K::serial::conv2d(out, in, ker, C, k, 1, pad); }, reps);
    report("conv2d 32x80x80 k5", conv_flops, par, ser);

    par = time_ms([&] {
      std::fill(gin.data.begin(), gin.data.end(), 0.f);
      K::conv2d_grad_input(gin, out, ker, C, k, 1, pad);
    }, reps);
    ser = time_ms([&] {
      std::fill(gin.data.begin(), gin.data.end(), 0.f);
      K::serial::conv2d_grad_input(gin, out, ker, C, k, 1, pad);
    }, reps);
    report("conv2d_grad_input", conv_flops, par, ser);

    par = time_ms([&] {
      std::fill(gker.data.begin(), gker.data.end(), 0.f);
      K::conv2d_grad_kernel(gker, out, in, C, k, 1, pad);
    }, reps);
    ser = time_ms([&] {
      std::fill(gker.data.begin(), gker.data.end(), 0.f);
      K::serial::conv2d_grad_kernel(gker, out, in, C, k, 1, pad);
    }, reps);
    report("conv2d_grad_kernel", conv_flops, par, ser);
  }

  {
    const int L = 31, r = 8;
    Tensor<float> hi(L, H, W), lo(L, H / r, W / r);
    Tensor<float> w(1, r, r);
    fill_random(hi, rng);
    fill_random(w, rng);
    const double flops = 2.0 * L * H * W;
    const int reps = 50;
    double par = time_ms([&] { K::psf_apply(lo, hi, w.data.data(), r); }, reps);
    double ser = time_ms([&] { K::serial::psf_apply(lo, hi, w.data.data(), r); }, reps);
    report("psf_apply 31x80x80 r8", flops, par, ser);
  }

  return 0;
}
