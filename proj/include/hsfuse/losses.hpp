#pragma once

#include "hsfuse/network.hpp"
#include "hsfuse/tape.hpp"
#include "hsfuse/tensor.hpp"

namespace hsfuse {

// Trade-off weights of the composite training objective. All L1 terms are
// means over elements rather than sums, so these stay resolution independent.
struct LossWeights {
  double alpha = 0.1;     // abundance sum-to-one
  double beta = 1e-4;     // sparsity
  double gamma = 1.0;     // degradation consistency
  double epsilon = 0.01;  // sparsity target
  void validate() const;
};

// Value-level loss terms: plain reductions over tensors, used for logging
// and as an independent route the graph-built losses are checked against.
template <typename T>
double l1_mean(const Tensor<T>& a, const Tensor<T>& b);

// L1(f(X), X) + L1(g(Y), Y)
template <typename T>
double loss_reconstruction(const Tensor<T>& x, const Tensor<T>& y,
                           const Tensor<T>& fx, const Tensor<T>& gy);

// per-pixel deviation of abundance channel sums from one, both branches
template <typename T>
double loss_asc(const Tensor<T>& s_hs, const Tensor<T>& s_ms);

// KL(eps || a) summed over both branches, mean-reduced per branch; the
// abundance argument is clamped into [1e-6, 1-1e-6] before the logs
template <typename T>
double loss_sparsity(const Tensor<T>& s_hs, const Tensor<T>& s_ms,
                     double epsilon);

// L1(U_ms, U_hs) + L1(X_hat, X) + L1(Y_hat, Y)
template <typename T>
double loss_consistency(const Tensor<T>& x, const Tensor<T>& y,
                        const Tensor<T>& x_hat, const Tensor<T>& y_hat,
                        const Tensor<T>& u_hs, const Tensor<T>& u_ms);

struct LossParts {
  double recon = 0.0;
  double asc = 0.0;
  double sparsity = 0.0;
  double consistency = 0.0;
};

double total_loss(const LossParts& parts, const LossWeights& w);

// Graph handles of one loss head. consistency is -1 when the degradation
// layers are disabled; its term is then absent from the total.
template <typename T>
struct LossNodes {
  typename Tape<T>::Id recon = -1;
  typename Tape<T>::Id asc = -1;
  typename Tape<T>::Id sparsity = -1;
  typename Tape<T>::Id consistency = -1;
  typename Tape<T>::Id total = -1;

  LossParts parts(const Tape<T>& t) const;
  double value(const Tape<T>& t) const { return t.scalar_value(total); }
};

// Builds the weighted objective on the network's tape. Optional 0/1 masks
// (one per resolution, shape (1,h,w) resp. (1,H,W)) restrict every pixelwise
// term to the selected pixels; training and validation heads are two calls
// with complementary masks.
template <typename T>
LossNodes<T> attach_losses(Network<T>& net, const LossWeights& w,
                           const Tensor<T>* mask_hs = nullptr,
                           const Tensor<T>* mask_ms = nullptr);

}  // namespace hsfuse
