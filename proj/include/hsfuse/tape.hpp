#pragma once

#include <string>
#include <vector>

#include "hsfuse/tensor.hpp"

namespace hsfuse {

enum class Reduce { Channels, Spatial, All };

// Static computation graph with reverse-mode differentiation. Nodes are
// created once (creation order is the topological order), then forward() is
// re-run whenever leaf values change and backward() fills gradients.
// Everything is single batch, CHW. Gradient accumulation order is fixed by
// construction, so repeated runs are bit-identical.
template <typename T>
class Tape {
 public:
  using Id = int;

  enum class Op {
    Leaf,
    Conv2d,
    AddBias,
    LeakyRelu,
    Clamp01,
    SoftmaxC,
    SoftmaxS,
    ConcatC,
    Add,
    Mul,
    Scale,
    ReduceSum,
    AvgPool,
    GlobalFilter,
    SrfApply,
    PsfApply,
    L1Loss,
    KlDiv,
  };

  struct Node {
    Op op = Op::Leaf;
    Id a = -1, b = -1;
    bool requires_grad = false;
    Tensor<T> val;
    Tensor<T> grad;
    // op-specific parameters
    int out_c = 0, k = 0, stride = 1, pad = 0, ratio = 1;
    T scalar = T(0);
    Reduce reduce = Reduce::All;
    Tensor<T> mask;     // optional (1,h,w) 0/1 selection for loss ops
    double mask_count = 0.0;
    // scratch for ops with internally normalized weights
    Tensor<T> norm_w;
    Tensor<T> norm_gw;
    std::vector<double> norms;
  };

  // Leaf whose value is assigned externally (parameters, inputs, constants).
  Id leaf(Shape s, bool requires_grad);
  Id leaf(const Tensor<T>& init, bool requires_grad);

  // ker layout (out_c*in_c, k, k); same-padding when pad=(k-1)/2
  Id conv2d(Id x, Id ker, int out_c, int k, int stride, int pad);
  Id add_bias(Id x, Id bias);  // bias (C,1,1)
  Id leaky_relu(Id x, T slope);
  // min(max(x,0),1); gradient is zero outside the open interval
  Id clamp01(Id x);
  Id softmax_channels(Id x);  // per pixel across channels
  Id softmax_spatial(Id x);   // per channel across the plane
  Id concat_channels(Id a, Id b);
  Id add(Id a, Id b);
  // elementwise product; b may broadcast as (C,1,1) or (1,h,w)
  Id mul(Id a, Id b);
  Id scale(Id x, T s);
  Id reduce_sum(Id x, Reduce over);
  Id avg_pool(Id x, int r);
  // per-channel inner product with a learned full-plane filter u (C,h,w),
  // result (C,1,1)
  Id global_filter(Id x, Id u);
  // spectral response rows w_raw (out_bands, 1, L) are normalized to unit sum
  // before mixing channels; an (almost) all-zero row is an error
  Id srf_apply(Id x, Id w_raw);
  // shared blur kernel w_raw (1, r, r), normalized to unit sum, applied
  // depthwise with stride r
  Id psf_apply(Id x, Id w_raw, int r);
  // mean absolute difference; with a mask (1,h,w) only selected pixels count
  Id l1_loss(Id a, Id b, const Tensor<T>* mask = nullptr);
  // mean over units of KL(rho || clamp(x, 1e-6, 1-1e-6))
  Id kl_sparsity(Id x, T rho, const Tensor<T>* mask = nullptr);

  void forward();
  void backward(Id root);

  const Tensor<T>& val(Id id) const { return nodes_[id].val; }
  Tensor<T>& val(Id id) { return nodes_[id].val; }
  const Tensor<T>& grad(Id id) const { return nodes_[id].grad; }
  T scalar_value(Id id) const { return nodes_[id].val.data[0]; }
  bool requires_grad(Id id) const { return nodes_[id].requires_grad; }
  Shape shape(Id id) const { return nodes_[id].val.shape; }
  std::size_t size() const { return nodes_.size(); }

  // Index of the first node holding a non-finite value, or -1. Used for the
  // abort diagnostics when a loss goes NaN.
  Id first_nonfinite() const;
  std::string describe(Id id) const;

 private:
  Id push(Node n);
  static const char* op_name(Op op);
  void forward_node(Node& n);
  void backward_node(Node& n);

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace hsfuse
