#include "hsfuse/tape.hpp"

#include <algorithm>
#include <cmath>

#include "hsfuse/kernels.hpp"

namespace hsfuse {

namespace {

template <typename T>
inline T sign_of(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

constexpr double kKlFloor = 1e-6;

}  // namespace

template <typename T>
typename Tape<T>::Id Tape<T>::push(Node n) {
  if (n.requires_grad) n.grad = Tensor<T>(n.val.shape);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size()) - 1;
}

template <typename T>
typename Tape<T>::Id Tape<T>::leaf(Shape s, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.requires_grad = requires_grad;
  n.val = Tensor<T>(s);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::leaf(const Tensor<T>& init, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.requires_grad = requires_grad;
  n.val = init;
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::conv2d(Id x, Id ker, int out_c, int k,
                                     int stride, int pad) {
  const Shape xs = nodes_[x].val.shape;
  const Shape ks = nodes_[ker].val.shape;
  check(ks.c == out_c * xs.c && ks.h == k && ks.w == k,
        "conv2d node: kernel shape " + ks.str() + " does not match");
  const int oh = (xs.h + 2 * pad - k) / stride + 1;
  const int ow = (xs.w + 2 * pad - k) / stride + 1;
  check(oh >= 1 && ow >= 1, "conv2d node: empty output");
  Node n;
  n.op = Op::Conv2d;
  n.a = x;
  n.b = ker;
  n.out_c = out_c;
  n.k = k;
  n.stride = stride;
  n.pad = pad;
  n.requires_grad = nodes_[x].requires_grad || nodes_[ker].requires_grad;
  n.val = Tensor<T>(Shape{out_c, oh, ow});
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::add_bias(Id x, Id bias) {
  const Shape xs = nodes_[x].val.shape;
  const Shape bs = nodes_[bias].val.shape;
  check(bs.c == xs.c && bs.h == 1 && bs.w == 1,
        "add_bias: bias must be (C,1,1), got " + bs.str());
  Node n;
  n.op = Op::AddBias;
  n.a = x;
  n.b = bias;
  n.requires_grad = nodes_[x].requires_grad || nodes_[bias].requires_grad;
  n.val = Tensor<T>(xs);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::leaky_relu(Id x, T slope) {
  Node n;
  n.op = Op::LeakyRelu;
  n.a = x;
  n.scalar = slope;
  n.requires_grad = nodes_[x].requires_grad;
  n.val = Tensor<T>(nodes_[x].val.shape);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::clamp01(Id x) {
  Node n;
  n.op = Op::Clamp01;
  n.a = x;
  n.requires_grad = nodes_[x].requires_grad;
  n.val = Tensor<T>(nodes_[x].val.shape);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::softmax_channels(Id x) {
  Node n;
  n.op = Op::SoftmaxC;
  n.a = x;
  n.requires_grad = nodes_[x].requires_grad;
  n.val = Tensor<T>(nodes_[x].val.shape);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::softmax_spatial(Id x) {
  Node n;
  n.op = Op::SoftmaxS;
  n.a = x;
  n.requires_grad = nodes_[x].requires_grad;
  n.val = Tensor<T>(nodes_[x].val.shape);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::concat_channels(Id a, Id b) {
  const Shape as = nodes_[a].val.shape;
  const Shape bs = nodes_[b].val.shape;
  check(as.h == bs.h && as.w == bs.w,
        "concat_channels: plane mismatch " + as.str() + " vs " + bs.str());
  Node n;
  n.op = Op::ConcatC;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.val = Tensor<T>(Shape{as.c + bs.c, as.h, as.w});
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::add(Id a, Id b) {
  check(nodes_[a].val.shape == nodes_[b].val.shape, "add: shape mismatch");
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.val = Tensor<T>(nodes_[a].val.shape);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::mul(Id a, Id b) {
  const Shape as = nodes_[a].val.shape;
  const Shape bs = nodes_[b].val.shape;
  const bool same = as == bs;
  const bool chan = bs.c == as.c && bs.h == 1 && bs.w == 1;
  const bool plane = bs.c == 1 && bs.h == as.h && bs.w == as.w;
  check(same || chan || plane,
        "mul: unsupported broadcast " + as.str() + " * " + bs.str());
  Node n;
  n.op = Op::Mul;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.val = Tensor<T>(as);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::scale(Id x, T s) {
  Node n;
  n.op = Op::Scale;
  n.a = x;
  n.scalar = s;
  n.requires_grad = nodes_[x].requires_grad;
  n.val = Tensor<T>(nodes_[x].val.shape);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::reduce_sum(Id x, Reduce over) {
  const Shape xs = nodes_[x].val.shape;
  Shape os;
  switch (over) {
    case Reduce::Channels: os = {1, xs.h, xs.w}; break;
    case Reduce::Spatial: os = {xs.c, 1, 1}; break;
    case Reduce::All: os = {1, 1, 1}; break;
  }
  Node n;
  n.op = Op::ReduceSum;
  n.a = x;
  n.reduce = over;
  n.requires_grad = nodes_[x].requires_grad;
  n.val = Tensor<T>(os);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::avg_pool(Id x, int r) {
  const Shape xs = nodes_[x].val.shape;
  check(r >= 1 && xs.h % r == 0 && xs.w % r == 0,
        "avg_pool: extent not divisible by " + std::to_string(r));
  Node n;
  n.op = Op::AvgPool;
  n.a = x;
  n.ratio = r;
  n.requires_grad = nodes_[x].requires_grad;
  n.val = Tensor<T>(Shape{xs.c, xs.h / r, xs.w / r});
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::global_filter(Id x, Id u) {
  const Shape xs = nodes_[x].val.shape;
  check(nodes_[u].val.shape == xs, "global_filter: filter shape mismatch");
  Node n;
  n.op = Op::GlobalFilter;
  n.a = x;
  n.b = u;
  n.requires_grad = nodes_[x].requires_grad || nodes_[u].requires_grad;
  n.val = Tensor<T>(Shape{xs.c, 1, 1});
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::srf_apply(Id x, Id w_raw) {
  const Shape xs = nodes_[x].val.shape;
  const Shape ws = nodes_[w_raw].val.shape;
  check(ws.h == 1 && ws.w == xs.c,
        "srf_apply: weights must be (out_bands,1," + std::to_string(xs.c) +
            "), got " + ws.str());
  Node n;
  n.op = Op::SrfApply;
  n.a = x;
  n.b = w_raw;
  n.out_c = ws.c;
  n.requires_grad = nodes_[x].requires_grad || nodes_[w_raw].requires_grad;
  n.val = Tensor<T>(Shape{ws.c, xs.h, xs.w});
  n.norm_w = Tensor<T>(Shape{ws.c * xs.c, 1, 1});
  n.norm_gw = Tensor<T>(Shape{ws.c * xs.c, 1, 1});
  n.norms.resize(ws.c);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::psf_apply(Id x, Id w_raw, int r) {
  const Shape xs = nodes_[x].val.shape;
  const Shape ws = nodes_[w_raw].val.shape;
  check(ws.c == 1 && ws.h == r && ws.w == r,
        "psf_apply: kernel must be (1,r,r), got " + ws.str());
  check(xs.h % r == 0 && xs.w % r == 0,
        "psf_apply: extent not divisible by " + std::to_string(r));
  Node n;
  n.op = Op::PsfApply;
  n.a = x;
  n.b = w_raw;
  n.ratio = r;
  n.requires_grad = nodes_[x].requires_grad || nodes_[w_raw].requires_grad;
  n.val = Tensor<T>(Shape{xs.c, xs.h / r, xs.w / r});
  n.norm_w = Tensor<T>(Shape{1, r, r});
  n.norm_gw = Tensor<T>(Shape{1, r, r});
  n.norms.resize(1);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::l1_loss(Id a, Id b, const Tensor<T>* mask) {
  const Shape as = nodes_[a].val.shape;
  check(as == nodes_[b].val.shape, "l1_loss: shape mismatch");
  Node n;
  n.op = Op::L1Loss;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.val = Tensor<T>(Shape{1, 1, 1});
  if (mask) {
    check(mask->shape.c == 1 && mask->shape.h == as.h && mask->shape.w == as.w,
          "l1_loss: mask must be (1,h,w)");
    n.mask = *mask;
    double sel = 0.0;
    for (T m : n.mask.data) sel += static_cast<double>(m);
    n.mask_count = sel * as.c;
    check(n.mask_count > 0.0, "l1_loss: empty mask");
  } else {
    n.mask_count = static_cast<double>(as.numel());
  }
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Id Tape<T>::kl_sparsity(Id x, T rho, const Tensor<T>* mask) {
  const Shape xs = nodes_[x].val.shape;
  Node n;
  n.op = Op::KlDiv;
  n.a = x;
  n.scalar = rho;
  n.requires_grad = nodes_[x].requires_grad;
  n.val = Tensor<T>(Shape{1, 1, 1});
  if (mask) {
    check(mask->shape.c == 1 && mask->shape.h == xs.h && mask->shape.w == xs.w,
          "kl_sparsity: mask must be (1,h,w)");
    n.mask = *mask;
    double sel = 0.0;
    for (T m : n.mask.data) sel += static_cast<double>(m);
    n.mask_count = sel * xs.c;
    check(n.mask_count > 0.0, "kl_sparsity: empty mask");
  } else {
    n.mask_count = static_cast<double>(xs.numel());
  }
  return push(std::move(n));
}

template <typename T>
void Tape<T>::forward() {
  for (Node& n : nodes_)
    if (n.op != Op::Leaf) forward_node(n);
}

template <typename T>
void Tape<T>::forward_node(Node& n) {
  const Tensor<T>* A = n.a >= 0 ? &nodes_[n.a].val : nullptr;
  const Tensor<T>* B = n.b >= 0 ? &nodes_[n.b].val : nullptr;
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Conv2d:
      kernels::conv2d(n.val, *A, *B, n.out_c, n.k, n.stride, n.pad);
      break;
    case Op::AddBias: {
      for (int c = 0; c < A->shape.c; ++c) {
        const T bv = B->data[c];
        const T* ip = A->plane_ptr(c);
        T* op = n.val.plane_ptr(c);
        for (std::size_t i = 0; i < A->shape.plane(); ++i) op[i] = ip[i] + bv;
      }
      break;
    }
    case Op::LeakyRelu: {
      const T s = n.scalar;
      for (std::size_t i = 0; i < A->data.size(); ++i) {
        const T v = A->data[i];
        n.val.data[i] = v > T(0) ? v : s * v;
      }
      break;
    }
    case Op::Clamp01: {
      for (std::size_t i = 0; i < A->data.size(); ++i)
        n.val.data[i] = std::min(T(1), std::max(T(0), A->data[i]));
      break;
    }
    case Op::SoftmaxC: {
      const int C = A->shape.c;
      const std::size_t plane = A->shape.plane();
      for (std::size_t p = 0; p < plane; ++p) {
        T m = A->data[p];
        for (int c = 1; c < C; ++c)
          m = std::max(m, A->data[c * plane + p]);
        double s = 0.0;
        for (int c = 0; c < C; ++c) {
          const T e = std::exp(A->data[c * plane + p] - m);
          n.val.data[c * plane + p] = e;
          s += static_cast<double>(e);
        }
        const T inv = static_cast<T>(1.0 / s);
        for (int c = 0; c < C; ++c) n.val.data[c * plane + p] *= inv;
      }
      break;
    }
    case Op::SoftmaxS: {
      const std::size_t plane = A->shape.plane();
      for (int c = 0; c < A->shape.c; ++c) {
        const T* ip = A->plane_ptr(c);
        T* op = n.val.plane_ptr(c);
        T m = ip[0];
        for (std::size_t i = 1; i < plane; ++i) m = std::max(m, ip[i]);
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
          const T e = std::exp(ip[i] - m);
          op[i] = e;
          s += static_cast<double>(e);
        }
        const T inv = static_cast<T>(1.0 / s);
        for (std::size_t i = 0; i < plane; ++i) op[i] *= inv;
      }
      break;
    }
    case Op::ConcatC: {
      std::copy(A->data.begin(), A->data.end(), n.val.data.begin());
      std::copy(B->data.begin(), B->data.end(),
                n.val.data.begin() + A->data.size());
      break;
    }
    case Op::Add: {
      for (std::size_t i = 0; i < A->data.size(); ++i)
        n.val.data[i] = A->data[i] + B->data[i];
      break;
    }
    case Op::Mul: {
      const Shape as = A->shape, bs = B->shape;
      if (as == bs) {
        for (std::size_t i = 0; i < A->data.size(); ++i)
          n.val.data[i] = A->data[i] * B->data[i];
      } else if (bs.h == 1 && bs.w == 1) {
        for (int c = 0; c < as.c; ++c) {
          const T bv = B->data[c];
          const T* ip = A->plane_ptr(c);
          T* op = n.val.plane_ptr(c);
          for (std::size_t i = 0; i < as.plane(); ++i) op[i] = ip[i] * bv;
        }
      } else {
        const T* bp = B->data.data();
        for (int c = 0; c < as.c; ++c) {
          const T* ip = A->plane_ptr(c);
          T* op = n.val.plane_ptr(c);
          for (std::size_t i = 0; i < as.plane(); ++i) op[i] = ip[i] * bp[i];
        }
      }
      break;
    }
    case Op::Scale: {
      const T s = n.scalar;
      for (std::size_t i = 0; i < A->data.size(); ++i)
        n.val.data[i] = s * A->data[i];
      break;
    }
    case Op::ReduceSum: {
      const std::size_t plane = A->shape.plane();
      if (n.reduce == Reduce::Channels) {
        for (std::size_t p = 0; p < plane; ++p) {
          double s = 0.0;
          for (int c = 0; c < A->shape.c; ++c)
            s += static_cast<double>(A->data[c * plane + p]);
          n.val.data[p] = static_cast<T>(s);
        }
      } else if (n.reduce == Reduce::Spatial) {
        for (int c = 0; c < A->shape.c; ++c) {
          const T* ip = A->plane_ptr(c);
          double s = 0.0;
          for (std::size_t i = 0; i < plane; ++i)
            s += static_cast<double>(ip[i]);
          n.val.data[c] = static_cast<T>(s);
        }
      } else {
        double s = 0.0;
        for (const T v : A->data) s += static_cast<double>(v);
        n.val.data[0] = static_cast<T>(s);
      }
      break;
    }
    case Op::AvgPool:
      kernels::avg_pool(n.val, *A, n.ratio);
      break;
    case Op::GlobalFilter: {
      const std::size_t plane = A->shape.plane();
      for (int c = 0; c < A->shape.c; ++c) {
        const T* xp = A->plane_ptr(c);
        const T* up = B->plane_ptr(c);
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i)
          s += static_cast<double>(xp[i]) * up[i];
        n.val.data[c] = static_cast<T>(s);
      }
      break;
    }
    case Op::SrfApply: {
      const int J = B->shape.c, L = A->shape.c;
      for (int j = 0; j < J; ++j) {
        double s = 0.0;
        for (int mu = 0; mu < L; ++mu)
          s += static_cast<double>(B->data[j * L + mu]);
        check(s > 1e-12, "srf_apply: response row " + std::to_string(j) +
                             " sums to (near) zero");
        n.norms[j] = s;
        const T inv = static_cast<T>(1.0 / s);
        for (int mu = 0; mu < L; ++mu)
          n.norm_w.data[j * L + mu] = B->data[j * L + mu] * inv;
      }
      kernels::conv2d(n.val, *A, n.norm_w, J, 1, 1, 0);
      break;
    }
    case Op::PsfApply: {
      double s = 0.0;
      for (const T v : B->data) s += static_cast<double>(v);
      check(s > 1e-12, "psf_apply: kernel sums to (near) zero");
      n.norms[0] = s;
      const T inv = static_cast<T>(1.0 / s);
      for (std::size_t i = 0; i < B->data.size(); ++i)
        n.norm_w.data[i] = B->data[i] * inv;
      kernels::psf_apply(n.val, *A, n.norm_w.data.data(), n.ratio);
      break;
    }
    case Op::L1Loss: {
      double acc = 0.0;
      if (n.mask.data.empty()) {
        for (std::size_t i = 0; i < A->data.size(); ++i)
          acc += std::abs(static_cast<double>(A->data[i]) - B->data[i]);
      } else {
        const std::size_t plane = A->shape.plane();
        for (int c = 0; c < A->shape.c; ++c) {
          const T* ap = A->plane_ptr(c);
          const T* bp = B->plane_ptr(c);
          for (std::size_t i = 0; i < plane; ++i)
            if (n.mask.data[i] != T(0))
              acc += std::abs(static_cast<double>(ap[i]) - bp[i]);
        }
      }
      n.val.data[0] = static_cast<T>(acc / n.mask_count);
      break;
    }
    case Op::KlDiv: {
      const double rho = static_cast<double>(n.scalar);
      double acc = 0.0;
      auto term = [rho](double a) {
        const double ah = std::min(1.0 - kKlFloor, std::max(kKlFloor, a));
        return rho * std::log(rho / ah) +
               (1.0 - rho) * std::log((1.0 - rho) / (1.0 - ah));
      };
      if (n.mask.data.empty()) {
        for (const T v : A->data) acc += term(static_cast<double>(v));
      } else {
        const std::size_t plane = A->shape.plane();
        for (int c = 0; c < A->shape.c; ++c) {
          const T* ap = A->plane_ptr(c);
          for (std::size_t i = 0; i < plane; ++i)
            if (n.mask.data[i] != T(0)) acc += term(static_cast<double>(ap[i]));
        }
      }
      n.val.data[0] = static_cast<T>(acc / n.mask_count);
      break;
    }
  }
}

template <typename T>
void Tape<T>::backward(Id root) {
  check(root >= 0 && root < static_cast<Id>(nodes_.size()),
        "backward: bad root");
  check(nodes_[root].val.shape == Shape{1, 1, 1},
        "backward: root must be scalar, got " + nodes_[root].val.shape.str());
  check(nodes_[root].requires_grad, "backward: root does not require grad");
  for (Node& n : nodes_)
    if (n.requires_grad)
      std::fill(n.grad.data.begin(), n.grad.data.end(), T(0));
  nodes_[root].grad.data[0] = T(1);
  for (Id id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.op == Op::Leaf || !n.requires_grad) continue;
    backward_node(n);
  }
}

template <typename T>
void Tape<T>::backward_node(Node& n) {
  Node* na = n.a >= 0 ? &nodes_[n.a] : nullptr;
  Node* nb = n.b >= 0 ? &nodes_[n.b] : nullptr;
  const bool ga = na && na->requires_grad;
  const bool gb = nb && nb->requires_grad;
  const Tensor<T>& g = n.grad;

  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Conv2d:
      if (ga)
        kernels::conv2d_grad_input(na->grad, g, nb->val, n.out_c, n.k,
                                   n.stride, n.pad);
      if (gb)
        kernels::conv2d_grad_kernel(nb->grad, g, na->val, n.out_c, n.k,
                                    n.stride, n.pad);
      break;
    case Op::AddBias: {
      const std::size_t plane = n.val.shape.plane();
      if (ga)
        for (std::size_t i = 0; i < g.data.size(); ++i)
          na->grad.data[i] += g.data[i];
      if (gb)
        for (int c = 0; c < n.val.shape.c; ++c) {
          const T* gp = g.plane_ptr(c);
          double s = 0.0;
          for (std::size_t i = 0; i < plane; ++i)
            s += static_cast<double>(gp[i]);
          nb->grad.data[c] += static_cast<T>(s);
        }
      break;
    }
    case Op::LeakyRelu: {
      if (!ga) break;
      const T s = n.scalar;
      // at exactly zero the slope-side subgradient is used
      for (std::size_t i = 0; i < g.data.size(); ++i)
        na->grad.data[i] += g.data[i] * (na->val.data[i] > T(0) ? T(1) : s);
      break;
    }
    case Op::Clamp01: {
      if (!ga) break;
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        const T v = na->val.data[i];
        if (v > T(0) && v < T(1)) na->grad.data[i] += g.data[i];
      }
      break;
    }
    case Op::SoftmaxC: {
      if (!ga) break;
      const int C = n.val.shape.c;
      const std::size_t plane = n.val.shape.plane();
      for (std::size_t p = 0; p < plane; ++p) {
        double dot = 0.0;
        for (int c = 0; c < C; ++c)
          dot += static_cast<double>(g.data[c * plane + p]) *
                 n.val.data[c * plane + p];
        for (int c = 0; c < C; ++c) {
          const std::size_t ix = c * plane + p;
          na->grad.data[ix] +=
              n.val.data[ix] * (g.data[ix] - static_cast<T>(dot));
        }
      }
      break;
    }
    case Op::SoftmaxS: {
      if (!ga) break;
      const std::size_t plane = n.val.shape.plane();
      for (int c = 0; c < n.val.shape.c; ++c) {
        const T* yp = n.val.plane_ptr(c);
        const T* gp = g.plane_ptr(c);
        T* op = na->grad.plane_ptr(c);
        double dot = 0.0;
        for (std::size_t i = 0; i < plane; ++i)
          dot += static_cast<double>(gp[i]) * yp[i];
        for (std::size_t i = 0; i < plane; ++i)
          op[i] += yp[i] * (gp[i] - static_cast<T>(dot));
      }
      break;
    }
    case Op::ConcatC: {
      const std::size_t an = na->val.data.size();
      if (ga)
        for (std::size_t i = 0; i < an; ++i) na->grad.data[i] += g.data[i];
      if (gb)
        for (std::size_t i = 0; i < nb->val.data.size(); ++i)
          nb->grad.data[i] += g.data[an + i];
      break;
    }
    case Op::Add: {
      if (ga)
        for (std::size_t i = 0; i < g.data.size(); ++i)
          na->grad.data[i] += g.data[i];
      if (gb)
        for (std::size_t i = 0; i < g.data.size(); ++i)
          nb->grad.data[i] += g.data[i];
      break;
    }
    case Op::Mul: {
      const Shape as = na->val.shape, bs = nb->val.shape;
      const std::size_t plane = as.plane();
      if (as == bs) {
        if (ga)
          for (std::size_t i = 0; i < g.data.size(); ++i)
            na->grad.data[i] += g.data[i] * nb->val.data[i];
        if (gb)
          for (std::size_t i = 0; i < g.data.size(); ++i)
            nb->grad.data[i] += g.data[i] * na->val.data[i];
      } else if (bs.h == 1 && bs.w == 1) {
        for (int c = 0; c < as.c; ++c) {
          const T* gp = g.plane_ptr(c);
          const T* ap = na->val.plane_ptr(c);
          if (ga) {
            const T bv = nb->val.data[c];
            T* op = na->grad.plane_ptr(c);
            for (std::size_t i = 0; i < plane; ++i) op[i] += gp[i] * bv;
          }
          if (gb) {
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i)
              s += static_cast<double>(gp[i]) * ap[i];
            nb->grad.data[c] += static_cast<T>(s);
          }
        }
      } else {
        for (int c = 0; c < as.c; ++c) {
          const T* gp = g.plane_ptr(c);
          const T* ap = na->val.plane_ptr(c);
          const T* bp = nb->val.data.data();
          if (ga) {
            T* op = na->grad.plane_ptr(c);
            for (std::size_t i = 0; i < plane; ++i) op[i] += gp[i] * bp[i];
          }
          if (gb) {
            T* op = nb->grad.data.data();
            for (std::size_t i = 0; i < plane; ++i) op[i] += gp[i] * ap[i];
          }
        }
      }
      break;
    }
    case Op::Scale: {
      if (!ga) break;
      const T s = n.scalar;
      for (std::size_t i = 0; i < g.data.size(); ++i)
        na->grad.data[i] += s * g.data[i];
      break;
    }
    case Op::ReduceSum: {
      if (!ga) break;
      const std::size_t plane = na->val.shape.plane();
      if (n.reduce == Reduce::Channels) {
        for (int c = 0; c < na->val.shape.c; ++c) {
          T* op = na->grad.plane_ptr(c);
          for (std::size_t i = 0; i < plane; ++i) op[i] += g.data[i];
        }
      } else if (n.reduce == Reduce::Spatial) {
        for (int c = 0; c < na->val.shape.c; ++c) {
          const T gv = g.data[c];
          T* op = na->grad.plane_ptr(c);
          for (std::size_t i = 0; i < plane; ++i) op[i] += gv;
        }
      } else {
        const T gv = g.data[0];
        for (std::size_t i = 0; i < na->grad.data.size(); ++i)
          na->grad.data[i] += gv;
      }
      break;
    }
    case Op::AvgPool:
      if (ga) kernels::avg_pool_grad(na->grad, g, n.ratio);
      break;
    case Op::GlobalFilter: {
      const std::size_t plane = na->val.shape.plane();
      for (int c = 0; c < na->val.shape.c; ++c) {
        const T gv = g.data[c];
        if (ga) {
          const T* up = nb->val.plane_ptr(c);
          T* op = na->grad.plane_ptr(c);
          for (std::size_t i = 0; i < plane; ++i) op[i] += gv * up[i];
        }
        if (gb) {
          const T* xp = na->val.plane_ptr(c);
          T* op = nb->grad.plane_ptr(c);
          for (std::size_t i = 0; i < plane; ++i) op[i] += gv * xp[i];
        }
      }
      break;
    }
    case Op::SrfApply: {
      const int J = nb->val.shape.c, L = na->val.shape.c;
      if (ga) kernels::conv2d_grad_input(na->grad, g, n.norm_w, J, 1, 1, 0);
      if (gb) {
        std::fill(n.norm_gw.data.begin(), n.norm_gw.data.end(), T(0));
        kernels::conv2d_grad_kernel(n.norm_gw, g, na->val, J, 1, 1, 0);
        for (int j = 0; j < J; ++j) {
          double dot = 0.0;
          for (int mu = 0; mu < L; ++mu)
            dot += static_cast<double>(n.norm_gw.data[j * L + mu]) *
                   n.norm_w.data[j * L + mu];
          const T invn = static_cast<T>(1.0 / n.norms[j]);
          for (int mu = 0; mu < L; ++mu)
            nb->grad.data[j * L + mu] +=
                (n.norm_gw.data[j * L + mu] - static_cast<T>(dot)) * invn;
        }
      }
      break;
    }
    case Op::PsfApply: {
      if (ga) kernels::psf_grad_input(na->grad, g, n.norm_w.data.data(), n.ratio);
      if (gb) {
        std::fill(n.norm_gw.data.begin(), n.norm_gw.data.end(), T(0));
        kernels::psf_grad_kernel(n.norm_gw.data.data(), g, na->val, n.ratio);
        double dot = 0.0;
        for (std::size_t i = 0; i < n.norm_gw.data.size(); ++i)
          dot += static_cast<double>(n.norm_gw.data[i]) * n.norm_w.data[i];
        const T invn = static_cast<T>(1.0 / n.norms[0]);
        for (std::size_t i = 0; i < n.norm_gw.data.size(); ++i)
          nb->grad.data[i] +=
              (n.norm_gw.data[i] - static_cast<T>(dot)) * invn;
      }
      break;
    }
    case Op::L1Loss: {
      const T coef = static_cast<T>(static_cast<double>(g.data[0]) /
                                    n.mask_count);
      const std::size_t plane = na->val.shape.plane();
      for (int c = 0; c < na->val.shape.c; ++c) {
        const T* ap = na->val.plane_ptr(c);
        const T* bp = nb->val.plane_ptr(c);
        T* gap = ga ? na->grad.plane_ptr(c) : nullptr;
        T* gbp = gb ? nb->grad.plane_ptr(c) : nullptr;
        for (std::size_t i = 0; i < plane; ++i) {
          if (!n.mask.data.empty() && n.mask.data[i] == T(0)) continue;
          const T s = sign_of(ap[i] - bp[i]);
          if (gap) gap[i] += coef * s;
          if (gbp) gbp[i] -= coef * s;
        }
      }
      break;
    }
    case Op::KlDiv: {
      if (!ga) break;
      const double rho = static_cast<double>(n.scalar);
      const double coef = static_cast<double>(g.data[0]) / n.mask_count;
      const std::size_t plane = na->val.shape.plane();
      for (int c = 0; c < na->val.shape.c; ++c) {
        const T* ap = na->val.plane_ptr(c);
        T* gp = na->grad.plane_ptr(c);
        for (std::size_t i = 0; i < plane; ++i) {
          if (!n.mask.data.empty() && n.mask.data[i] == T(0)) continue;
          const double v = static_cast<double>(ap[i]);
          if (v <= kKlFloor || v >= 1.0 - kKlFloor) continue;
          gp[i] += static_cast<T>(coef * (-rho / v + (1.0 - rho) / (1.0 - v)));
        }
      }
      break;
    }
  }
}

template <typename T>
typename Tape<T>::Id Tape<T>::first_nonfinite() const {
  for (std::size_t id = 0; id < nodes_.size(); ++id)
    for (const T v : nodes_[id].val.data)
      if (!std::isfinite(static_cast<double>(v))) return static_cast<Id>(id);
  return -1;
}

template <typename T>
const char* Tape<T>::op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Conv2d: return "conv2d";
    case Op::AddBias: return "add_bias";
    case Op::LeakyRelu: return "leaky_relu";
    case Op::Clamp01: return "clamp01";
    case Op::SoftmaxC: return "softmax_channels";
    case Op::SoftmaxS: return "softmax_spatial";
    case Op::ConcatC: return "concat_channels";
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::ReduceSum: return "reduce_sum";
    case Op::AvgPool: return "avg_pool";
    case Op::GlobalFilter: return "global_filter";
    case Op::SrfApply: return "srf_apply";
    case Op::PsfApply: return "psf_apply";
    case Op::L1Loss: return "l1_loss";
    case Op::KlDiv: return "kl_sparsity";
  }
  return "?";
}

template <typename T>
std::string Tape<T>::describe(Id id) const {
  const Node& n = nodes_[id];
  return "node " + std::to_string(id) + " [" + op_name(n.op) + "] " +
         n.val.shape.str();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace hsfuse
