#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsfuse {

// All image-like quantities are single-batch CHW volumes. A plain matrix is
// represented as (c=rows, h=1, w=cols) where that is convenient.
struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  bool operator==(const Shape& o) const {
    return c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }
  std::string str() const {
    return "(" + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(s), data(s.numel(), fill) {}
  Tensor(int c, int h, int w, T fill = T(0))
      : shape{c, h, w}, data(shape.numel(), fill) {}

  std::size_t numel() const { return shape.numel(); }

  T& at(int c, int y, int x) {
    return data[static_cast<std::size_t>(c) * shape.plane() +
                static_cast<std::size_t>(y) * shape.w + x];
  }
  T at(int c, int y, int x) const {
    return data[static_cast<std::size_t>(c) * shape.plane() +
                static_cast<std::size_t>(y) * shape.w + x];
  }

  T* plane_ptr(int c) { return data.data() + static_cast<std::size_t>(c) * shape.plane(); }
  const T* plane_ptr(int c) const {
    return data.data() + static_cast<std::size_t>(c) * shape.plane();
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

// Convolution kernels are stored as (out_c * in_c, k, k): plane index
// o * in_c + i holds the kernel connecting input channel i to output o.
template <typename T>
Tensor<T> make_conv_kernel(int out_c, int in_c, int k) {
  return Tensor<T>(out_c * in_c, k, k);
}

// Plain row-major matrix for spectra: endmembers (K x L), spectral response
// (L x l with unit-sum columns).
template <typename T>
struct Mat {
  int rows = 0, cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(int r, int c, T fill = T(0))
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  T& operator()(int r, int c) {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  T operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }

  template <typename U>
  Mat<U> cast() const {
    Mat<U> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

inline void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

}  // namespace hsfuse
