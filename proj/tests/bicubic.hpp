#pragma once

// Naive fusion baseline: channel-wise bicubic upsampling of the low-res cube
// (Keys kernel, a = -0.5, half-pixel alignment, replicated edges).

#include <algorithm>
#include <cmath>
#include <vector>

#include "hsfuse/tensor.hpp"

namespace testutil {

inline double keys_weight(double t) {
  t = std::abs(t);
  if (t < 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
  if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
  return 0.0;
}

inline hsfuse::Tensor<float> bicubic_upsample(const hsfuse::Tensor<float>& x,
                                              int ratio) {
  const int c = x.shape.c, h = x.shape.h, w = x.shape.w;
  const int oh = h * ratio, ow = w * ratio;

  // per output row/column: the four source taps and their weights
  struct Taps {
    int idx[4];
    double wgt[4];
  };
  auto make_taps = [&](int out_n, int in_n) {
    std::vector<Taps> taps(out_n);
    for (int o = 0; o < out_n; ++o) {
      const double src = (o + 0.5) / ratio - 0.5;
      const int base = static_cast<int>(std::floor(src));
      for (int t = 0; t < 4; ++t) {
        const int j = base - 1 + t;
        taps[o].idx[t] = std::clamp(j, 0, in_n - 1);
        taps[o].wgt[t] = keys_weight(src - j);
      }
    }
    return taps;
  };
  const auto rows = make_taps(oh, h);
  const auto cols = make_taps(ow, w);

  hsfuse::Tensor<float> out(hsfuse::Shape{c, oh, ow});
  for (int b = 0; b < c; ++b)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (int ti = 0; ti < 4; ++ti)
          for (int tj = 0; tj < 4; ++tj)
            acc += rows[i].wgt[ti] * cols[j].wgt[tj] *
                   x.at(b, rows[i].idx[ti], cols[j].idx[tj]);
        out.at(b, i, j) = static_cast<float>(acc);
      }
  return out;
}

}  // namespace testutil
