#pragma once

// Shared test utilities: deterministic random tensors and independent
// brute-force oracles. The oracles are deliberately naive loop nests with
// double accumulation -- they share no code with the library kernels.

#include <array>
#include <cstdint>

#include "sspnet/rng.hpp"
#include "sspnet/tensor.hpp"

namespace ssp::testing {

template <typename T>
TensorT<T> rand_tensor(Shape shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  TensorT<T> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
TensorT<T> randn_tensor(Shape shape, uint64_t seed, double stddev = 1.0) {
  Rng rng(seed);
  TensorT<T> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(0.0, stddev));
  return t;
}

template <typename T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

// Plain septuple-loop cross-correlation, zero padding, double accumulation.
template <typename T>
TensorT<T> oracle_conv3d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                         std::array<int, 3> stride, std::array<int, 3> pad) {
  const int64_t n = x.dim(0), ci = x.dim(1), d = x.dim(2), h = x.dim(3), wd = x.dim(4);
  const int64_t co = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  const int64_t od = (d + 2 * pad[0] - kd) / stride[0] + 1;
  const int64_t oh = (h + 2 * pad[1] - kh) / stride[1] + 1;
  const int64_t ow = (wd + 2 * pad[2] - kw) / stride[2] + 1;
  TensorT<T> y({n, co, od, oh, ow});
  for (int64_t in = 0; in < n; ++in)
    for (int64_t oc = 0; oc < co; ++oc)
      for (int64_t z = 0; z < od; ++z)
        for (int64_t yy = 0; yy < oh; ++yy)
          for (int64_t xx = 0; xx < ow; ++xx) {
            double acc = b[oc];
            for (int64_t ic = 0; ic < ci; ++ic)
              for (int64_t dz = 0; dz < kd; ++dz)
                for (int64_t dy = 0; dy < kh; ++dy)
                  for (int64_t dx = 0; dx < kw; ++dx) {
                    const int64_t iz = z * stride[0] + dz - pad[0];
                    const int64_t iy = yy * stride[1] + dy - pad[1];
                    const int64_t ix = xx * stride[2] + dx - pad[2];
                    if (iz < 0 || iz >= d || iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                    acc += static_cast<double>(
                               x[(((in * ci + ic) * d + iz) * h + iy) * wd + ix]) *
                           static_cast<double>(
                               w[(((oc * ci + ic) * kd + dz) * kh + dy) * kw + dx]);
                  }
            y[(((in * co + oc) * od + z) * oh + yy) * ow + xx] = static_cast<T>(acc);
          }
  return y;
}

template <typename T>
TensorT<T> oracle_conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                         std::array<int, 2> stride, std::array<int, 2> pad) {
  const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  TensorT<T> x3 = x.reshaped({n, ci, 1, h, wd});
  const int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  TensorT<T> w3 = w.reshaped({co, ci, 1, kh, kw});
  TensorT<T> y3 = oracle_conv3d(x3, w3, b, {1, stride[0], stride[1]}, {0, pad[0], pad[1]});
  return y3.reshaped({y3.dim(0), y3.dim(1), y3.dim(3), y3.dim(4)});
}

// MAC count of a convolution by literally counting multiplies in the naive
// loop nest (padding taps included, matching the analytic formula).
inline int64_t oracle_conv_macs(int64_t out_elems, int64_t c_in,
                                std::array<int64_t, 3> kernel) {
  int64_t macs = 0;
  for (int64_t e = 0; e < out_elems; ++e)
    for (int64_t c = 0; c < c_in; ++c)
      for (int64_t a = 0; a < kernel[0]; ++a)
        for (int64_t b = 0; b < kernel[1]; ++b)
          for (int64_t d = 0; d < kernel[2]; ++d) macs += 1;
  return macs;
}

}  // namespace ssp::testing
