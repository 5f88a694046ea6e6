#pragma once

// Dense tensor operations with explicit forward/backward pairs. Every
// backward computes fresh gradient tensors; accumulation across consumers
// is the graph executor's job. All ops are instantiated for float and
// double (the double build exists for finite-difference gradient checks).

#include <array>
#include <vector>

#include "sspnet/tensor.hpp"

namespace ssp {

template <typename T>
struct ConvGrads {
  TensorT<T> x, w, b;
};

// -- 2D convolution (cross-correlation). x [N,Cin,H,W], w [Cout,Cin,kh,kw],
//    b [Cout]. Kernel extents must be odd; output extents must be integral.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                          std::array<int, 2> stride, std::array<int, 2> pad);
template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                             std::array<int, 2> stride, std::array<int, 2> pad,
                             bool need_gx = true);

// -- 3D convolution. x [N,Cin,D,H,W], w [Cout,Cin,kd,kh,kw], b [Cout].
template <typename T>
TensorT<T> conv3d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                          std::array<int, 3> stride, std::array<int, 3> pad);
template <typename T>
ConvGrads<T> conv3d_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                             std::array<int, 3> stride, std::array<int, 3> pad,
                             bool need_gx = true);

// Uniform stride/padding overloads matching the published op contracts.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                          int stride, int padding) {
  return conv2d_forward(x, w, b, {stride, stride}, {padding, padding});
}
template <typename T>
TensorT<T> conv3d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                          int stride, int padding) {
  return conv3d_forward(x, w, b, {stride, stride, stride}, {padding, padding, padding});
}

// -- Transposed convolutions, restricted to kernel == stride per axis
//    (non-overlapping taps; output extents are exact multiples).
//    w layout [Cin,Cout,k...]; bias [Cout].
template <typename T>
TensorT<T> conv_transpose2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                                    std::array<int, 2> stride);
template <typename T>
ConvGrads<T> conv_transpose2d_backward(const TensorT<T>& x, const TensorT<T>& w,
                                       const TensorT<T>& gy, std::array<int, 2> stride,
                                       bool need_gx = true);
template <typename T>
TensorT<T> conv_transpose3d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                                    std::array<int, 3> stride);
template <typename T>
ConvGrads<T> conv_transpose3d_backward(const TensorT<T>& x, const TensorT<T>& w,
                                       const TensorT<T>& gy, std::array<int, 3> stride,
                                       bool need_gx = true);

// Z-axis learnable upsampler: w [C,C,kd,1,1], kd must equal stride_z.
template <typename T>
TensorT<T> conv_transpose_z_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                                    int stride_z);
template <typename T>
ConvGrads<T> conv_transpose_z_backward(const TensorT<T>& x, const TensorT<T>& w,
                                       const TensorT<T>& gy, int stride_z, bool need_gx = true);

// -- Batch normalization over channel axis 1.
template <typename T>
struct BnCache {
  TensorT<T> xhat;
  std::vector<T> invstd;
};
template <typename T>
struct BnGrads {
  TensorT<T> x, scale, shift;
};

template <typename T>
TensorT<T> batch_norm_forward(const TensorT<T>& x, const TensorT<T>& scale,
                              const TensorT<T>& shift, TensorT<T>& running_mean,
                              TensorT<T>& running_var, bool training, T momentum, T eps,
                              BnCache<T>* cache);
template <typename T>
BnGrads<T> batch_norm_backward_train(const BnCache<T>& cache, const TensorT<T>& scale,
                                     const TensorT<T>& gy);
template <typename T>
BnGrads<T> batch_norm_backward_eval(const TensorT<T>& x, const TensorT<T>& scale,
                                    const TensorT<T>& running_mean, const TensorT<T>& running_var,
                                    T eps, const TensorT<T>& gy);

// -- Pointwise / reductions.
template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x);
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& gy);

template <typename T>
TensorT<T> add_forward(const TensorT<T>& a, const TensorT<T>& b);

// Mean of squared differences over all elements; if grad_pred is non-null
// it receives d(loss)/d(pred) = 2*(pred-target)/numel.
template <typename T>
T mse_loss(const TensorT<T>& pred, const TensorT<T>& target, TensorT<T>* grad_pred = nullptr);

// -- Fully connected. x [N,Fin], w [Fout,Fin], b [Fout] -> [N,Fout].
template <typename T>
TensorT<T> linear_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b);
template <typename T>
ConvGrads<T> linear_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                             bool need_gx = true);

// x [N,C,...spatial] -> [N,C]
template <typename T>
TensorT<T> global_avg_pool_forward(const TensorT<T>& x);
template <typename T>
TensorT<T> global_avg_pool_backward(const Shape& x_shape, const TensorT<T>& gy);

// Concatenation along the channel axis (axis 1).
template <typename T>
TensorT<T> concat_channels_forward(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
void concat_channels_backward(const TensorT<T>& gy, int64_t channels_a, TensorT<T>& ga,
                              TensorT<T>& gb);

// Column slice of a [N,P] matrix.
template <typename T>
TensorT<T> slice_cols_forward(const TensorT<T>& x, int64_t lo, int64_t hi);
template <typename T>
TensorT<T> slice_cols_backward(const Shape& x_shape, const TensorT<T>& gy, int64_t lo, int64_t hi);

// Per-sample generated 1x1 convolution: x [N,Cin,...spatial],
// wflat [N,Cout*Cin], bflat [N,Cout] -> y [N,Cout,...spatial].
template <typename T>
struct DynConvGrads {
  TensorT<T> x, wflat, bflat;
};
template <typename T>
TensorT<T> dyn_conv1x1_forward(const TensorT<T>& x, const TensorT<T>& wflat,
                               const TensorT<T>& bflat, int64_t c_out);
template <typename T>
DynConvGrads<T> dyn_conv1x1_backward(const TensorT<T>& x, const TensorT<T>& wflat,
                                     const TensorT<T>& gy, bool need_gx = true);

// dst += src (shape-checked)
template <typename T>
void add_into(TensorT<T>& dst, const TensorT<T>& src);

#define SSPNET_OPS_EXTERN(T)                                                                      \
  extern template TensorT<T> conv2d_forward<T>(const TensorT<T>&, const TensorT<T>&,             \
                                               const TensorT<T>&, std::array<int, 2>,            \
                                               std::array<int, 2>);                              \
  extern template ConvGrads<T> conv2d_backward<T>(const TensorT<T>&, const TensorT<T>&,          \
                                                  const TensorT<T>&, std::array<int, 2>,         \
                                                  std::array<int, 2>, bool);                     \
  extern template TensorT<T> conv3d_forward<T>(const TensorT<T>&, const TensorT<T>&,             \
                                               const TensorT<T>&, std::array<int, 3>,            \
                                               std::array<int, 3>);                              \
  extern template ConvGrads<T> conv3d_backward<T>(const TensorT<T>&, const TensorT<T>&,          \
                                                  const TensorT<T>&, std::array<int, 3>,         \
                                                  std::array<int, 3>, bool);                     \
  extern template TensorT<T> conv_transpose2d_forward<T>(const TensorT<T>&, const TensorT<T>&,   \
                                                         const TensorT<T>&, std::array<int, 2>); \
  extern template ConvGrads<T> conv_transpose2d_backward<T>(                                     \
      const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, std::array<int, 2>, bool);        \
  extern template TensorT<T> conv_transpose3d_forward<T>(const TensorT<T>&, const TensorT<T>&,   \
                                                         const TensorT<T>&, std::array<int, 3>); \
  extern template ConvGrads<T> conv_transpose3d_backward<T>(                                     \
      const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, std::array<int, 3>, bool);        \
  extern template TensorT<T> conv_transpose_z_forward<T>(const TensorT<T>&, const TensorT<T>&,   \
                                                         const TensorT<T>&, int);                \
  extern template ConvGrads<T> conv_transpose_z_backward<T>(const TensorT<T>&, const TensorT<T>&,\
                                                            const TensorT<T>&, int, bool);       \
  extern template TensorT<T> batch_norm_forward<T>(const TensorT<T>&, const TensorT<T>&,         \
                                                   const TensorT<T>&, TensorT<T>&, TensorT<T>&,  \
                                                   bool, T, T, BnCache<T>*);                     \
  extern template BnGrads<T> batch_norm_backward_train<T>(const BnCache<T>&, const TensorT<T>&,  \
                                                          const TensorT<T>&);                    \
  extern template BnGrads<T> batch_norm_backward_eval<T>(const TensorT<T>&, const TensorT<T>&,   \
                                                         const TensorT<T>&, const TensorT<T>&, T,\
                                                         const TensorT<T>&);                     \
  extern template TensorT<T> relu_forward<T>(const TensorT<T>&);                                 \
  extern template TensorT<T> relu_backward<T>(const TensorT<T>&, const TensorT<T>&);             \
  extern template TensorT<T> add_forward<T>(const TensorT<T>&, const TensorT<T>&);               \
  extern template T mse_loss<T>(const TensorT<T>&, const TensorT<T>&, TensorT<T>*);              \
  extern template TensorT<T> linear_forward<T>(const TensorT<T>&, const TensorT<T>&,             \
                                               const TensorT<T>&);                               \
  extern template ConvGrads<T> linear_backward<T>(const TensorT<T>&, const TensorT<T>&,          \
                                                  const TensorT<T>&, bool);                      \
  extern template TensorT<T> global_avg_pool_forward<T>(const TensorT<T>&);                      \
  extern template TensorT<T> global_avg_pool_backward<T>(const Shape&, const TensorT<T>&);       \
  extern template TensorT<T> concat_channels_forward<T>(const TensorT<T>&, const TensorT<T>&);   \
  extern template void concat_channels_backward<T>(const TensorT<T>&, int64_t, TensorT<T>&,      \
                                                   TensorT<T>&);                                 \
  extern template TensorT<T> slice_cols_forward<T>(const TensorT<T>&, int64_t, int64_t);         \
  extern template TensorT<T> slice_cols_backward<T>(const Shape&, const TensorT<T>&, int64_t,    \
                                                    int64_t);                                    \
  extern template TensorT<T> dyn_conv1x1_forward<T>(const TensorT<T>&, const TensorT<T>&,        \
                                                    const TensorT<T>&, int64_t);                 \
  extern template DynConvGrads<T> dyn_conv1x1_backward<T>(const TensorT<T>&, const TensorT<T>&,  \
                                                          const TensorT<T>&, bool);              \
  extern template void add_into<T>(TensorT<T>&, const TensorT<T>&);

SSPNET_OPS_EXTERN(float)
SSPNET_OPS_EXTERN(double)
#undef SSPNET_OPS_EXTERN

}  // namespace ssp
