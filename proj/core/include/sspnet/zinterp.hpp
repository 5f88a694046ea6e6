#pragma once

#include "sspnet/tensor.hpp"
#include "sspnet/volume.hpp"

namespace ssp {

enum class InterpKind { prefix, postfix, none };
enum class InterpMode { nearest, linear };

struct InterpStrategy {
  InterpKind kind = InterpKind::prefix;
  InterpMode mode = InterpMode::nearest;
  int ratio = 1;
};

const char* interp_kind_name(InterpKind k);
const char* interp_mode_name(InterpMode m);
InterpKind parse_interp_kind(const std::string& s);
InterpMode parse_interp_mode(const std::string& s);

// Maps a sparse stack onto the pseudo grid of dense depth r*D_i. Kept slice
// j lands at pseudo index j*r; nearest replicates, linear blends between
// kept slices and clamps at the top boundary.
Volume prefix_upsample(const SparseStack& x, InterpMode mode);

// Same mapping on a [N,C,D,H,W] activation (used by the inference path).
template <typename T>
TensorT<T> prefix_upsample_z(const TensorT<T>& x, int r, InterpMode mode);

extern template TensorT<float> prefix_upsample_z<float>(const TensorT<float>&, int, InterpMode);
extern template TensorT<double> prefix_upsample_z<double>(const TensorT<double>&, int, InterpMode);

// Learnable postfix upsampler: a Z transposed conv with kd = stride_z = r,
// initialized to replicate slices so that, untrained, it matches nearest
// prefix interpolation exactly.
struct PostfixUpsamplerSpec {
  int ratio = 1;
  int channels = 1;
};

PostfixUpsamplerSpec make_postfix_upsampler(int r, int channels);

// Kernel [C,C,r,1,1]: ones on the channel diagonal, zero elsewhere.
template <typename T>
TensorT<T> replicate_upsampler_kernel(int r, int channels);

extern template TensorT<float> replicate_upsampler_kernel<float>(int, int);
extern template TensorT<double> replicate_upsampler_kernel<double>(int, int);

}  // namespace ssp
