#include "sspnet/zinterp.hpp"

#include <cstring>

namespace ssp {

const char* interp_kind_name(InterpKind k) {
  switch (k) {
    case InterpKind::prefix: return "prefix";
    case InterpKind::postfix: return "postfix";
    case InterpKind::none: return "none";
  }
  return "?";
}

const char* interp_mode_name(InterpMode m) {
  return m == InterpMode::nearest ? "nearest" : "linear";
}

InterpKind parse_interp_kind(const std::string& s) {
  if (s == "prefix") return InterpKind::prefix;
  if (s == "postfix") return InterpKind::postfix;
  if (s == "none") return InterpKind::none;
  fail(errc::config, "unknown interp strategy '" + s + "' (expected prefix|postfix|none)");
}

InterpMode parse_interp_mode(const std::string& s) {
  if (s == "nearest") return InterpMode::nearest;
  if (s == "linear") return InterpMode::linear;
  fail(errc::config, "unknown interp mode '" + s + "' (expected nearest|linear)");
}

Volume prefix_upsample(const SparseStack& x, InterpMode mode) {
  validate_geometry(x.vol.depth, x.dense_depth, x.ratio);
  const int64_t r = x.ratio;
  const int64_t d_in = x.vol.depth;
  const int64_t d_out = x.dense_depth;
  Volume out(d_out, x.vol.height, x.vol.width, x.vol.voxel_z / static_cast<float>(r),
             x.vol.voxel_y, x.vol.voxel_x);
  const size_t plane = static_cast<size_t>(x.vol.height * x.vol.width);
  for (int64_t j = 0; j < d_out; ++j) {
    const int64_t base = j / r;
    if (mode == InterpMode::nearest || j % r == 0) {
      std::memcpy(out.slice(j), x.vol.slice(base), plane * sizeof(float));
    } else {
      const int64_t next = std::min(base + 1, d_in - 1);
      const float t = static_cast<float>(j % r) / static_cast<float>(r);
      const float* a = x.vol.slice(base);
      const float* b = x.vol.slice(next);
      float* o = out.slice(j);
      for (size_t i = 0; i < plane; ++i) o[i] = (1.0f - t) * a[i] + t * b[i];
    }
  }
  return out;
}

template <typename T>
TensorT<T> prefix_upsample_z(const TensorT<T>& x, int r, InterpMode mode) {
  check(x.rank() == 5, errc::contract, "prefix_upsample_z expects [N,C,D,H,W]");
  check(r >= 1, errc::geometry, "ratio must be >= 1");
  const int64_t n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  TensorT<T> y({n, c, d * r, h, w});
  const int64_t plane = h * w;
  for (int64_t i = 0; i < n * c; ++i) {
    const T* src = x.data() + i * d * plane;
    T* dst = y.data() + i * d * r * plane;
    for (int64_t j = 0; j < d * r; ++j) {
      const int64_t base = j / r;
      T* o = dst + j * plane;
      if (mode == InterpMode::nearest || j % r == 0) {
        std::memcpy(o, src + base * plane, sizeof(T) * static_cast<size_t>(plane));
      } else {
        const int64_t next = std::min(base + 1, d - 1);
        const T t = static_cast<T>(j % r) / static_cast<T>(r);
        const T* a = src + base * plane;
        const T* b = src + next * plane;
        for (int64_t k = 0; k < plane; ++k) o[k] = (T(1) - t) * a[k] + t * b[k];
      }
    }
  }
  return y;
}

PostfixUpsamplerSpec make_postfix_upsampler(int r, int channels) {
  check(r >= 1, errc::config, "postfix upsampler ratio must be >= 1");
  check(channels >= 1, errc::config, "postfix upsampler needs at least one channel");
  return PostfixUpsamplerSpec{r, channels};
}

template <typename T>
TensorT<T> replicate_upsampler_kernel(int r, int channels) {
  TensorT<T> w({channels, channels, r, 1, 1});
  for (int c = 0; c < channels; ++c)
    for (int t = 0; t < r; ++t) w[(static_cast<int64_t>(c) * channels + c) * r + t] = T(1);
  return w;
}

template TensorT<float> prefix_upsample_z<float>(const TensorT<float>&, int, InterpMode);
template TensorT<double> prefix_upsample_z<double>(const TensorT<double>&, int, InterpMode);
template TensorT<float> replicate_upsampler_kernel<float>(int, int);
template TensorT<double> replicate_upsampler_kernel<double>(int, int);

}  // namespace ssp
