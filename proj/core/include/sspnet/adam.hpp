#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sspnet/errors.hpp"
#include "sspnet/tensor.hpp"

namespace ssp {

// Learnable tensor with its gradient accumulator. Gradients are reset only
// through zero_grad and written only by the backward pass / optimizer.
template <typename T>
struct ParameterT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;
  bool trainable = true;

  ParameterT() = default;
  ParameterT(std::string n, TensorT<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

  void zero_grad() { grad.fill(T(0)); }
};

using Parameter = ParameterT<float>;

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment per parameter plus the shared step counter.
template <typename T>
struct AdamStateT {
  std::vector<TensorT<T>> m;
  std::vector<TensorT<T>> v;
  int64_t step = 0;

  static AdamStateT init(const std::vector<ParameterT<T>>& params) {
    AdamStateT s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
      s.m.emplace_back(p.value.shape());
      s.v.emplace_back(p.value.shape());
    }
    return s;
  }
};

using AdamState = AdamStateT<float>;

// Bias-corrected Adam update over all trainable parameters. Non-trainable
// entries keep zero moments and are skipped.
template <typename T>
void adam_step(std::vector<ParameterT<T>>& params, AdamStateT<T>& state, const AdamConfig& cfg) {
  check(params.size() == state.m.size() && params.size() == state.v.size(), errc::contract,
        "adam_step: optimizer state does not match parameter registry");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    check(p.grad.same_shape(p.value), errc::contract,
          "adam_step: gradient shape mismatch for " + p.name);
    auto& m = state.m[i];
    auto& v = state.v[i];
    const int64_t n = p.value.numel();
    for (int64_t j = 0; j < n; ++j) {
      const double g = static_cast<double>(p.grad[j]);
      const double mj = cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * g;
      const double vj = cfg.beta2 * static_cast<double>(v[j]) + (1.0 - cfg.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      p.value[j] = static_cast<T>(static_cast<double>(p.value[j]) -
                                  cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace ssp
