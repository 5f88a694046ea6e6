#pragma once

// Static dataflow graph over the ops in ops.hpp. A network is built once
// (all shapes resolved for batch size 1), then executed for any batch.
// Forward in eval mode is const and thread-safe; training-mode forward is
// single-writer (it updates batch-norm running stats) and records a Trace
// for the backward pass.

#include <string>
#include <vector>

#include "sspnet/adam.hpp"
#include "sspnet/ops.hpp"
#include "sspnet/tensor.hpp"

namespace ssp {

enum class OpKind {
  input,
  task_code,
  conv2d,
  conv3d,
  conv_t2d,
  conv_t3d,
  batch_norm,
  relu,
  add,
  concat,
  reshape,
  global_pool,
  linear,
  slice,
  dyn_conv,
};

const char* op_kind_name(OpKind k);

struct Node {
  OpKind kind = OpKind::input;
  std::string name;
  std::vector<int> in;                 // producer node ids
  int p_kernel = -1, p_bias = -1;      // conv / linear parameters
  int p_scale = -1, p_shift = -1;      // batch_norm parameters
  int b_mean = -1, b_var = -1;         // batch_norm running-stat buffers
  std::array<int, 3> stride{1, 1, 1};  // z,y,x (2D ops use y,x)
  std::array<int, 3> pad{0, 0, 0};
  Shape out_dims;                      // per-sample output dims (no batch axis)
  int64_t c_out = 0;                   // dyn_conv output channels
  int64_t slice_lo = 0, slice_hi = 0;

  int64_t out_elems() const { return shape_numel(out_dims); }
};

template <typename T>
class NetworkT {
 public:
  std::vector<Node> nodes;               // topological order, node id == index
  std::vector<ParameterT<T>> params;     // registry order is the on-disk order
  std::vector<TensorT<T>> buffers;       // batch-norm running stats
  std::vector<std::string> buffer_names;
  int input_node = -1;
  int code_node = -1;
  int output_node = -1;
  bool training = false;

  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  struct Trace {
    std::vector<TensorT<T>> values;
    std::vector<BnCache<T>> bn;
  };

  // Eval-mode forward. Intermediates are freed as soon as dead.
  TensorT<T> forward(const TensorT<T>& x, const TensorT<T>& code) const;

  // Training/backward path: keeps every activation alive in the trace and,
  // when training is set, updates running stats.
  TensorT<T> forward_trace(const TensorT<T>& x, const TensorT<T>& code, Trace& trace);

  // Accumulates parameter gradients from d(loss)/d(output). Returns the
  // input gradient when requested (empty tensor otherwise).
  TensorT<T> backward(const Trace& trace, const TensorT<T>& grad_out, bool need_input_grad = false);

  void zero_grad() {
    for (auto& p : params) p.zero_grad();
  }

  int64_t param_elems() const {
    int64_t n = 0;
    for (const auto& p : params) n += p.value.numel();
    return n;
  }

  template <typename U>
  NetworkT<U> cast() const {
    NetworkT<U> o;
    o.nodes = nodes;
    o.buffer_names = buffer_names;
    o.input_node = input_node;
    o.code_node = code_node;
    o.output_node = output_node;
    o.training = training;
    o.bn_momentum = bn_momentum;
    o.bn_eps = bn_eps;
    o.params.reserve(params.size());
    for (const auto& p : params) {
      ParameterT<U> q(p.name, p.value.template cast<U>(), p.trainable);
      o.params.push_back(std::move(q));
    }
    o.buffers.reserve(buffers.size());
    for (const auto& b : buffers) o.buffers.push_back(b.template cast<U>());
    return o;
  }

  const Node* find_node(const std::string& name) const {
    for (const auto& n : nodes)
      if (n.name == name) return &n;
    return nullptr;
  }

 private:
  TensorT<T> run(const TensorT<T>& x, const TensorT<T>& code, Trace* trace) const;
  friend class NetworkT<float>;
  friend class NetworkT<double>;
};

using Network = NetworkT<float>;
using Network64 = NetworkT<double>;

extern template class NetworkT<float>;
extern template class NetworkT<double>;

}  // namespace ssp
