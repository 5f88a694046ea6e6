#include "sspnet/network.hpp"

#include <algorithm>

#include "sspnet/errors.hpp"

namespace ssp {

const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::input: return "input";
    case OpKind::task_code: return "task_code";
    case OpKind::conv2d: return "conv2d";
    case OpKind::conv3d: return "conv3d";
    case OpKind::conv_t2d: return "conv_t2d";
    case OpKind::conv_t3d: return "conv_t3d";
    case OpKind::batch_norm: return "batch_norm";
    case OpKind::relu: return "relu";
    case OpKind::add: return "add";
    case OpKind::concat: return "concat";
    case OpKind::reshape: return "reshape";
    case OpKind::global_pool: return "global_pool";
    case OpKind::linear: return "linear";
    case OpKind::slice: return "slice";
    case OpKind::dyn_conv: return "dyn_conv";
  }
  return "?";
}

namespace {

Shape with_batch(int64_t n, const Shape& dims) {
  Shape s;
  s.reserve(dims.size() + 1);
  s.push_back(n);
  for (int64_t d : dims) s.push_back(d);
  return s;
}

}  // namespace

template <typename T>
TensorT<T> NetworkT<T>::run(const TensorT<T>& x, const TensorT<T>& code, Trace* trace) const {
  check(input_node >= 0 && output_node >= 0, errc::contract, "network has no input/output");
  const int64_t batch = x.dim(0);

  std::vector<TensorT<T>> local_values;
  std::vector<BnCache<T>> local_bn;
  std::vector<TensorT<T>>& values = trace ? trace->values : local_values;
  values.assign(nodes.size(), TensorT<T>());
  if (trace) trace->bn.assign(nodes.size(), BnCache<T>());

  // In eval mode free intermediates after their last consumer.
  std::vector<int> refcount(nodes.size(), 0);
  if (!trace) {
    for (const auto& node : nodes)
      for (int in : node.in) refcount[static_cast<size_t>(in)] += 1;
    refcount[static_cast<size_t>(output_node)] += 1;
  }

  const TensorT<T> no_bias;
  for (size_t id = 0; id < nodes.size(); ++id) {
    const Node& node = nodes[id];
    auto in = [&](int slot) -> const TensorT<T>& {
      return values[static_cast<size_t>(node.in[static_cast<size_t>(slot)])];
    };
    auto bias_of = [&](int pid) -> const TensorT<T>& {
      return pid >= 0 ? params[static_cast<size_t>(pid)].value : no_bias;
    };
    TensorT<T> out;
    try {
      switch (node.kind) {
        case OpKind::input: {
          const Shape want = with_batch(batch, node.out_dims);
          check(x.shape() == want, errc::contract,
                "input shape " + shape_str(x.shape()) + " does not match expected " +
                    shape_str(want));
          out = x;
          break;
        }
        case OpKind::task_code: {
          const Shape want = with_batch(batch, node.out_dims);
          check(code.shape() == want, errc::contract,
                "task code shape " + shape_str(code.shape()) + " does not match expected " +
                    shape_str(want));
          out = code;
          break;
        }
        case OpKind::conv2d:
          out = conv2d_forward<T>(in(0), params[static_cast<size_t>(node.p_kernel)].value,
                                  bias_of(node.p_bias), {node.stride[1], node.stride[2]},
                                  {node.pad[1], node.pad[2]});
          break;
        case OpKind::conv3d:
          out = conv3d_forward<T>(in(0), params[static_cast<size_t>(node.p_kernel)].value,
                                  bias_of(node.p_bias), node.stride, node.pad);
          break;
        case OpKind::conv_t2d:
          out = conv_transpose2d_forward<T>(in(0), params[static_cast<size_t>(node.p_kernel)].value,
                                            bias_of(node.p_bias),
                                            {node.stride[1], node.stride[2]});
          break;
        case OpKind::conv_t3d:
          out = conv_transpose3d_forward<T>(in(0), params[static_cast<size_t>(node.p_kernel)].value,
                                            bias_of(node.p_bias), node.stride);
          break;
        case OpKind::batch_norm: {
          auto& rm = const_cast<TensorT<T>&>(buffers[static_cast<size_t>(node.b_mean)]);
          auto& rv = const_cast<TensorT<T>&>(buffers[static_cast<size_t>(node.b_var)]);
          out = batch_norm_forward<T>(in(0), params[static_cast<size_t>(node.p_scale)].value,
                                      params[static_cast<size_t>(node.p_shift)].value, rm, rv,
                                      training, static_cast<T>(bn_momentum),
                                      static_cast<T>(bn_eps),
                                      trace ? &trace->bn[id] : nullptr);
          break;
        }
        case OpKind::relu:
          out = relu_forward<T>(in(0));
          break;
        case OpKind::add:
          out = add_forward<T>(in(0), in(1));
          break;
        case OpKind::concat:
          out = concat_channels_forward<T>(in(0), in(1));
          break;
        case OpKind::reshape:
          out = in(0).reshaped(with_batch(batch, node.out_dims));
          break;
        case OpKind::global_pool:
          out = global_avg_pool_forward<T>(in(0));
          break;
        case OpKind::linear:
          out = linear_forward<T>(in(0), params[static_cast<size_t>(node.p_kernel)].value,
                                  params[static_cast<size_t>(node.p_bias)].value);
          break;
        case OpKind::slice:
          out = slice_cols_forward<T>(in(0), node.slice_lo, node.slice_hi);
          break;
        case OpKind::dyn_conv:
          out = dyn_conv1x1_forward<T>(in(0), in(1), in(2), node.c_out);
          break;
      }
    } catch (const error& e) {
      throw error(e.code(), "layer '" + node.name + "': " + e.what());
    }
    const Shape want = with_batch(batch, node.out_dims);
    check(out.shape() == want, errc::contract,
          "layer '" + node.name + "' produced " + shape_str(out.shape()) + ", expected " +
              shape_str(want));
    values[id] = std::move(out);
    if (!trace) {
      for (int i : node.in) {
        int& rc = refcount[static_cast<size_t>(i)];
        if (--rc == 0) values[static_cast<size_t>(i)] = TensorT<T>();
      }
    }
  }
  return values[static_cast<size_t>(output_node)];
}

template <typename T>
TensorT<T> NetworkT<T>::forward(const TensorT<T>& x, const TensorT<T>& code) const {
  check(!training, errc::contract,
        "forward() is the eval-mode entry point; use forward_trace during training");
  return run(x, code, nullptr);
}

template <typename T>
TensorT<T> NetworkT<T>::forward_trace(const TensorT<T>& x, const TensorT<T>& code, Trace& trace) {
  return run(x, code, &trace);
}

template <typename T>
TensorT<T> NetworkT<T>::backward(const Trace& trace, const TensorT<T>& grad_out,
                                 bool need_input_grad) {
  check(trace.values.size() == nodes.size(), errc::contract,
        "backward: trace does not match network");
  std::vector<TensorT<T>> grads(nodes.size());
  grads[static_cast<size_t>(output_node)] = grad_out;

  auto accumulate = [&](int node_id, TensorT<T>&& g) {
    auto& slot = grads[static_cast<size_t>(node_id)];
    if (slot.empty())
      slot = std::move(g);
    else
      add_into(slot, g);
  };
  auto param_grad = [&](int pid, const TensorT<T>& g) {
    if (pid >= 0) add_into(params[static_cast<size_t>(pid)].grad, g);
  };

  for (size_t r = nodes.size(); r-- > 0;) {
    const Node& node = nodes[r];
    TensorT<T>& gy = grads[r];
    if (gy.empty()) continue;
    // Skip the input gradient when this op reads the graph input directly
    // and the caller does not want d(loss)/d(input).
    const bool want_gx =
        need_input_grad || !(node.in.size() == 1 && node.in[0] == input_node);
    auto val = [&](int slot) -> const TensorT<T>& {
      return trace.values[static_cast<size_t>(node.in[static_cast<size_t>(slot)])];
    };
    switch (node.kind) {
      case OpKind::input:
      case OpKind::task_code:
        break;
      case OpKind::conv2d: {
        auto g = conv2d_backward<T>(val(0), params[static_cast<size_t>(node.p_kernel)].value, gy,
                                    {node.stride[1], node.stride[2]}, {node.pad[1], node.pad[2]},
                                    want_gx);
        param_grad(node.p_kernel, g.w);
        param_grad(node.p_bias, g.b);
        if (want_gx) accumulate(node.in[0], std::move(g.x));
        break;
      }
      case OpKind::conv3d: {
        auto g = conv3d_backward<T>(val(0), params[static_cast<size_t>(node.p_kernel)].value, gy,
                                    node.stride, node.pad, want_gx);
        param_grad(node.p_kernel, g.w);
        param_grad(node.p_bias, g.b);
        if (want_gx) accumulate(node.in[0], std::move(g.x));
        break;
      }
      case OpKind::conv_t2d: {
        auto g = conv_transpose2d_backward<T>(val(0), params[static_cast<size_t>(node.p_kernel)].value,
                                              gy, {node.stride[1], node.stride[2]}, want_gx);
        param_grad(node.p_kernel, g.w);
        param_grad(node.p_bias, g.b);
        if (want_gx) accumulate(node.in[0], std::move(g.x));
        break;
      }
      case OpKind::conv_t3d: {
        auto g = conv_transpose3d_backward<T>(val(0), params[static_cast<size_t>(node.p_kernel)].value,
                                              gy, node.stride, want_gx);
        param_grad(node.p_kernel, g.w);
        param_grad(node.p_bias, g.b);
        if (want_gx) accumulate(node.in[0], std::move(g.x));
        break;
      }
      case OpKind::batch_norm: {
        BnGrads<T> g;
        if (training) {
          g = batch_norm_backward_train<T>(trace.bn[r], params[static_cast<size_t>(node.p_scale)].value,
                                           gy);
        } else {
          g = batch_norm_backward_eval<T>(val(0), params[static_cast<size_t>(node.p_scale)].value,
                                          buffers[static_cast<size_t>(node.b_mean)],
                                          buffers[static_cast<size_t>(node.b_var)],
                                          static_cast<T>(bn_eps), gy);
        }
        param_grad(node.p_scale, g.scale);
        param_grad(node.p_shift, g.shift);
        accumulate(node.in[0], std::move(g.x));
        break;
      }
      case OpKind::relu:
        accumulate(node.in[0], relu_backward<T>(val(0), gy));
        break;
      case OpKind::add:
        accumulate(node.in[0], TensorT<T>(gy));
        accumulate(node.in[1], TensorT<T>(gy));
        break;
      case OpKind::concat: {
        TensorT<T> ga, gb;
        concat_channels_backward<T>(gy, val(0).dim(1), ga, gb);
        accumulate(node.in[0], std::move(ga));
        accumulate(node.in[1], std::move(gb));
        break;
      }
      case OpKind::reshape:
        accumulate(node.in[0], TensorT<T>(gy).reshaped(val(0).shape()));
        break;
      case OpKind::global_pool:
        accumulate(node.in[0], global_avg_pool_backward<T>(val(0).shape(), gy));
        break;
      case OpKind::linear: {
        auto g = linear_backward<T>(val(0), params[static_cast<size_t>(node.p_kernel)].value, gy,
                                    true);
        param_grad(node.p_kernel, g.w);
        param_grad(node.p_bias, g.b);
        accumulate(node.in[0], std::move(g.x));
        break;
      }
      case OpKind::slice:
        accumulate(node.in[0],
                   slice_cols_backward<T>(val(0).shape(), gy, node.slice_lo, node.slice_hi));
        break;
      case OpKind::dyn_conv: {
        auto g = dyn_conv1x1_backward<T>(val(0), val(1), gy, true);
        accumulate(node.in[0], std::move(g.x));
        accumulate(node.in[1], std::move(g.wflat));
        accumulate(node.in[2], std::move(g.bflat));
        break;
      }
    }
    // free as we go, but keep the accumulated input gradient alive
    if (static_cast<int>(r) != output_node && node.kind != OpKind::input &&
        node.kind != OpKind::task_code)
      gy = TensorT<T>();
  }
  if (need_input_grad && !grads[static_cast<size_t>(input_node)].empty())
    return std::move(grads[static_cast<size_t>(input_node)]);
  return TensorT<T>();
}

template class NetworkT<float>;
template class NetworkT<double>;

}  // namespace ssp
