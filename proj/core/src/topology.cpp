#include "sspnet/topology.hpp"

#include <cmath>

#include "sspnet/rng.hpp"

namespace ssp {

const char* topology_kind_name(TopologyKind k) {
  switch (k) {
    case TopologyKind::pure2d: return "pure2d";
    case TopologyKind::pure3d: return "pure3d";
    case TopologyKind::hybrid_3to2d: return "hybrid_3to2d";
    case TopologyKind::hybrid_2to3d: return "hybrid_2to3d";
  }
  return "?";
}

TopologyKind parse_topology_kind(const std::string& s) {
  if (s == "pure2d") return TopologyKind::pure2d;
  if (s == "pure3d") return TopologyKind::pure3d;
  if (s == "hybrid_3to2d") return TopologyKind::hybrid_3to2d;
  if (s == "hybrid_2to3d") return TopologyKind::hybrid_2to3d;
  fail(errc::config, "unknown topology kind '" + s +
                         "' (expected pure2d|pure3d|hybrid_3to2d|hybrid_2to3d)");
}

std::array<int64_t, 5> depth_ladder(int64_t entry_depth) {
  std::array<int64_t, 5> d{};
  d[0] = entry_depth;
  for (int k = 1; k < 5; ++k) d[k] = (d[k - 1] >= 2 && d[k - 1] % 2 == 0) ? d[k - 1] / 2 : d[k - 1];
  return d;
}

void validate_topology(const TopologyConfig& cfg) {
  check(cfg.patch_z >= 1 && cfg.patch_h >= 1 && cfg.patch_w >= 1, errc::config,
        "patch extents must be positive");
  check(cfg.patch_h % 16 == 0 && cfg.patch_w % 16 == 0, errc::config,
        "patch H and W must be divisible by 16 (four 2x downsamples), got " +
            std::to_string(cfg.patch_h) + "x" + std::to_string(cfg.patch_w));
  check(cfg.patch_z % 16 == 0, errc::config,
        "patch Z must be divisible by 16 (four 2x downsamples), got " +
            std::to_string(cfg.patch_z));
  check(cfg.ratio >= 1, errc::config, "ratio must be >= 1");
  check(cfg.patch_z % cfg.ratio == 0, errc::config,
        "patch Z " + std::to_string(cfg.patch_z) + " must be divisible by ratio " +
            std::to_string(cfg.ratio));
  check(cfg.task_count >= 1, errc::config, "task_count must be >= 1");
  check(cfg.u_dim >= 1, errc::config, "u_dim must be >= 1");
  for (int64_t c : cfg.encoder_channels)
    check(c >= 1, errc::config, "encoder channels must be positive");
  if (cfg.interp == InterpKind::none)
    check(cfg.has_2d_decoder(), errc::config,
          "interp=none is only legal for 2D-decoder topologies (pure2d, hybrid_3to2d), got " +
              std::string(topology_kind_name(cfg.kind)));

  // Hybrid kinds: every level's transform must resolve.
  const auto dl = depth_ladder(cfg.net_input_depth());
  if (cfg.kind == TopologyKind::hybrid_3to2d) {
    for (int k = 0; k < 5; ++k)
      resolve_projection(TransformRoute::depth_to_channel, cfg.projection_space, cfg.u_dim,
                         cfg.encoder_channels[static_cast<size_t>(k)], dl[static_cast<size_t>(k)]);
  } else if (cfg.kind == TopologyKind::hybrid_2to3d) {
    for (int k = 0; k < 5; ++k)
      resolve_projection(TransformRoute::channel_to_depth, cfg.projection_space, cfg.u_dim,
                         cfg.encoder_channels[static_cast<size_t>(k)], dl[static_cast<size_t>(k)]);
  }
}

Tensor one_hot(int label, int task_count) {
  check(task_count >= 1, errc::label, "task_count must be >= 1");
  check(label >= 0 && label < task_count, errc::label,
        "task label " + std::to_string(label) + " out of range [0," + std::to_string(task_count) +
            ")");
  Tensor t({task_count});
  t[label] = 1.0f;
  return t;
}

Tensor one_hot_batch(const std::vector<int>& labels, int task_count) {
  Tensor t({static_cast<int64_t>(labels.size()), task_count});
  for (size_t i = 0; i < labels.size(); ++i) {
    check(labels[i] >= 0 && labels[i] < task_count, errc::label,
          "task label " + std::to_string(labels[i]) + " out of range [0," +
              std::to_string(task_count) + ")");
    t[static_cast<int64_t>(i) * task_count + labels[i]] = 1.0f;
  }
  return t;
}

namespace {

template <typename T>
class Builder {
 public:
  Builder(const TopologyConfig& cfg, uint64_t seed) : cfg_(cfg), seed_(seed) {}

  struct Feat {
    int id = -1;
    int64_t c = 0, d = 1, h = 0, w = 0;
    bool is3d = false;
  };

  NetworkT<T> finish(Feat output) {
    net_.output_node = output.id;
    return std::move(net_);
  }

  // ----- placeholders
  Feat input(int64_t d, int64_t h, int64_t w) {
    Node n;
    n.kind = OpKind::input;
    n.name = "input";
    n.out_dims = {1, d, h, w};
    Feat f{push(std::move(n)), 1, d, h, w, true};
    net_.input_node = f.id;
    return f;
  }

  Feat code() {
    Node n;
    n.kind = OpKind::task_code;
    n.name = "task_code";
    n.out_dims = {cfg_.task_count};
    Feat f{push(std::move(n)), cfg_.task_count, 1, 0, 0, false};
    net_.code_node = f.id;
    return f;
  }

  // ----- primitive layers
  Feat conv3(const Feat& x, int64_t cout, std::array<int, 3> k, std::array<int, 3> s,
             std::array<int, 3> p, const std::string& name, bool with_bias = true) {
    Node n;
    n.kind = OpKind::conv3d;
    n.name = name;
    n.in = {x.id};
    n.p_kernel = param(name + ".w", kaiming({cout, x.c, k[0], k[1], k[2]},
                                            x.c * k[0] * k[1] * k[2]));
    if (with_bias) n.p_bias = param(name + ".b", TensorT<T>({cout}));
    n.stride = s;
    n.pad = p;
    Feat o;
    o.c = cout;
    o.d = (x.d + 2 * p[0] - k[0]) / s[0] + 1;
    o.h = (x.h + 2 * p[1] - k[1]) / s[1] + 1;
    o.w = (x.w + 2 * p[2] - k[2]) / s[2] + 1;
    o.is3d = true;
    n.out_dims = {o.c, o.d, o.h, o.w};
    o.id = push(std::move(n));
    return o;
  }

  Feat conv2(const Feat& x, int64_t cout, std::array<int, 2> k, std::array<int, 2> s,
             std::array<int, 2> p, const std::string& name, bool with_bias = true) {
    Node n;
    n.kind = OpKind::conv2d;
    n.name = name;
    n.in = {x.id};
    n.p_kernel = param(name + ".w", kaiming({cout, x.c, k[0], k[1]}, x.c * k[0] * k[1]));
    if (with_bias) n.p_bias = param(name + ".b", TensorT<T>({cout}));
    n.stride = {1, s[0], s[1]};
    n.pad = {0, p[0], p[1]};
    Feat o;
    o.c = cout;
    o.d = 1;
    o.h = (x.h + 2 * p[0] - k[0]) / s[0] + 1;
    o.w = (x.w + 2 * p[1] - k[1]) / s[1] + 1;
    o.is3d = false;
    n.out_dims = {o.c, o.h, o.w};
    o.id = push(std::move(n));
    return o;
  }

  Feat bn(const Feat& x, const std::string& name) {
    Node n;
    n.kind = OpKind::batch_norm;
    n.name = name;
    n.in = {x.id};
    n.p_scale = param(name + ".scale", TensorT<T>::full({x.c}, T(1)));
    n.p_shift = param(name + ".shift", TensorT<T>({x.c}));
    n.b_mean = buffer(name + ".running_mean", TensorT<T>({x.c}));
    n.b_var = buffer(name + ".running_var", TensorT<T>::full({x.c}, T(1)));
    n.out_dims = dims_of(x);
    Feat o = x;
    o.id = push(std::move(n));
    return o;
  }

  Feat relu(const Feat& x, const std::string& name) {
    Node n;
    n.kind = OpKind::relu;
    n.name = name;
    n.in = {x.id};
    n.out_dims = dims_of(x);
    Feat o = x;
    o.id = push(std::move(n));
    return o;
  }

  Feat add(const Feat& a, const Feat& b, const std::string& name) {
    Node n;
    n.kind = OpKind::add;
    n.name = name;
    n.in = {a.id, b.id};
    n.out_dims = dims_of(a);
    Feat o = a;
    o.id = push(std::move(n));
    return o;
  }

  Feat concat(const Feat& a, const Feat& b, const std::string& name) {
    Node n;
    n.kind = OpKind::concat;
    n.name = name;
    n.in = {a.id, b.id};
    Feat o = a;
    o.c = a.c + b.c;
    n.out_dims = dims_of(o);
    o.id = push(std::move(n));
    return o;
  }

  Feat concat_vec(const Feat& a, const Feat& b, const std::string& name) {
    Node n;
    n.kind = OpKind::concat;
    n.name = name;
    n.in = {a.id, b.id};
    n.out_dims = {a.c + b.c};
    Feat o{-1, a.c + b.c, 1, 0, 0, false};
    o.id = push(std::move(n));
    return o;
  }

  Feat convt3(const Feat& x, int64_t cout, std::array<int, 3> s, const std::string& name,
              TensorT<T> init_kernel = {}, bool with_bias = true) {
    Node n;
    n.kind = OpKind::conv_t3d;
    n.name = name;
    n.in = {x.id};
    if (init_kernel.empty())
      init_kernel = kaiming({x.c, cout, s[0], s[1], s[2]}, x.c);
    n.p_kernel = param(name + ".w", std::move(init_kernel));
    if (with_bias) n.p_bias = param(name + ".b", TensorT<T>({cout}));
    n.stride = s;
    Feat o;
    o.c = cout;
    o.d = x.d * s[0];
    o.h = x.h * s[1];
    o.w = x.w * s[2];
    o.is3d = true;
    n.out_dims = {o.c, o.d, o.h, o.w};
    o.id = push(std::move(n));
    return o;
  }

  Feat convt2(const Feat& x, int64_t cout, const std::string& name, bool with_bias = true) {
    Node n;
    n.kind = OpKind::conv_t2d;
    n.name = name;
    n.in = {x.id};
    n.p_kernel = param(name + ".w", kaiming({x.c, cout, 2, 2}, x.c));
    if (with_bias) n.p_bias = param(name + ".b", TensorT<T>({cout}));
    n.stride = {1, 2, 2};
    Feat o;
    o.c = cout;
    o.d = 1;
    o.h = x.h * 2;
    o.w = x.w * 2;
    o.is3d = false;
    n.out_dims = {o.c, o.h, o.w};
    o.id = push(std::move(n));
    return o;
  }

  Feat reshape(const Feat& x, Shape dims, const std::string& name) {
    Node n;
    n.kind = OpKind::reshape;
    n.name = name;
    n.in = {x.id};
    n.out_dims = dims;
    Feat o;
    o.id = -1;
    if (dims.size() == 4) {
      o = Feat{-1, dims[0], dims[1], dims[2], dims[3], true};
    } else if (dims.size() == 3) {
      o = Feat{-1, dims[0], 1, dims[1], dims[2], false};
    } else {
      o = Feat{-1, dims[0], 1, 0, 0, false};
    }
    o.id = push(std::move(n));
    return o;
  }

  Feat gap(const Feat& x, const std::string& name) {
    Node n;
    n.kind = OpKind::global_pool;
    n.name = name;
    n.in = {x.id};
    n.out_dims = {x.c};
    Feat o{-1, x.c, 1, 0, 0, false};
    o.id = push(std::move(n));
    return o;
  }

  // The controller feeds a hypernetwork: generated weights multiply
  // activations again, so a full-scale Kaiming init compounds and blows up
  // the untrained output range. Scaled down, nonzero (distinct task codes
  // must still produce distinct heads at init).
  static constexpr double kControllerInitScale = 0.05;

  Feat linear(const Feat& x, int64_t fout, const std::string& name) {
    Node n;
    n.kind = OpKind::linear;
    n.name = name;
    n.in = {x.id};
    TensorT<T> w = kaiming({fout, x.c}, x.c);
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(w[i] * kControllerInitScale);
    n.p_kernel = param(name + ".w", std::move(w));
    n.p_bias = param(name + ".b", TensorT<T>({fout}));
    n.out_dims = {fout};
    Feat o{-1, fout, 1, 0, 0, false};
    o.id = push(std::move(n));
    return o;
  }

  Feat slice(const Feat& x, int64_t lo, int64_t hi, const std::string& name) {
    Node n;
    n.kind = OpKind::slice;
    n.name = name;
    n.in = {x.id};
    n.slice_lo = lo;
    n.slice_hi = hi;
    n.out_dims = {hi - lo};
    Feat o{-1, hi - lo, 1, 0, 0, false};
    o.id = push(std::move(n));
    return o;
  }

  Feat dyn_conv(const Feat& x, const Feat& wflat, const Feat& bflat, int64_t cout,
                const std::string& name) {
    Node n;
    n.kind = OpKind::dyn_conv;
    n.name = name;
    n.in = {x.id, wflat.id, bflat.id};
    n.c_out = cout;
    Feat o = x;
    o.c = cout;
    n.out_dims = dims_of(o);
    o.id = push(std::move(n));
    return o;
  }

  // ----- composite blocks
  // [conv -> norm -> relu -> conv -> norm] + shortcut, then relu. Strided
  // convs use kernel == stride so that halving is exact; the shortcut is a
  // projection whenever channels or resolution change.
  Feat res3(const Feat& x, int64_t cout, std::array<int, 3> s, const std::string& name) {
    std::array<int, 3> ka{s[0] == 1 ? 3 : s[0], s[1] == 1 ? 3 : s[1], s[2] == 1 ? 3 : s[2]};
    std::array<int, 3> pa{s[0] == 1 ? 1 : 0, s[1] == 1 ? 1 : 0, s[2] == 1 ? 1 : 0};
    Feat a = relu(bn(conv3(x, cout, ka, s, pa, name + ".conv_a", false), name + ".bn_a"),
                  name + ".relu_a");
    Feat b = bn(conv3(a, cout, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, name + ".conv_b", false),
                name + ".bn_b");
    Feat sc = x;
    if (x.c != cout || s != std::array<int, 3>{1, 1, 1})
      sc = conv3(x, cout, {s[0], s[1], s[2]}, s, {0, 0, 0}, name + ".proj");
    return relu(add(b, sc, name + ".add"), name);
  }

  Feat res2(const Feat& x, int64_t cout, std::array<int, 2> s, const std::string& name) {
    std::array<int, 2> ka{s[0] == 1 ? 3 : s[0], s[1] == 1 ? 3 : s[1]};
    std::array<int, 2> pa{s[0] == 1 ? 1 : 0, s[1] == 1 ? 1 : 0};
    Feat a = relu(bn(conv2(x, cout, ka, s, pa, name + ".conv_a", false), name + ".bn_a"),
                  name + ".relu_a");
    Feat b = bn(conv2(a, cout, {3, 3}, {1, 1}, {1, 1}, name + ".conv_b", false), name + ".bn_b");
    Feat sc = x;
    if (x.c != cout || s != std::array<int, 2>{1, 1})
      sc = conv2(x, cout, {s[0], s[1]}, s, {0, 0}, name + ".proj");
    return relu(add(b, sc, name + ".add"), name);
  }

  // Gamma: pointwise linear projection, no norm or activation.
  Feat gamma3(const Feat& x, int64_t mu, const std::string& name) {
    return conv3(x, mu, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, name);
  }
  Feat gamma2(const Feat& x, int64_t mu, const std::string& name) {
    return conv2(x, mu, {1, 1}, {1, 1}, {0, 0}, name);
  }

  const TopologyConfig& cfg() const { return cfg_; }

 private:
  static Shape dims_of(const Feat& f) {
    if (f.is3d) return {f.c, f.d, f.h, f.w};
    if (f.h > 0) return {f.c, f.h, f.w};
    return {f.c};
  }

  int push(Node n) {
    net_.nodes.push_back(std::move(n));
    return static_cast<int>(net_.nodes.size()) - 1;
  }

  int param(const std::string& name, TensorT<T> value, bool trainable = true) {
    net_.params.emplace_back(name, std::move(value), trainable);
    return static_cast<int>(net_.params.size()) - 1;
  }

  int buffer(const std::string& name, TensorT<T> value) {
    net_.buffers.push_back(std::move(value));
    net_.buffer_names.push_back(name);
    return static_cast<int>(net_.buffers.size()) - 1;
  }

  TensorT<T> kaiming(Shape shape, int64_t fan_in) {
    Rng rng(mix_seed(seed_, 0xC0DEull + static_cast<uint64_t>(pseq_++)));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    TensorT<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(-bound, bound));
    return t;
  }

  TopologyConfig cfg_;
  uint64_t seed_;
  int pseq_ = 0;
  NetworkT<T> net_;
};

// Shared task-conditioned tail: controller -> generated two-layer 1x1 head
// applied to the penultimate decoder feature, then the static output head.
// The generated head sits on a residual junction: its 8-channel rectified
// bottleneck is the only route to the output, and once those hidden units
// die (nonnegative input, generated bias swung negative) every upstream
// gradient is zero and training is stuck for good. The bypass keeps the
// backbone trainable under any controller state; the head still modulates
// the feature per task.
template <typename T>
typename Builder<T>::Feat conditioned_head(Builder<T>& b, typename Builder<T>::Feat penult,
                                           typename Builder<T>::Feat bottleneck,
                                           typename Builder<T>::Feat code) {
  constexpr int64_t kHidden = 8;
  const int64_t cp = penult.c;
  const int64_t p_w1 = kHidden * cp, p_b1 = kHidden, p_w2 = cp * kHidden, p_b2 = cp;
  auto pooled = b.gap(bottleneck, "controller.pool");
  auto joined = b.concat_vec(pooled, code, "controller.join");
  auto ctrl = b.linear(joined, p_w1 + p_b1 + p_w2 + p_b2, "controller");
  int64_t at = 0;
  auto w1 = b.slice(ctrl, at, at + p_w1, "controller.w1");
  at += p_w1;
  auto b1 = b.slice(ctrl, at, at + p_b1, "controller.b1");
  at += p_b1;
  auto w2 = b.slice(ctrl, at, at + p_w2, "controller.w2");
  at += p_w2;
  auto b2 = b.slice(ctrl, at, at + p_b2, "controller.b2");
  auto h1 = b.relu(b.dyn_conv(penult, w1, b1, kHidden, "dyn_head.1"), "dyn_head.relu");
  auto h2 = b.dyn_conv(h1, w2, b2, cp, "dyn_head.2");
  return b.add(h2, penult, "dyn_head.residual");
}

template <typename T>
NetworkT<T> build_pure3d(Builder<T>& b) {
  const auto& cfg = b.cfg();
  const auto ce = cfg.encoder_channels;
  const int64_t dn = cfg.net_input_depth();
  const auto dl = depth_ladder(dn);

  auto x = b.input(dn, cfg.patch_h, cfg.patch_w);
  auto code = b.code();

  std::array<typename Builder<T>::Feat, 5> enc;
  auto cur = x;
  for (int k = 0; k < 5; ++k) {
    std::array<int, 3> s{1, 1, 1};
    if (k > 0) s = {dl[static_cast<size_t>(k - 1)] == dl[static_cast<size_t>(k)] ? 1 : 2, 2, 2};
    cur = b.res3(cur, ce[static_cast<size_t>(k)], s, "enc" + std::to_string(k + 1));
    enc[static_cast<size_t>(k)] = cur;
  }

  auto d = enc[4];
  for (int k = 3; k >= 0; --k) {
    const int uz = dl[static_cast<size_t>(k)] == dl[static_cast<size_t>(k + 1)] ? 1 : 2;
    auto up = b.bn(b.convt3(d, ce[static_cast<size_t>(k)], {uz, 2, 2},
                            "dec" + std::to_string(k + 1) + ".up", {}, false),
                   "dec" + std::to_string(k + 1) + ".up_bn");
    auto cat = b.concat(up, enc[static_cast<size_t>(k)], "dec" + std::to_string(k + 1) + ".cat");
    d = b.res3(cat, ce[static_cast<size_t>(k)], {1, 1, 1}, "dec" + std::to_string(k + 1));
  }

  auto head_in = conditioned_head(b, d, enc[4], code);
  auto out = b.conv3(head_in, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, "head");
  if (cfg.interp == InterpKind::postfix) {
    out = b.convt3(out, 1, {cfg.ratio, 1, 1}, "zup",
                   replicate_upsampler_kernel<T>(cfg.ratio, 1));
  }
  return b.finish(out);
}

template <typename T>
NetworkT<T> build_pure2d(Builder<T>& b) {
  const auto& cfg = b.cfg();
  const auto ce = cfg.encoder_channels;
  const int64_t dn = cfg.net_input_depth();

  auto x = b.input(dn, cfg.patch_h, cfg.patch_w);
  auto code = b.code();
  auto folded = b.reshape(x, {dn, cfg.patch_h, cfg.patch_w}, "fold_input");

  std::array<typename Builder<T>::Feat, 5> enc;
  auto cur = folded;
  for (int k = 0; k < 5; ++k) {
    std::array<int, 2> s = k == 0 ? std::array<int, 2>{1, 1} : std::array<int, 2>{2, 2};
    cur = b.res2(cur, ce[static_cast<size_t>(k)], s, "enc" + std::to_string(k + 1));
    enc[static_cast<size_t>(k)] = cur;
  }

  auto d = enc[4];
  for (int k = 3; k >= 0; --k) {
    auto up = b.bn(b.convt2(d, ce[static_cast<size_t>(k)], "dec" + std::to_string(k + 1) + ".up",
                            false),
                   "dec" + std::to_string(k + 1) + ".up_bn");
    auto cat = b.concat(up, enc[static_cast<size_t>(k)], "dec" + std::to_string(k + 1) + ".cat");
    d = b.res2(cat, ce[static_cast<size_t>(k)], {1, 1}, "dec" + std::to_string(k + 1));
  }

  auto head_in = conditioned_head(b, d, enc[4], code);
  const int64_t z_out = cfg.interp == InterpKind::postfix ? cfg.patch_z / cfg.ratio : cfg.patch_z;
  auto head = b.conv2(head_in, z_out, {1, 1}, {1, 1}, {0, 0}, "head");
  auto out = b.reshape(head, {1, z_out, cfg.patch_h, cfg.patch_w}, "unfold_output");
  if (cfg.interp == InterpKind::postfix) {
    out = b.convt3(out, 1, {cfg.ratio, 1, 1}, "zup",
                   replicate_upsampler_kernel<T>(cfg.ratio, 1));
  }
  return b.finish(out);
}

template <typename T>
NetworkT<T> build_hybrid_3to2d(Builder<T>& b) {
  const auto& cfg = b.cfg();
  const auto ce = cfg.encoder_channels;
  const int64_t dn = cfg.net_input_depth();
  const auto dl = depth_ladder(dn);
  const int64_t u = cfg.u_dim;

  auto x = b.input(dn, cfg.patch_h, cfg.patch_w);
  auto code = b.code();

  std::array<typename Builder<T>::Feat, 5> enc;
  auto cur = x;
  for (int k = 0; k < 5; ++k) {
    std::array<int, 3> s{1, 1, 1};
    if (k > 0) s = {dl[static_cast<size_t>(k - 1)] == dl[static_cast<size_t>(k)] ? 1 : 2, 2, 2};
    cur = b.res3(cur, ce[static_cast<size_t>(k)], s, "enc" + std::to_string(k + 1));
    enc[static_cast<size_t>(k)] = cur;
  }

  // depth-to-channel transform at every level: all skips land on U channels.
  std::array<typename Builder<T>::Feat, 5> skip;
  for (int k = 0; k < 5; ++k) {
    const auto& e = enc[static_cast<size_t>(k)];
    const std::string name = "d2c" + std::to_string(k + 1);
    const auto spec = resolve_projection(TransformRoute::depth_to_channel, cfg.projection_space,
                                         u, e.c, e.d);
    if (cfg.projection_space == ProjectionSpace::embed3d) {
      auto proj = b.gamma3(e, spec.mu, name + ".gamma");
      skip[static_cast<size_t>(k)] = b.reshape(proj, {u, e.h, e.w}, name);
    } else {
      auto folded = b.reshape(e, {e.c * e.d, e.h, e.w}, name + ".fold");
      skip[static_cast<size_t>(k)] = b.gamma2(folded, spec.mu, name);
    }
  }

  auto d = skip[4];
  for (int k = 3; k >= 0; --k) {
    auto up = b.bn(b.convt2(d, u, "dec" + std::to_string(k + 1) + ".up", false),
                   "dec" + std::to_string(k + 1) + ".up_bn");
    auto cat = b.concat(up, skip[static_cast<size_t>(k)], "dec" + std::to_string(k + 1) + ".cat");
    d = b.res2(cat, u, {1, 1}, "dec" + std::to_string(k + 1));
  }

  auto head_in = conditioned_head(b, d, enc[4], code);
  const int64_t z_out = cfg.interp == InterpKind::postfix ? cfg.patch_z / cfg.ratio : cfg.patch_z;
  auto head = b.conv2(head_in, z_out, {1, 1}, {1, 1}, {0, 0}, "head");
  auto out = b.reshape(head, {1, z_out, cfg.patch_h, cfg.patch_w}, "unfold_output");
  if (cfg.interp == InterpKind::postfix) {
    out = b.convt3(out, 1, {cfg.ratio, 1, 1}, "zup",
                   replicate_upsampler_kernel<T>(cfg.ratio, 1));
  }
  return b.finish(out);
}

template <typename T>
NetworkT<T> build_hybrid_2to3d(Builder<T>& b) {
  const auto& cfg = b.cfg();
  const auto ce = cfg.encoder_channels;
  const int64_t dn = cfg.net_input_depth();
  const auto dl = depth_ladder(dn);
  const int64_t u = cfg.u_dim;

  auto x = b.input(dn, cfg.patch_h, cfg.patch_w);
  auto code = b.code();
  auto folded = b.reshape(x, {dn, cfg.patch_h, cfg.patch_w}, "fold_input");

  std::array<typename Builder<T>::Feat, 5> enc;
  auto cur = folded;
  for (int k = 0; k < 5; ++k) {
    std::array<int, 2> s = k == 0 ? std::array<int, 2>{1, 1} : std::array<int, 2>{2, 2};
    cur = b.res2(cur, ce[static_cast<size_t>(k)], s, "enc" + std::to_string(k + 1));
    enc[static_cast<size_t>(k)] = cur;
  }

  // channel-to-depth at every level rebuilds a 3D ladder; the 3D decoder
  // then runs at the transformed widths U/D_k.
  std::array<typename Builder<T>::Feat, 5> skip;
  for (int k = 0; k < 5; ++k) {
    const auto& e = enc[static_cast<size_t>(k)];
    const int64_t dt = dl[static_cast<size_t>(k)];
    const std::string name = "c2d" + std::to_string(k + 1);
    const auto spec = resolve_projection(TransformRoute::channel_to_depth, cfg.projection_space,
                                         u, e.c, dt);
    if (cfg.projection_space == ProjectionSpace::embed3d) {
      auto lifted = b.reshape(e, {e.c / dt, dt, e.h, e.w}, name + ".lift");
      skip[static_cast<size_t>(k)] = b.gamma3(lifted, spec.mu, name);
    } else {
      auto proj = b.gamma2(e, spec.mu, name + ".gamma");
      skip[static_cast<size_t>(k)] = b.reshape(proj, {u / dt, dt, e.h, e.w}, name);
    }
  }

  auto d = skip[4];
  for (int k = 3; k >= 0; --k) {
    const int uz = dl[static_cast<size_t>(k)] == dl[static_cast<size_t>(k + 1)] ? 1 : 2;
    const int64_t cout = u / dl[static_cast<size_t>(k)];
    auto up = b.bn(b.convt3(d, cout, {uz, 2, 2}, "dec" + std::to_string(k + 1) + ".up", {},
                            false),
                   "dec" + std::to_string(k + 1) + ".up_bn");
    auto cat = b.concat(up, skip[static_cast<size_t>(k)], "dec" + std::to_string(k + 1) + ".cat");
    d = b.res3(cat, cout, {1, 1, 1}, "dec" + std::to_string(k + 1));
  }

  auto head_in = conditioned_head(b, d, enc[4], code);
  auto out = b.conv3(head_in, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, "head");
  if (cfg.interp == InterpKind::postfix) {
    out = b.convt3(out, 1, {cfg.ratio, 1, 1}, "zup",
                   replicate_upsampler_kernel<T>(cfg.ratio, 1));
  }
  return b.finish(out);
}

}  // namespace

template <typename T>
NetworkT<T> build_network_t(const TopologyConfig& cfg, uint64_t init_seed) {
  validate_topology(cfg);
  Builder<T> b(cfg, init_seed);
  NetworkT<T> net;
  switch (cfg.kind) {
    case TopologyKind::pure3d: net = build_pure3d(b); break;
    case TopologyKind::pure2d: net = build_pure2d(b); break;
    case TopologyKind::hybrid_3to2d: net = build_hybrid_3to2d(b); break;
    case TopologyKind::hybrid_2to3d: net = build_hybrid_2to3d(b); break;
  }
  const Node& out = net.nodes[static_cast<size_t>(net.output_node)];
  const Shape want{1, cfg.patch_z, cfg.patch_h, cfg.patch_w};
  check(out.out_dims == want, errc::contract,
        "built network output " + shape_str(out.out_dims) + " does not match target grid " +
            shape_str(want));
  return net;
}

template NetworkT<float> build_network_t<float>(const TopologyConfig&, uint64_t);
template NetworkT<double> build_network_t<double>(const TopologyConfig&, uint64_t);

}  // namespace ssp
