#include "sspnet/profiler.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ssp {

namespace {

int64_t node_macs(const Network& net, const Node& node) {
  auto in_dims = [&](int slot) -> const Shape& {
    return net.nodes[static_cast<size_t>(node.in[static_cast<size_t>(slot)])].out_dims;
  };
  switch (node.kind) {
    case OpKind::conv2d:
    case OpKind::conv3d: {
      const auto& w = net.params[static_cast<size_t>(node.p_kernel)].value.shape();
      int64_t taps = 1;
      for (size_t i = 2; i < w.size(); ++i) taps *= w[i];
      return node.out_elems() * w[1] * taps;  // out_elems * C_in * prod(kernel)
    }
    case OpKind::conv_t2d:
    case OpKind::conv_t3d: {
      // kernel == stride: exactly one tap lands on each output element,
      // so the equivalent forward count is out_elems * C_in.
      const auto& w = net.params[static_cast<size_t>(node.p_kernel)].value.shape();
      return node.out_elems() * w[0];
    }
    case OpKind::linear: {
      const auto& w = net.params[static_cast<size_t>(node.p_kernel)].value.shape();
      return w[0] * w[1];
    }
    case OpKind::dyn_conv:
      return node.out_elems() * in_dims(0)[0];  // 1x1 generated conv
    default:
      return 0;  // norm / relu / reshape / concat / pool / slice move data only
  }
}

int64_t node_params(const Network& net, const Node& node) {
  int64_t n = 0;
  for (int pid : {node.p_kernel, node.p_bias, node.p_scale, node.p_shift})
    if (pid >= 0) n += net.params[static_cast<size_t>(pid)].value.numel();
  return n;
}

}  // namespace

ResourceReport count_resources(const Network& net, const TopologyConfig& cfg) {
  ResourceReport rep;
  rep.kind = cfg.kind;
  rep.input_dims = net.nodes[static_cast<size_t>(net.input_node)].out_dims;

  // last consumer per value; the network output stays live to the end
  std::vector<size_t> last_use(net.nodes.size(), 0);
  for (size_t id = 0; id < net.nodes.size(); ++id)
    for (int in : net.nodes[id].in) last_use[static_cast<size_t>(in)] = id;
  last_use[static_cast<size_t>(net.output_node)] = net.nodes.size();

  int64_t live_bytes = 0;
  for (size_t id = 0; id < net.nodes.size(); ++id) {
    const Node& node = net.nodes[id];
    ResourceRow row;
    row.name = node.name;
    row.macs = node_macs(net, node);
    row.params = node_params(net, node);
    row.out_elems = node.out_elems();
    rep.total_macs += row.macs;
    rep.total_params += row.params;
    if (row.macs > 0 || row.params > 0) rep.rows.push_back(row);

    live_bytes += node.out_elems() * static_cast<int64_t>(sizeof(float));
    rep.peak_activation_bytes = std::max(rep.peak_activation_bytes, live_bytes);
    for (int in : node.in)
      if (last_use[static_cast<size_t>(in)] == id)
        live_bytes -= net.nodes[static_cast<size_t>(in)].out_elems() *
                      static_cast<int64_t>(sizeof(float));
  }
  return rep;
}

std::string render_table(const ResourceReport& rep) {
  size_t name_w = 5;
  for (const auto& r : rep.rows) name_w = std::max(name_w, r.name.size());
  std::ostringstream os;
  os << "topology: " << topology_kind_name(rep.kind) << "  input: " << shape_str(rep.input_dims)
     << "\n";
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "layer" << std::right
     << std::setw(16) << "MACs" << std::setw(14) << "params" << std::setw(14) << "out elems"
     << "\n";
  for (const auto& r : rep.rows)
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << r.name << std::right
       << std::setw(16) << r.macs << std::setw(14) << r.params << std::setw(14) << r.out_elems
       << "\n";
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "total" << std::right
     << std::setw(16) << rep.total_macs << std::setw(14) << rep.total_params << "\n";
  os << "total MACs: " << std::fixed << std::setprecision(3)
     << static_cast<double>(rep.total_macs) / 1e9 << " G\n";
  os << "peak activations: " << std::fixed << std::setprecision(1)
     << static_cast<double>(rep.peak_activation_bytes) / (1024.0 * 1024.0) << " MiB\n";
  return os.str();
}

std::string report_to_json(const ResourceReport& rep) {
  nlohmann::json j;
  j["topology"] = topology_kind_name(rep.kind);
  j["input_dims"] = rep.input_dims;
  j["total_macs"] = rep.total_macs;
  j["total_params"] = rep.total_params;
  j["peak_activation_bytes"] = rep.peak_activation_bytes;
  auto& rows = j["layers"] = nlohmann::json::array();
  for (const auto& r : rep.rows)
    rows.push_back(
        {{"name", r.name}, {"macs", r.macs}, {"params", r.params}, {"out_elems", r.out_elems}});
  return j.dump(2);
}

}  // namespace ssp
