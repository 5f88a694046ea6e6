#include "sspnet/dim_transform.hpp"

namespace ssp {

const char* projection_space_name(ProjectionSpace s) {
  return s == ProjectionSpace::embed2d ? "embed2d" : "embed3d";
}

ProjectionSpace parse_projection_space(const std::string& s) {
  if (s == "embed2d") return ProjectionSpace::embed2d;
  if (s == "embed3d") return ProjectionSpace::embed3d;
  fail(errc::config, "unknown projection space '" + s + "' (expected embed2d|embed3d)");
}

namespace {

void require_divides(int64_t num, int64_t div, const char* what, int64_t u, int64_t c, int64_t d) {
  check(div > 0 && num % div == 0, errc::config,
        std::string(what) + ": " + std::to_string(num) + " is not divisible by " +
            std::to_string(div) + " (U=" + std::to_string(u) + ", D=" + std::to_string(d) +
            ", C=" + std::to_string(c) + ")");
}

}  // namespace

ProjectionSpec resolve_projection(TransformRoute route, ProjectionSpace space, int64_t u,
                                  int64_t c, int64_t d) {
  check(u >= 1 && c >= 1 && d >= 1, errc::config, "projection dims must be positive");
  ProjectionSpec spec;
  spec.route = route;
  spec.space = space;
  spec.u = u;
  if (route == TransformRoute::depth_to_channel) {
    if (space == ProjectionSpace::embed3d) {
      require_divides(u, d, "depth_to_channel/embed3d needs U divisible by D", u, c, d);
      spec.lambda = c;
      spec.mu = u / d;
    } else {
      spec.lambda = c * d;
      spec.mu = u;
    }
  } else {
    if (space == ProjectionSpace::embed3d) {
      require_divides(c, d, "channel_to_depth/embed3d needs C divisible by D_target", u, c, d);
      require_divides(u, d, "channel_to_depth/embed3d needs U divisible by D_target", u, c, d);
      spec.lambda = c / d;
      spec.mu = u / d;
    } else {
      require_divides(u, d, "channel_to_depth/embed2d needs U divisible by D_target", u, c, d);
      spec.lambda = c;
      spec.mu = u;
    }
  }
  return spec;
}

namespace {

// Gamma as a pointwise conv: x [N,Cin,M_spatial...] with w [mu,lambda].
template <typename T>
TensorT<T> project(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b, bool is3d) {
  if (is3d) {
    return conv3d_forward<T>(x, w.reshaped({w.dim(0), w.dim(1), 1, 1, 1}), b, {1, 1, 1},
                             {0, 0, 0});
  }
  return conv2d_forward<T>(x, w.reshaped({w.dim(0), w.dim(1), 1, 1}), b, {1, 1}, {0, 0});
}

}  // namespace

template <typename T>
TensorT<T> depth_to_channel(const TensorT<T>& x, const TensorT<T>& gamma_w,
                            const TensorT<T>& gamma_b, const ProjectionSpec& spec) {
  check(x.rank() == 5, errc::contract, "depth_to_channel expects [N,C,D,H,W]");
  const int64_t n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  check(gamma_w.rank() == 2 && gamma_w.dim(0) == spec.mu && gamma_w.dim(1) == spec.lambda,
        errc::contract, "Gamma kernel must be [mu,lambda], got " + shape_str(gamma_w.shape()));
  if (spec.space == ProjectionSpace::embed3d) {
    check(spec.lambda == c, errc::config, "depth_to_channel/embed3d expects lambda == C");
    TensorT<T> proj = project(x, gamma_w, gamma_b, /*is3d=*/true);  // [N,mu,D,H,W]
    return std::move(proj).reshaped({n, spec.mu * d, h, w});
  }
  check(spec.lambda == c * d, errc::config, "depth_to_channel/embed2d expects lambda == C*D");
  TensorT<T> folded = x.reshaped({n, c * d, h, w});
  return project(folded, gamma_w, gamma_b, /*is3d=*/false);  // [N,U,H,W]
}

template <typename T>
TensorT<T> channel_to_depth(const TensorT<T>& x, const TensorT<T>& gamma_w,
                            const TensorT<T>& gamma_b, const ProjectionSpec& spec,
                            int64_t d_target) {
  check(x.rank() == 4, errc::contract, "channel_to_depth expects [N,C,H,W]");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check(gamma_w.rank() == 2 && gamma_w.dim(0) == spec.mu && gamma_w.dim(1) == spec.lambda,
        errc::contract, "Gamma kernel must be [mu,lambda], got " + shape_str(gamma_w.shape()));
  if (spec.space == ProjectionSpace::embed3d) {
    check(c % d_target == 0 && spec.lambda == c / d_target, errc::config,
          "channel_to_depth/embed3d expects lambda == C/D_target");
    TensorT<T> lifted = x.reshaped({n, c / d_target, d_target, h, w});
    return project(lifted, gamma_w, gamma_b, /*is3d=*/true);  // [N,U/D,D,H,W]
  }
  check(spec.lambda == c, errc::config, "channel_to_depth/embed2d expects lambda == C");
  TensorT<T> proj = project(x, gamma_w, gamma_b, /*is3d=*/false);  // [N,U,H,W]
  return std::move(proj).reshaped({n, spec.u / d_target, d_target, h, w});
}

template <typename T>
TensorT<T> fold_input_to_2d(const TensorT<T>& x) {
  check(x.rank() == 5, errc::contract, "fold_input_to_2d expects [N,1,D,H,W]");
  check(x.dim(1) == 1, errc::contract,
        "fold_input_to_2d requires channel extent 1, got " + shape_str(x.shape()));
  return x.reshaped({x.dim(0), x.dim(2), x.dim(3), x.dim(4)});
}

template <typename T>
TensorT<T> unfold_output_to_3d(const TensorT<T>& x) {
  check(x.rank() == 4, errc::contract, "unfold_output_to_3d expects [N,D,H,W]");
  return x.reshaped({x.dim(0), 1, x.dim(1), x.dim(2), x.dim(3)});
}

#define SSPNET_DIMT_INSTANTIATE(T)                                                         \
  template TensorT<T> depth_to_channel<T>(const TensorT<T>&, const TensorT<T>&,            \
                                          const TensorT<T>&, const ProjectionSpec&);       \
  template TensorT<T> channel_to_depth<T>(const TensorT<T>&, const TensorT<T>&,            \
                                          const TensorT<T>&, const ProjectionSpec&,        \
                                          int64_t);                                        \
  template TensorT<T> fold_input_to_2d<T>(const TensorT<T>&);                              \
  template TensorT<T> unfold_output_to_3d<T>(const TensorT<T>&);

SSPNET_DIMT_INSTANTIATE(float)
SSPNET_DIMT_INSTANTIATE(double)
#undef SSPNET_DIMT_INSTANTIATE

}  // namespace ssp
