#pragma once

// Depth <-> channel dimension transforms. The reshape steps are pure
// row-major reinterpretations (depth varies fastest inside a folded channel
// block), so slice j of a folded feature is the channel run [m*D+j for all m].
// The projection Gamma is a linear 1x1(x1) convolution, applied in 3D space
// before the fold (embed3d) or in 2D space after it (embed2d).

#include "sspnet/ops.hpp"
#include "sspnet/tensor.hpp"

namespace ssp {

enum class ProjectionSpace { embed2d, embed3d };
enum class TransformRoute { depth_to_channel, channel_to_depth };

const char* projection_space_name(ProjectionSpace s);
ProjectionSpace parse_projection_space(const std::string& s);

struct ProjectionSpec {
  TransformRoute route = TransformRoute::depth_to_channel;
  ProjectionSpace space = ProjectionSpace::embed3d;
  int64_t u = 0;       // uniform embedding channels
  int64_t lambda = 0;  // Gamma input channels
  int64_t mu = 0;      // Gamma output channels
};

// Computes (lambda, mu) for a feature with C channels and depth D (the
// target depth for channel_to_depth). Throws errc::config naming U, D and C
// when a divisibility requirement fails.
ProjectionSpec resolve_projection(TransformRoute route, ProjectionSpace space, int64_t u,
                                  int64_t c, int64_t d);

// [N,C,D,H,W] -> [N,U,H,W]; gamma_w is the Gamma kernel as a [mu,lambda]
// matrix, gamma_b its bias [mu].
template <typename T>
TensorT<T> depth_to_channel(const TensorT<T>& x, const TensorT<T>& gamma_w,
                            const TensorT<T>& gamma_b, const ProjectionSpec& spec);

// [N,C,H,W] -> [N,U/D,D,H,W]
template <typename T>
TensorT<T> channel_to_depth(const TensorT<T>& x, const TensorT<T>& gamma_w,
                            const TensorT<T>& gamma_b, const ProjectionSpec& spec,
                            int64_t d_target);

// [N,1,D,H,W] <-> [N,D,H,W]: pure reinterpretation, channel extent must be 1.
template <typename T>
TensorT<T> fold_input_to_2d(const TensorT<T>& x);
template <typename T>
TensorT<T> unfold_output_to_3d(const TensorT<T>& x);

#define SSPNET_DIMT_EXTERN(T)                                                               \
  extern template TensorT<T> depth_to_channel<T>(const TensorT<T>&, const TensorT<T>&,     \
                                                 const TensorT<T>&, const ProjectionSpec&);\
  extern template TensorT<T> channel_to_depth<T>(const TensorT<T>&, const TensorT<T>&,     \
                                                 const TensorT<T>&, const ProjectionSpec&, \
                                                 int64_t);                                 \
  extern template TensorT<T> fold_input_to_2d<T>(const TensorT<T>&);                       \
  extern template TensorT<T> unfold_output_to_3d<T>(const TensorT<T>&);

SSPNET_DIMT_EXTERN(float)
SSPNET_DIMT_EXTERN(double)
#undef SSPNET_DIMT_EXTERN

}  // namespace ssp
