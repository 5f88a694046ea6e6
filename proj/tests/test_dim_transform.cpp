#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "sspnet/dim_transform.hpp"
#include "sspnet/gradcheck.hpp"

using namespace ssp;
using namespace ssp::testing;

namespace {

double weighted_sum(const Tensor64& t, const Tensor64& r) {
  double acc = 0;
  for (int64_t i = 0; i < t.numel(); ++i) acc += t[i] * r[i];
  return acc;
}

// identity Gamma: square [c,c] identity matrix
template <typename T>
TensorT<T> identity_gamma(int64_t c) {
  TensorT<T> w({c, c});
  for (int64_t i = 0; i < c; ++i) w[i * c + i] = T(1);
  return w;
}

}  // namespace

TEST_SUITE_BEGIN("dim-transform");

TEST_CASE("projection channel arithmetic matches the worked bottleneck example") {
  // C=256, D=2, U=256, embed3d: lambda=256, mu=128
  auto spec = resolve_projection(TransformRoute::depth_to_channel, ProjectionSpace::embed3d, 256,
                                 256, 2);
  CHECK(spec.lambda == 256);
  CHECK(spec.mu == 128);

  // C=32, D=4, U=256, embed3d: mu = 64, folded channels mu*D = 256
  auto s2 = resolve_projection(TransformRoute::depth_to_channel, ProjectionSpace::embed3d, 256,
                               32, 4);
  CHECK(s2.mu == 64);
  CHECK(s2.mu * 4 == 256);

  // U=256 with D=3 cannot split evenly
  CHECK_THROWS_AS((void)resolve_projection(TransformRoute::depth_to_channel,
                                           ProjectionSpace::embed3d, 256, 32, 3),
                  error);
  try {
    (void)resolve_projection(TransformRoute::depth_to_channel, ProjectionSpace::embed3d, 256, 32,
                             3);
  } catch (const error& e) {
    CHECK(e.code() == errc::config);
    const std::string msg = e.what();
    CHECK(msg.find("U=256") != std::string::npos);
    CHECK(msg.find("D=3") != std::string::npos);
    CHECK(msg.find("C=32") != std::string::npos);
  }

  // embed2d depth_to_channel: lambda = C*D, mu = U
  auto s3 = resolve_projection(TransformRoute::depth_to_channel, ProjectionSpace::embed2d, 256,
                               64, 4);
  CHECK(s3.lambda == 256);
  CHECK(s3.mu == 256);

  // channel_to_depth embed3d needs C and U divisible by D_target
  CHECK_THROWS_AS((void)resolve_projection(TransformRoute::channel_to_depth,
                                           ProjectionSpace::embed3d, 16, 10, 4),
                  error);
  auto s4 = resolve_projection(TransformRoute::channel_to_depth, ProjectionSpace::embed3d, 16, 8,
                               4);
  CHECK(s4.lambda == 2);
  CHECK(s4.mu == 4);
}

TEST_CASE("depth_to_channel embed3d output has exactly U channels") {
  const int64_t c = 6, d = 4, u = 8;
  auto spec = resolve_projection(TransformRoute::depth_to_channel, ProjectionSpace::embed3d, u, c,
                                 d);
  Tensor x = rand_tensor<float>({2, c, d, 3, 3}, 1);
  Tensor gw = rand_tensor<float>({spec.mu, spec.lambda}, 2);
  Tensor gb = rand_tensor<float>({spec.mu}, 3);
  Tensor y = depth_to_channel(x, gw, gb, spec);
  CHECK(y.shape() == Shape{2, u, 3, 3});
}

TEST_CASE("embed2d fold order is depth-fastest (slice j = channel block stride arithmetic)") {
  // with identity Gamma over folded channels, output channel m*D + j must
  // equal input (channel m, slice j)
  const int64_t c = 3, d = 2;
  auto spec = resolve_projection(TransformRoute::depth_to_channel, ProjectionSpace::embed2d,
                                 c * d, c, d);
  Tensor x = rand_tensor<float>({1, c, d, 4, 4}, 4);
  Tensor y = depth_to_channel(x, identity_gamma<float>(c * d), Tensor({c * d}), spec);
  CHECK(y.shape() == Shape{1, c * d, 4, 4});
  for (int64_t m = 0; m < c; ++m)
    for (int64_t j = 0; j < d; ++j)
      for (int64_t p = 0; p < 16; ++p)
        CHECK(y[(m * d + j) * 16 + p] == x[(m * d + j) * 16 + p]);  // pure reinterpretation
}

TEST_CASE("channel_to_depth then depth_to_channel with identity Gamma is the identity") {
  const int64_t c = 8, d = 4;
  auto down = resolve_projection(TransformRoute::channel_to_depth, ProjectionSpace::embed2d, c, c,
                                 d);
  auto up = resolve_projection(TransformRoute::depth_to_channel, ProjectionSpace::embed2d, c,
                               c / d, d);
  Tensor x = rand_tensor<float>({2, c, 5, 5}, 5);
  Tensor mid = channel_to_depth(x, identity_gamma<float>(c), Tensor({c}), down, d);
  CHECK(mid.shape() == Shape{2, c / d, d, 5, 5});
  Tensor back = depth_to_channel(mid, identity_gamma<float>(c), Tensor({c}), up);
  CHECK(back.shape() == x.shape());
  CHECK(back.vec() == x.vec());  // bit-exact reshape round-trip
}

TEST_CASE("channel_to_depth examples") {
  // C=256, D_target=2, U=256, embed2d -> output 128 x 2 x H x W
  auto spec = resolve_projection(TransformRoute::channel_to_depth, ProjectionSpace::embed2d, 256,
                                 256, 2);
  Tensor x = rand_tensor<float>({1, 256, 4, 4}, 6);
  Tensor gw = rand_tensor<float>({spec.mu, spec.lambda}, 7);
  Tensor y = channel_to_depth(x, gw, Tensor({spec.mu}), spec, 2);
  CHECK(y.shape() == Shape{1, 128, 2, 4, 4});

  // C=10, D_target=4, embed3d -> configuration error
  CHECK_THROWS_AS((void)resolve_projection(TransformRoute::channel_to_depth,
                                           ProjectionSpace::embed3d, 16, 10, 4),
                  error);
}

TEST_CASE("element count arithmetic of every route") {
  // projection changes channels by design; the reshapes are bijections, so
  // out elements = N * U * H * W (d2c) and N * (U/D) * D * H * W (c2d)
  for (auto space : {ProjectionSpace::embed2d, ProjectionSpace::embed3d}) {
    const int64_t c = 8, d = 2, u = 16;
    auto spec = resolve_projection(TransformRoute::depth_to_channel, space, u, c, d);
    Tensor x = rand_tensor<float>({1, c, d, 3, 3}, 8);
    Tensor gw = rand_tensor<float>({spec.mu, spec.lambda}, 9);
    Tensor y = depth_to_channel(x, gw, Tensor({spec.mu}), spec);
    CHECK(y.numel() == 1 * u * 3 * 3);
  }
}

TEST_CASE("fold / unfold are rank changes only") {
  Tensor x = rand_tensor<float>({1, 1, 32, 8, 8}, 10);
  Tensor folded = fold_input_to_2d(x);
  CHECK(folded.shape() == Shape{1, 32, 8, 8});
  CHECK(folded.vec() == x.vec());
  Tensor back = unfold_output_to_3d(folded);
  CHECK(back.shape() == x.shape());
  CHECK(back.vec() == x.vec());

  Tensor bad = rand_tensor<float>({1, 2, 4, 4, 4}, 11);
  CHECK_THROWS_AS((void)fold_input_to_2d(bad), error);
}

TEST_CASE("gradients flow through both routes (64-bit)") {
  // composite: channel_to_depth . relu . depth_to_channel
  const int64_t c = 6, d = 3, u = 6;
  auto d2c = resolve_projection(TransformRoute::depth_to_channel, ProjectionSpace::embed3d, u, c,
                                d);
  Tensor64 x = rand_tensor<double>({1, c, d, 4, 4}, 12);
  Tensor64 gw = rand_tensor<double>({d2c.mu, d2c.lambda}, 13);
  Tensor64 gb = rand_tensor<double>({d2c.mu}, 14);

  Tensor64 y = depth_to_channel(x, gw, gb, d2c);
  Tensor64 r = randn_tensor<double>(y.shape(), 15);

  // analytic gradients via the underlying conv backward
  Tensor64 gy5 = r.reshaped({1, d2c.mu, d, 4, 4});
  auto g = conv3d_backward(x, gw.reshaped({d2c.mu, d2c.lambda, 1, 1, 1}), gy5, {1, 1, 1},
                           {0, 0, 0});
  Tensor64 gw_flat = g.w.reshaped({d2c.mu, d2c.lambda});
  auto loss = [&] { return weighted_sum(depth_to_channel(x, gw, gb, d2c), r); };
  auto res = grad_check(loss, {{&x, &g.x}, {&gw, &gw_flat}, {&gb, &g.b}}, 1e-5);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_SUITE_END();
