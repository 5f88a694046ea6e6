#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>
#include <thread>

#include "helpers.hpp"
#include "sspnet/adam.hpp"
#include "sspnet/gradcheck.hpp"
#include "sspnet/ops.hpp"
#include "sspnet/parallel.hpp"

using namespace ssp;
using namespace ssp::testing;

namespace {

double weighted_sum(const Tensor64& t, const Tensor64& r) {
  double acc = 0;
  for (int64_t i = 0; i < t.numel(); ++i) acc += t[i] * r[i];
  return acc;
}

float weighted_sum32(const Tensor& t, const Tensor& r) {
  double acc = 0;
  for (int64_t i = 0; i < t.numel(); ++i) acc += static_cast<double>(t[i]) * r[i];
  return static_cast<float>(acc);
}

}  // namespace

TEST_SUITE_BEGIN("tensor-core");

TEST_CASE("tensor shape invariants") {
  Tensor t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK_THROWS_AS((void)Tensor({0, 3}), error);
  CHECK_THROWS_AS((void)Tensor({1, 2, 3, 4, 5, 6}), error);
  CHECK_THROWS_AS((void)t.reshaped({5, 5}), error);

  // reshape . reshape back to the original shape is the identity
  Tensor r = rand_tensor<float>({2, 3, 4, 5}, 11);
  Tensor back = r.reshaped({6, 20}).reshaped({2, 3, 4, 5});
  CHECK(back.vec() == r.vec());
}

TEST_CASE("conv2d identity kernel") {
  Tensor x = rand_tensor<float>({1, 1, 4, 4}, 1);
  Tensor w = Tensor::full({1, 1, 1, 1}, 1.0f);
  Tensor b({1});
  Tensor y = conv2d_forward(x, w, b, 1, 0);
  CHECK(y.shape() == x.shape());
  CHECK(y.vec() == x.vec());
}

TEST_CASE("conv2d all-ones 3x3 on constant input counts valid taps") {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor b({1});
  Tensor y = conv2d_forward(x, w, b, 1, 1);
  CHECK(y.dim(2) == 3);
  CHECK(y[4] == doctest::Approx(9.0f));  // center: all nine taps valid
  CHECK(y[0] == doctest::Approx(4.0f));  // corner: four valid taps
  CHECK(y[2] == doctest::Approx(4.0f));
  CHECK(y[6] == doctest::Approx(4.0f));
  CHECK(y[8] == doctest::Approx(4.0f));
}

TEST_CASE("conv2d rejects bad geometry with axis name") {
  Tensor x = rand_tensor<float>({1, 2, 6, 5}, 2);
  Tensor w = rand_tensor<float>({3, 2, 3, 3}, 3);
  Tensor b({3});
  // (6 + 2*1 - 3) is not divisible by stride 2 -> H' is not integral
  CHECK_THROWS_WITH_AS((void)conv2d_forward(x, w, b, {2, 1}, {1, 1}),
                       doctest::Contains("along H"), error);
  Tensor wbad = rand_tensor<float>({3, 4, 3, 3}, 3);
  CHECK_THROWS_WITH_AS((void)conv2d_forward(x, wbad, b, 1, 1), doctest::Contains("channel"),
                       error);
}

TEST_CASE("conv2d gradcheck vs finite differences (64-bit)") {
  Tensor64 x = rand_tensor<double>({1, 2, 5, 5}, 4);
  Tensor64 w = rand_tensor<double>({3, 2, 3, 3}, 5);
  Tensor64 b = rand_tensor<double>({3}, 6);
  Tensor64 y = conv2d_forward(x, w, b, 1, 1);
  Tensor64 r = randn_tensor<double>(y.shape(), 7);
  auto g = conv2d_backward(x, w, r, {1, 1}, {1, 1});
  auto loss = [&] { return weighted_sum(conv2d_forward(x, w, b, 1, 1), r); };
  auto res = grad_check(loss, {{&x, &g.x}, {&w, &g.w}, {&b, &g.b}}, 1e-4);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("conv3d identity and linearity") {
  Tensor x = rand_tensor<float>({1, 1, 2, 3, 3}, 8);
  Tensor w = Tensor::full({1, 1, 1, 1, 1}, 1.0f);
  Tensor b({1});
  Tensor y = conv3d_forward(x, w, b, 1, 0);
  CHECK(y.vec() == x.vec());

  Tensor xc = Tensor::full({1, 1, 2, 3, 3}, 2.5f);
  Tensor ww = Tensor::full({1, 1, 1, 1, 1}, -0.5f);
  Tensor yc = conv3d_forward(xc, ww, b, 1, 0);
  for (int64_t i = 0; i < yc.numel(); ++i) CHECK(yc[i] == doctest::Approx(-1.25f));
}

TEST_CASE("conv3d matches naive loop-nest oracle") {
  for (uint64_t seed : {21u, 22u, 23u}) {
    Tensor x = rand_tensor<float>({2, 3, 4, 6, 5}, seed);
    Tensor w = rand_tensor<float>({4, 3, 3, 3, 3}, seed + 100);
    Tensor b = rand_tensor<float>({4}, seed + 200);
    Tensor got = conv3d_forward(x, w, b, 1, 1);
    Tensor expect = oracle_conv3d(x, w, b, {1, 1, 1}, {1, 1, 1});
    CHECK(max_abs_diff(got, expect) < 1e-4);
  }
}

TEST_CASE("conv3d strided kernel==stride matches oracle") {
  Tensor x = rand_tensor<float>({1, 3, 4, 6, 6}, 31);
  Tensor w = rand_tensor<float>({5, 3, 2, 2, 2}, 32);
  Tensor b = rand_tensor<float>({5}, 33);
  Tensor got = conv3d_forward(x, w, b, {2, 2, 2}, {0, 0, 0});
  Tensor expect = oracle_conv3d(x, w, b, {2, 2, 2}, {0, 0, 0});
  CHECK(got.shape() == Shape{1, 5, 2, 3, 3});
  CHECK(max_abs_diff(got, expect) < 1e-4);
}

TEST_CASE("conv3d gradcheck (64-bit)") {
  Tensor64 x = rand_tensor<double>({1, 2, 3, 4, 4}, 9);
  Tensor64 w = rand_tensor<double>({2, 2, 3, 3, 3}, 10);
  Tensor64 b = rand_tensor<double>({2}, 11);
  Tensor64 y = conv3d_forward(x, w, b, 1, 1);
  Tensor64 r = randn_tensor<double>(y.shape(), 12);
  auto g = conv3d_backward(x, w, r, {1, 1, 1}, {1, 1, 1});
  auto loss = [&] { return weighted_sum(conv3d_forward(x, w, b, 1, 1), r); };
  auto res = grad_check(loss, {{&x, &g.x}, {&w, &g.w}, {&b, &g.b}}, 1e-4);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("conv2d equals conv3d with kd=1, element-wise exact") {
  for (uint64_t seed : {41u, 42u, 43u}) {
    Tensor x3 = rand_tensor<float>({2, 3, 1, 8, 9}, seed);
    Tensor x2 = x3.reshaped({2, 3, 8, 9});
    Tensor w3 = rand_tensor<float>({4, 3, 1, 3, 3}, seed + 1);
    Tensor w2 = w3.reshaped({4, 3, 3, 3});
    Tensor b = rand_tensor<float>({4}, seed + 2);
    Tensor y3 = conv3d_forward(x3, w3, b, {1, 1, 1}, {0, 1, 1});
    Tensor y2 = conv2d_forward(x2, w2, b, {1, 1}, {1, 1});
    REQUIRE(y2.numel() == y3.numel());
    CHECK(y2.vec() == y3.vec());  // bit-exact
  }
}

TEST_CASE("conv_transpose_z identity, slice replication, gradcheck") {
  // stride 1, identity kernel
  Tensor x = rand_tensor<float>({1, 2, 3, 2, 2}, 50);
  Tensor wid({2, 2, 1, 1, 1});
  wid[0] = 1.0f;  // [0,0]
  wid[3] = 1.0f;  // [1,1]
  Tensor b({2});
  Tensor y = conv_transpose_z_forward(x, wid, b, 1);
  CHECK(y.vec() == x.vec());

  // D=2, stride 2, per-channel [1,1] taps: [a,b] -> [a,a,b,b]
  Tensor s({1, 1, 2, 1, 1});
  s[0] = 3.0f;
  s[1] = 7.0f;
  Tensor wz = Tensor::full({1, 1, 2, 1, 1}, 1.0f);
  Tensor yz = conv_transpose_z_forward(s, wz, Tensor({1}), 2);
  CHECK(yz.shape() == Shape{1, 1, 4, 1, 1});
  CHECK(yz[0] == 3.0f);
  CHECK(yz[1] == 3.0f);
  CHECK(yz[2] == 7.0f);
  CHECK(yz[3] == 7.0f);

  // kd != stride_z is a configuration error
  CHECK_THROWS_AS((void)conv_transpose_z_forward(s, wz, Tensor({1}), 3), error);

  // gradcheck
  Tensor64 xg = rand_tensor<double>({1, 2, 3, 3, 2}, 51);
  Tensor64 wg = rand_tensor<double>({2, 2, 2, 1, 1}, 52);
  Tensor64 bg = rand_tensor<double>({2}, 53);
  Tensor64 yg = conv_transpose_z_forward(xg, wg, bg, 2);
  Tensor64 r = randn_tensor<double>(yg.shape(), 54);
  auto g = conv_transpose_z_backward(xg, wg, r, 2);
  auto loss = [&] { return weighted_sum(conv_transpose_z_forward(xg, wg, bg, 2), r); };
  auto res = grad_check(loss, {{&xg, &g.x}, {&wg, &g.w}, {&bg, &g.b}}, 1e-4);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("conv_transpose 2d/3d gradcheck (64-bit)") {
  {
    Tensor64 x = rand_tensor<double>({1, 3, 4, 5}, 60);
    Tensor64 w = rand_tensor<double>({3, 2, 2, 2}, 61);
    Tensor64 b = rand_tensor<double>({2}, 62);
    Tensor64 y = conv_transpose2d_forward(x, w, b, {2, 2});
    CHECK(y.shape() == Shape{1, 2, 8, 10});
    Tensor64 r = randn_tensor<double>(y.shape(), 63);
    auto g = conv_transpose2d_backward(x, w, r, {2, 2});
    auto loss = [&] { return weighted_sum(conv_transpose2d_forward(x, w, b, {2, 2}), r); };
    auto res = grad_check(loss, {{&x, &g.x}, {&w, &g.w}, {&b, &g.b}}, 1e-4);
    CHECK(res.max_rel_err < 1e-5);
  }
  {
    Tensor64 x = rand_tensor<double>({1, 2, 2, 3, 3}, 70);
    Tensor64 w = rand_tensor<double>({2, 3, 2, 2, 2}, 71);
    Tensor64 b = rand_tensor<double>({3}, 72);
    Tensor64 y = conv_transpose3d_forward(x, w, b, {2, 2, 2});
    CHECK(y.shape() == Shape{1, 3, 4, 6, 6});
    Tensor64 r = randn_tensor<double>(y.shape(), 73);
    auto g = conv_transpose3d_backward(x, w, r, {2, 2, 2});
    auto loss = [&] { return weighted_sum(conv_transpose3d_forward(x, w, b, {2, 2, 2}), r); };
    auto res = grad_check(loss, {{&x, &g.x}, {&w, &g.w}, {&b, &g.b}}, 1e-4);
    CHECK(res.max_rel_err < 1e-5);
  }
}

TEST_CASE("batch_norm constant channel converges to shift; fixed point; gradcheck") {
  // constant channel in train mode -> output equals shift
  Tensor x = Tensor::full({2, 3, 4, 4}, 5.0f);
  Tensor scale = Tensor::full({3}, 2.0f);
  Tensor shift = Tensor::of({3}, {0.5f, -1.0f, 3.0f});
  Tensor rm({3}), rv = Tensor::full({3}, 1.0f);
  Tensor y = batch_norm_forward<float>(x, scale, shift, rm, rv, true, 0.1f, 1e-5f, nullptr);
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < 16; ++i) CHECK(y[c * 16 + i] == doctest::Approx(shift[c]).epsilon(1e-4));

  // already-normalized input with scale 1 shift 0 is (nearly) a fixed point
  Tensor xn({1, 1, 1, 4});
  const float vals[4] = {-1.3416408f, -0.4472136f, 0.4472136f, 1.3416408f};  // mean 0, var 1
  for (int i = 0; i < 4; ++i) xn[i] = vals[i];
  Tensor s1 = Tensor::full({1}, 1.0f), s0({1}), m({1}), v = Tensor::full({1}, 1.0f);
  Tensor yn = batch_norm_forward<float>(xn, s1, s0, m, v, true, 0.1f, 1e-5f, nullptr);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(yn[i] - xn[i]) < 1e-4);

  // eval before any training step uses the initialized stats (not an error)
  Tensor rm0({2}), rv0 = Tensor::full({2}, 1.0f);
  Tensor xe = rand_tensor<float>({1, 2, 3, 3}, 80);
  Tensor ye = batch_norm_forward<float>(xe, Tensor::full({2}, 1.0f), Tensor({2}), rm0, rv0,
                                        false, 0.1f, 1e-5f, nullptr);
  for (int64_t i = 0; i < xe.numel(); ++i)
    CHECK(ye[i] == doctest::Approx(xe[i] / std::sqrt(1.0f + 1e-5f)).epsilon(1e-5));

  // gradcheck through batch statistics
  Tensor64 xg = rand_tensor<double>({2, 2, 3, 3}, 81);
  Tensor64 sg = rand_tensor<double>({2}, 82, 0.5, 1.5);
  Tensor64 hg = rand_tensor<double>({2}, 83);
  Tensor64 rmg({2}), rvg = Tensor64::full({2}, 1.0);
  BnCache<double> cache;
  Tensor64 yg =
      batch_norm_forward<double>(xg, sg, hg, rmg, rvg, true, 0.1, 1e-5, &cache);
  Tensor64 r = randn_tensor<double>(yg.shape(), 84);
  auto g = batch_norm_backward_train(cache, sg, r);
  auto loss = [&] {
    Tensor64 m2({2}), v2 = Tensor64::full({2}, 1.0);
    return weighted_sum(batch_norm_forward<double>(xg, sg, hg, m2, v2, true, 0.1, 1e-5, nullptr),
                        r);
  };
  auto res = grad_check(loss, {{&xg, &g.x}, {&sg, &g.scale}, {&hg, &g.shift}}, 1e-5);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("relu definition and gradient mask") {
  Tensor x = Tensor::of({3}, {-1.0f, 0.0f, 2.0f});
  Tensor y = relu_forward(x);
  CHECK(y[0] == 0.0f);
  CHECK(y[1] == 0.0f);
  CHECK(y[2] == 2.0f);

  Tensor neg = Tensor::full({2, 3}, -4.0f);
  Tensor yn = relu_forward(neg);
  for (int64_t i = 0; i < yn.numel(); ++i) CHECK(yn[i] == 0.0f);

  // gradient mask checked against finite differences away from the kink
  Tensor64 xg({1, 8});
  Rng rng(90);
  for (int64_t i = 0; i < 8; ++i) {
    const double mag = rng.uniform(0.5, 1.5);
    xg[i] = rng.coin() ? mag : -mag;
  }
  Tensor64 r = randn_tensor<double>({1, 8}, 91);
  Tensor64 ga = relu_backward(xg, r);
  auto loss = [&] { return weighted_sum(relu_forward(xg), r); };
  auto res = grad_check(loss, {{&xg, &ga}}, 1e-5);
  CHECK(res.max_rel_err < 1e-8);
}

TEST_CASE("mse_loss examples and gradient") {
  Tensor a = rand_tensor<float>({2, 5}, 100);
  CHECK(mse_loss(a, a) == 0.0f);

  Tensor p = Tensor::of({2}, {0.0f, 2.0f});
  Tensor t = Tensor::of({2}, {1.0f, 1.0f});
  CHECK(mse_loss(p, t) == doctest::Approx(1.0f));

  Tensor t2 = Tensor::of({3}, {1.0f, 1.0f, 1.0f});
  CHECK_THROWS_AS((void)mse_loss(p, t2), error);

  Tensor64 pg = rand_tensor<double>({2, 3, 2}, 101);
  Tensor64 tg = rand_tensor<double>({2, 3, 2}, 102);
  Tensor64 g;
  (void)mse_loss(pg, tg, &g);
  auto loss = [&] { return mse_loss(pg, tg); };
  auto res = grad_check(loss, {{&pg, &g}}, 1e-6);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("adam single-step hand evaluation and invariants") {
  // zero gradients leave the value unchanged
  std::vector<ParameterT<double>> params;
  params.emplace_back("p", Tensor64::full({3}, 1.5));
  auto st = AdamStateT<double>::init(params);
  AdamConfig cfg;
  cfg.lr = 1e-3;
  adam_step(params, st, cfg);
  for (int i = 0; i < 3; ++i) CHECK(params[0].value[i] == 1.5);
  CHECK(st.step == 1);

  // scalar param 0, constant gradient 1: first step moves by -lr/(1+eps')
  std::vector<ParameterT<double>> p2;
  p2.emplace_back("w", Tensor64({1}));
  auto st2 = AdamStateT<double>::init(p2);
  p2[0].grad[0] = 1.0;
  adam_step(p2, st2, cfg);
  CHECK(p2[0].value[0] == doctest::Approx(-0.000999999).epsilon(1e-6));

  // two consecutive identical calls give different updates (t advances)
  p2[0].grad[0] = 1.0;
  adam_step(p2, st2, cfg);
  const double second_delta = p2[0].value[0] + 0.000999999;
  CHECK(second_delta != doctest::Approx(-0.000999999).epsilon(1e-12));
  CHECK(st2.step == 2);

  // lr = 0 leaves values unchanged but still advances state
  std::vector<ParameterT<double>> p3;
  p3.emplace_back("w", Tensor64::full({2}, 0.25));
  auto st3 = AdamStateT<double>::init(p3);
  p3[0].grad.fill(0.7);
  AdamConfig zero;
  zero.lr = 0.0;
  adam_step(p3, st3, zero);
  CHECK(p3[0].value[0] == 0.25);
  CHECK(st3.step == 1);
  CHECK(st3.m[0][0] != 0.0);
}

TEST_CASE("grad_check oracle properties") {
  // linear op: exact for central differences
  Tensor64 x = rand_tensor<double>({4}, 110);
  Tensor64 r = randn_tensor<double>({4}, 111);
  Tensor64 ga({4});
  for (int i = 0; i < 4; ++i) ga[i] = 3.0 * r[i];
  auto loss = [&] {
    double acc = 0;
    for (int i = 0; i < 4; ++i) acc += 3.0 * x[i] * r[i];
    return acc;
  };
  auto res = grad_check(loss, {{&x, &ga}}, 1e-5);
  CHECK(res.max_rel_err < 1e-10);

  // deliberately wrong backward (+10%) must be detected
  Tensor64 bad({4});
  for (int i = 0; i < 4; ++i) bad[i] = 3.3 * r[i];
  auto res_bad = grad_check(loss, {{&x, &bad}}, 1e-5);
  CHECK(res_bad.max_rel_err > 0.05);

  // non-finite loss is a numeric error
  auto nan_loss = [&] { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS((void)grad_check(nan_loss, {{&x, &ga}}, 1e-5), error);
}

TEST_CASE("linear / pool / concat / slice / dyn_conv gradchecks (64-bit)") {
  {
    Tensor64 x = rand_tensor<double>({3, 5}, 120);
    Tensor64 w = rand_tensor<double>({4, 5}, 121);
    Tensor64 b = rand_tensor<double>({4}, 122);
    Tensor64 y = linear_forward(x, w, b);
    Tensor64 r = randn_tensor<double>(y.shape(), 123);
    auto g = linear_backward(x, w, r);
    auto loss = [&] { return weighted_sum(linear_forward(x, w, b), r); };
    CHECK(grad_check(loss, {{&x, &g.x}, {&w, &g.w}, {&b, &g.b}}, 1e-5).max_rel_err < 1e-8);
  }
  {
    Tensor64 x = rand_tensor<double>({2, 3, 4, 5}, 130);
    Tensor64 y = global_avg_pool_forward(x);
    CHECK(y.shape() == Shape{2, 3});
    Tensor64 r = randn_tensor<double>(y.shape(), 131);
    Tensor64 gx = global_avg_pool_backward(x.shape(), r);
    auto loss = [&] { return weighted_sum(global_avg_pool_forward(x), r); };
    CHECK(grad_check(loss, {{&x, &gx}}, 1e-5).max_rel_err < 1e-8);
  }
  {
    Tensor64 a = rand_tensor<double>({2, 3, 4}, 140);
    Tensor64 b = rand_tensor<double>({2, 2, 4}, 141);
    Tensor64 y = concat_channels_forward(a, b);
    CHECK(y.shape() == Shape{2, 5, 4});
    Tensor64 r = randn_tensor<double>(y.shape(), 142);
    Tensor64 ga, gb;
    concat_channels_backward(r, 3, ga, gb);
    auto loss = [&] { return weighted_sum(concat_channels_forward(a, b), r); };
    CHECK(grad_check(loss, {{&a, &ga}, {&b, &gb}}, 1e-5).max_rel_err < 1e-8);
  }
  {
    Tensor64 x = rand_tensor<double>({3, 10}, 150);
    Tensor64 y = slice_cols_forward(x, 2, 7);
    Tensor64 r = randn_tensor<double>(y.shape(), 151);
    Tensor64 gx = slice_cols_backward(x.shape(), r, 2, 7);
    auto loss = [&] { return weighted_sum(slice_cols_forward(x, 2, 7), r); };
    CHECK(grad_check(loss, {{&x, &gx}}, 1e-5).max_rel_err < 1e-8);
  }
  {
    Tensor64 x = rand_tensor<double>({2, 3, 4, 4}, 160);
    Tensor64 wf = rand_tensor<double>({2, 2 * 3}, 161);
    Tensor64 bf = rand_tensor<double>({2, 2}, 162);
    Tensor64 y = dyn_conv1x1_forward(x, wf, bf, 2);
    Tensor64 r = randn_tensor<double>(y.shape(), 163);
    auto g = dyn_conv1x1_backward(x, wf, r);
    Tensor64 gb = g.bflat;
    auto loss = [&] { return weighted_sum(dyn_conv1x1_forward(x, wf, bf, 2), r); };
    CHECK(grad_check(loss, {{&x, &g.x}, {&wf, &g.wflat}, {&bf, &gb}}, 1e-5).max_rel_err < 1e-7);
  }
}

TEST_CASE("32-bit gradients stay within 1e-3 of the 64-bit oracle") {
  // The float backward is compared against central differences of the
  // double forward: finite differences taken directly on a float op drown
  // in rounding noise long before 1e-3.
  Tensor64 x = rand_tensor<double>({1, 2, 4, 6, 5}, 170);
  Tensor64 w = rand_tensor<double>({3, 2, 3, 3, 3}, 171);
  Tensor64 b = rand_tensor<double>({3}, 172);
  {
    Tensor x32 = x.cast<float>(), w32 = w.cast<float>(), b32 = b.cast<float>();
    Tensor y32 = conv3d_forward(x32, w32, b32, 1, 1);
    Tensor r32 = randn_tensor<float>(y32.shape(), 999);
    auto g32 = conv3d_backward(x32, w32, r32, {1, 1, 1}, {1, 1, 1});
    Tensor64 r = r32.cast<double>();
    Tensor64 gx = g32.x.cast<double>(), gw = g32.w.cast<double>(), gb = g32.b.cast<double>();
    auto loss = [&] { return weighted_sum(conv3d_forward(x, w, b, 1, 1), r); };
    auto res = grad_check(loss, {{&x, &gx}, {&w, &gw}, {&b, &gb}}, 1e-4);
    CHECK(res.max_rel_err < 1e-3);
  }
  Tensor64 x2 = rand_tensor<double>({1, 3, 7, 6}, 180);
  Tensor64 w2 = rand_tensor<double>({2, 3, 3, 3}, 181);
  Tensor64 b2 = rand_tensor<double>({2}, 182);
  {
    Tensor x32 = x2.cast<float>(), w32 = w2.cast<float>(), b32 = b2.cast<float>();
    Tensor y32 = conv2d_forward(x32, w32, b32, 1, 1);
    Tensor r32 = randn_tensor<float>(y32.shape(), 998);
    auto g32 = conv2d_backward(x32, w32, r32, {1, 1}, {1, 1});
    Tensor64 r = r32.cast<double>();
    Tensor64 gx = g32.x.cast<double>(), gw = g32.w.cast<double>(), gb = g32.b.cast<double>();
    auto loss = [&] { return weighted_sum(conv2d_forward(x2, w2, b2, 1, 1), r); };
    auto res = grad_check(loss, {{&x2, &gx}, {&w2, &gw}, {&b2, &gb}}, 1e-4);
    CHECK(res.max_rel_err < 1e-3);
  }
}

TEST_CASE("eval forward is safe for concurrent use") {
  // two threads computing the same conv get identical results
  Tensor x = rand_tensor<float>({1, 4, 8, 8}, 190);
  Tensor w = rand_tensor<float>({4, 4, 3, 3}, 191);
  Tensor b = rand_tensor<float>({4}, 192);
  Tensor expected = conv2d_forward(x, w, b, 1, 1);
  Tensor got1, got2;
  std::thread t1([&] { got1 = conv2d_forward(x, w, b, 1, 1); });
  std::thread t2([&] { got2 = conv2d_forward(x, w, b, 1, 1); });
  t1.join();
  t2.join();
  CHECK(got1.vec() == expected.vec());
  CHECK(got2.vec() == expected.vec());
}

TEST_SUITE_END();
