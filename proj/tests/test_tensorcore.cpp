#include <catch_amalgamated.hpp>

#include "ducknet/conv2d.hpp"
#include "ducknet/batchnorm.hpp"
#include "ducknet/init.hpp"
#include "ducknet/ops.hpp"
#include "ducknet/optimizer.hpp"
#include "ducknet/rng.hpp"
#include "ducknet/testing/oracles.hpp"

using namespace ducknet;
using Catch::Approx;

namespace {

template <typename T>
ConvParams<T> make_conv(int oc, int ic, int kh, int kw, Padding pad,
                        int stride = 1, int dil = 1) {
  ConvParams<T> p;
  p.kernel = Tensor4<T>(oc, ic, kh, kw);
  p.bias = Tensor4<T>(1, oc, 1, 1);
  p.stride_h = p.stride_w = stride;
  p.dilation_h = p.dilation_w = dil;
  p.padding = pad;
  return p;
}

}  // namespace

TEST_CASE("conv2d forward worked examples") {
  SECTION("3x3 all-ones against the direct-sum oracle value") {
    Tensor4<double> x(1, 1, 3, 3);
    for (auto& v : x.data) v = 1.0;
    auto p = make_conv<double>(1, 1, 3, 3, Padding::Same);
    for (auto& v : p.kernel.data) v = 1.0;
    const auto out = conv2d_forward(x, p);
    const double expected[9] = {4, 6, 4, 6, 9, 6, 4, 6, 4};
    for (int i = 0; i < 9; ++i) REQUIRE(out.data[i] == Approx(expected[i]));
    const auto oracle = testing::naive_conv2d(x, p);
    for (int i = 0; i < 9; ++i) REQUIRE(out.data[i] == oracle.data[i]);
  }

  SECTION("1x1 identity kernel is the identity map") {
    Tensor4<float> x(2, 3, 5, 4);
    Rng rng(42);
    testing::fill_uniform(x, rng, -2.0, 2.0);
    auto p = make_conv<float>(3, 3, 1, 1, Padding::Same);
    for (int c = 0; c < 3; ++c) p.kernel.at(c, c, 0, 0) = 1.0f;
    const auto out = conv2d_forward(x, p);
    REQUIRE(out.data == x.data);
  }

  SECTION("2x2 stride-2 averaging kernel keeps a constant input") {
    Tensor4<float> x(1, 1, 4, 4);
    for (auto& v : x.data) v = 3.25f;
    auto p = make_conv<float>(1, 1, 2, 2, Padding::None, 2);
    for (auto& v : p.kernel.data) v = 0.25f;
    const auto out = conv2d_forward(x, p);
    REQUIRE(out.shape == Shape4{1, 1, 2, 2});
    for (float v : out.data) REQUIRE(v == Approx(3.25f));
  }
}

TEST_CASE("conv2d shape contract and error paths") {
  SECTION("Same stride-1 preserves spatial dims for odd effective kernels") {
    Rng rng(7);
    for (auto [kh, kw, d] : {std::tuple{1, 1, 1}, {3, 3, 1}, {3, 3, 2},
                             {3, 3, 4}, {1, 13, 1}, {13, 1, 1}}) {
      Tensor4<float> x(1, 2, 17, 19);
      testing::fill_uniform(x, rng, -1.0, 1.0);
      auto p = make_conv<float>(2, 2, kh, kw, Padding::Same, 1, d);
      const auto out = conv2d_forward(x, p);
      REQUIRE(out.shape.h == 17);
      REQUIRE(out.shape.w == 19);
    }
  }

  SECTION("None padding output dims follow the floor formula") {
    Tensor4<float> x(1, 1, 11, 9);
    auto p = make_conv<float>(1, 1, 3, 3, Padding::None, 2, 2);
    // floor((in - d*(k-1) - 1)/s) + 1
    const auto out = conv2d_forward(x, p);
    REQUIRE(out.shape.h == (11 - 2 * 2 - 1) / 2 + 1);
    REQUIRE(out.shape.w == (9 - 2 * 2 - 1) / 2 + 1);
  }

  SECTION("channel mismatch names the axis") {
    Tensor4<float> x(1, 3, 8, 8);
    auto p = make_conv<float>(1, 4, 3, 3, Padding::Same);
    REQUIRE_THROWS_WITH(conv2d_forward(x, p),
                        Catch::Matchers::ContainsSubstring("channel"));
  }

  SECTION("zero-extent output is rejected") {
    Tensor4<float> x(1, 1, 2, 2);
    auto p = make_conv<float>(1, 1, 3, 3, Padding::None);
    REQUIRE_THROWS_AS(conv2d_forward(x, p), std::invalid_argument);
  }

  SECTION("Same padding rejects even effective kernels") {
    Tensor4<float> x(1, 1, 8, 8);
    auto p = make_conv<float>(1, 1, 2, 2, Padding::Same);
    REQUIRE_THROWS_AS(conv2d_forward(x, p), std::invalid_argument);
  }

  SECTION("backward rejects mismatched grad_out") {
    Tensor4<float> x(1, 1, 8, 8);
    auto p = make_conv<float>(1, 1, 3, 3, Padding::Same);
    Tensor4<float> bad(1, 1, 7, 8);
    REQUIRE_THROWS_AS(conv2d_backward(x, p, bad), std::invalid_argument);
  }
}

TEST_CASE("conv2d matches the naive oracle exactly across configurations") {
  Rng rng(20240901);
  const int kernels[][2] = {{1, 1}, {2, 2}, {3, 3}, {1, 13}, {13, 1}};
  int tested = 0;
  for (auto [kh, kw] : kernels) {
    for (int stride : {1, 2}) {
      for (int dil : {1, 2, 4}) {
        const int eff_h = dil * (kh - 1) + 1, eff_w = dil * (kw - 1) + 1;
        const bool same_ok = eff_h % 2 == 1 && eff_w % 2 == 1;
        for (Padding pad : {Padding::Same, Padding::None}) {
          if (pad == Padding::Same && !same_ok) continue;
          const int h = eff_h + 3 + int(rng.below(12));
          const int w = eff_w + 3 + int(rng.below(12));
          const int ic = 1 + int(rng.below(4)), oc = 1 + int(rng.below(5));
          Tensor4<float> x(1 + int(rng.below(2)), ic, h, w);
          testing::fill_uniform(x, rng, -1.5, 1.5);
          auto p = make_conv<float>(oc, ic, kh, kw, pad, stride, dil);
          testing::fill_uniform(p.kernel, rng, -1.0, 1.0);
          testing::fill_uniform(p.bias, rng, -0.5, 0.5);
          const auto fast = conv2d_forward(x, p);
          const auto ref = testing::naive_conv2d(x, p);
          REQUIRE(fast.shape == ref.shape);
          REQUIRE(fast.data == ref.data);  // bitwise
          ++tested;
        }
      }
    }
  }
  REQUIRE(tested >= 40);
}

TEST_CASE("conv2d linearity") {
  Rng rng(99);
  SECTION("exact in 64-bit on integer-valued tensors, bias zero") {
    Tensor4<double> a(1, 2, 9, 9), b(1, 2, 9, 9);
    for (auto& v : a.data) v = double(int(rng.below(5)) - 2);
    for (auto& v : b.data) v = double(int(rng.below(5)) - 2);
    auto p = make_conv<double>(3, 2, 3, 3, Padding::Same);
    for (auto& v : p.kernel.data) v = double(int(rng.below(5)) - 2);
    const auto sum_then = conv2d_forward(add(a, b), p);
    const auto then_sum = add(conv2d_forward(a, p), conv2d_forward(b, p));
    REQUIRE(sum_then.data == then_sum.data);
  }
  SECTION("within 1e-5 relative in 32-bit") {
    Tensor4<float> a(1, 2, 9, 9), b(1, 2, 9, 9);
    testing::fill_uniform(a, rng, -1.0, 1.0);
    testing::fill_uniform(b, rng, -1.0, 1.0);
    auto p = make_conv<float>(3, 2, 3, 3, Padding::Same);
    testing::fill_uniform(p.kernel, rng, -1.0, 1.0);
    const auto lhs = conv2d_forward(add(a, b), p);
    const auto rhs = add(conv2d_forward(a, p), conv2d_forward(b, p));
    for (std::size_t i = 0; i < lhs.data.size(); ++i)
      REQUIRE(testing::rel_err(lhs.data[i], rhs.data[i]) < 1e-5);
  }
}

TEST_CASE("conv2d determinism") {
  Rng rng(5);
  Tensor4<float> x(2, 3, 21, 17);
  testing::fill_uniform(x, rng, -1.0, 1.0);
  auto p = make_conv<float>(4, 3, 3, 3, Padding::Same, 1, 2);
  testing::fill_uniform(p.kernel, rng, -1.0, 1.0);
  const auto a = conv2d_forward(x, p);
  const auto b = conv2d_forward(x, p);
  REQUIRE(a.data == b.data);
  const auto ga = conv2d_backward(x, p, a);
  const auto gb = conv2d_backward(x, p, a);
  REQUIRE(ga.input.data == gb.input.data);
  REQUIRE(ga.kernel.data == gb.kernel.data);
  REQUIRE(ga.bias.data == gb.bias.data);
}

TEST_CASE("conv2d backward") {
  SECTION("identity 1x1 kernel passes grad through") {
    Tensor4<float> x(1, 1, 4, 4);
    auto p = make_conv<float>(1, 1, 1, 1, Padding::Same);
    p.kernel.data[0] = 1.0f;
    Tensor4<float> g(1, 1, 4, 4);
    Rng rng(3);
    testing::fill_uniform(g, rng, -1.0, 1.0);
    const auto grads = conv2d_backward(x, p, g);
    REQUIRE(grads.input.data == g.data);
  }

  SECTION("grad_bias counts output pixels for loss = sum(output)") {
    Tensor4<float> x(1, 2, 6, 7);
    Rng rng(4);
    testing::fill_uniform(x, rng, -1.0, 1.0);
    auto p = make_conv<float>(3, 2, 3, 3, Padding::Same);
    testing::fill_uniform(p.kernel, rng, -1.0, 1.0);
    Tensor4<float> ones(1, 3, 6, 7);
    for (auto& v : ones.data) v = 1.0f;
    const auto grads = conv2d_backward(x, p, ones);
    for (int oc = 0; oc < 3; ++oc)
      REQUIRE(grads.bias.data[oc] == Approx(6 * 7));
  }

  SECTION("dilated conv gradients match finite differences (64-bit)") {
    Rng rng(12);
    Tensor4<double> x(2, 4, 5, 5);
    testing::fill_uniform(x, rng, -1.0, 1.0);
    auto p = make_conv<double>(3, 4, 3, 3, Padding::Same, 1, 2);
    testing::fill_uniform(p.kernel, rng, -1.0, 1.0);
    testing::fill_uniform(p.bias, rng, -0.5, 0.5);
    Tensor4<double> w;
    {
      const auto out0 = conv2d_forward(x, p);
      w = Tensor4<double>(out0.shape);
      testing::fill_uniform(w, rng, -1.0, 1.0);
    }
    auto loss = [&] {
      const auto out = conv2d_forward(x, p);
      double s = 0;
      for (std::size_t i = 0; i < out.data.size(); ++i)
        s += w.data[i] * out.data[i];
      return s;
    };
    const auto grads = conv2d_backward(x, p, w);
    testing::GradCheckStats stats;
    testing::fd_check(x.data.data(), grads.input.data.data(), x.data.size(),
                      loss, stats);
    testing::fd_check(p.kernel.data.data(), grads.kernel.data.data(),
                      p.kernel.data.size(), loss, stats);
    testing::fd_check(p.bias.data.data(), grads.bias.data.data(),
                      p.bias.data.size(), loss, stats);
    INFO("max rel err " << stats.max_rel_err);
    REQUIRE(stats.max_rel_err <= 1e-5);
  }
}

TEST_CASE("batchnorm forward") {
  SECTION("constant input standardizes to beta") {
    Tensor4<float> x(2, 2, 3, 3);
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 9; ++i) {
        x.plane(n, 0)[i] = 0.7f;
        x.plane(n, 1)[i] = -1.3f;
      }
    BatchNormState<float> s(2);
    auto out = batchnorm_forward(x, s, Mode::Train);
    for (float v : out.data) REQUIRE(v == Approx(0.0f).margin(1e-6));
    s.beta.data[0] = 2.5f;
    s.beta.data[1] = -1.0f;
    out = batchnorm_forward(x, s, Mode::Train);
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 9; ++i) {
        REQUIRE(out.plane(n, 0)[i] == Approx(2.5f).margin(1e-6));
        REQUIRE(out.plane(n, 1)[i] == Approx(-1.0f).margin(1e-6));
      }
  }

  SECTION("values {1,3} standardize to {-1,+1} as epsilon vanishes") {
    Tensor4<double> x(1, 1, 1, 2);
    x.data = {1.0, 3.0};
    BatchNormState<double> s(1);
    s.epsilon = 1e-12;
    const auto out = batchnorm_forward(x, s, Mode::Train);
    REQUIRE(out.data[0] == Approx(-1.0).margin(1e-5));
    REQUIRE(out.data[1] == Approx(1.0).margin(1e-5));
  }

  SECTION("infer mode uses running statistics only") {
    Tensor4<float> x(1, 1, 2, 2);
    x.data = {4.f, 4.f, 4.f, 4.f};
    BatchNormState<float> s(1);
    s.running_mean.data[0] = 4.0f;
    s.running_var.data[0] = 1.0f;
    const auto out = batchnorm_forward(x, s, Mode::Infer);
    for (float v : out.data) REQUIRE(v == Approx(0.0f).margin(1e-5));
  }

  SECTION("channel mismatch rejected") {
    Tensor4<float> x(1, 3, 2, 2);
    BatchNormState<float> s(2);
    REQUIRE_THROWS_AS(batchnorm_forward(x, s, Mode::Train),
                      std::invalid_argument);
  }

  SECTION("running stats move toward batch stats with momentum 0.99") {
    Tensor4<double> x(1, 1, 1, 2);
    x.data = {1.0, 3.0};  // mean 2, biased var 1
    BatchNormState<double> s(1);
    batchnorm_forward(x, s, Mode::Train);
    REQUIRE(s.running_mean.data[0] == Approx(0.99 * 0.0 + 0.01 * 2.0));
    REQUIRE(s.running_var.data[0] == Approx(0.99 * 1.0 + 0.01 * 1.0));
  }
}

TEST_CASE("batchnorm backward") {
  SECTION("grad_beta is the per-channel sum of grad_out") {
    Rng rng(31);
    Tensor4<float> x(2, 3, 4, 4), g(2, 3, 4, 4);
    testing::fill_uniform(x, rng, -1.0, 1.0);
    testing::fill_uniform(g, rng, -1.0, 1.0);
    BatchNormState<float> s(3);
    batchnorm_forward(x, s, Mode::Train);
    Tensor4<float> gin(x.shape), gg(1, 3, 1, 1), gb(1, 3, 1, 1);
    batchnorm_backward_acc(x, s, g, gin, gg.data.data(), gb.data.data());
    for (int c = 0; c < 3; ++c) {
      double sum = 0;
      for (int n = 0; n < 2; ++n)
        for (int i = 0; i < 16; ++i) sum += g.plane(n, c)[i];
      REQUIRE(gb.data[c] == Approx(sum).margin(1e-5));
    }
  }

  SECTION("constant grad_out gives per-channel zero-sum grad_input") {
    Rng rng(32);
    Tensor4<float> x(2, 2, 3, 3), g(2, 2, 3, 3);
    testing::fill_uniform(x, rng, -1.0, 1.0);
    for (auto& v : g.data) v = 0.37f;
    BatchNormState<float> s(2);
    batchnorm_forward(x, s, Mode::Train);
    Tensor4<float> gin(x.shape), gg(1, 2, 1, 1), gb(1, 2, 1, 1);
    batchnorm_backward_acc(x, s, g, gin, gg.data.data(), gb.data.data());
    for (int c = 0; c < 2; ++c) {
      double sum = 0;
      for (int n = 0; n < 2; ++n)
        for (int i = 0; i < 9; ++i) sum += gin.plane(n, c)[i];
      REQUIRE(sum == Approx(0.0).margin(1e-4));
    }
  }

  SECTION("random case matches finite differences (64-bit)") {
    Rng rng(33);
    Tensor4<double> x(2, 3, 4, 4);
    testing::fill_uniform(x, rng, -1.0, 1.0);
    BatchNormState<double> s(3);
    testing::fill_uniform(s.gamma, rng, 0.5, 1.5);
    testing::fill_uniform(s.beta, rng, -0.5, 0.5);
    Tensor4<double> w(x.shape);
    testing::fill_uniform(w, rng, -1.0, 1.0);
    auto loss = [&] {
      const auto out = batchnorm_forward(x, s, Mode::Train);
      double sum = 0;
      for (std::size_t i = 0; i < out.data.size(); ++i)
        sum += w.data[i] * out.data[i];
      return sum;
    };
    batchnorm_forward(x, s, Mode::Train);
    Tensor4<double> gin(x.shape), gg(1, 3, 1, 1), gb(1, 3, 1, 1);
    batchnorm_backward_acc(x, s, w, gin, gg.data.data(), gb.data.data());
    testing::GradCheckStats stats;
    testing::fd_check(x.data.data(), gin.data.data(), x.data.size(), loss, stats);
    testing::fd_check(s.gamma.data.data(), gg.data.data(), 3, loss, stats);
    testing::fd_check(s.beta.data.data(), gb.data.data(), 3, loss, stats);
    INFO("max rel err " << stats.max_rel_err);
    REQUIRE(stats.max_rel_err <= 1e-5);
  }
}

TEST_CASE("activations") {
  Tensor4<float> x(1, 1, 1, 3);
  x.data = {-2.f, 0.f, 3.f};
  const auto r = activation_forward(x, Activation::Relu);
  REQUIRE(r.data[0] == 0.0f);
  REQUIRE(r.data[2] == 3.0f);
  const auto s = activation_forward(x, Activation::Sigmoid);
  REQUIRE(s.data[1] == Approx(0.5f));

  SECTION("sigmoid gradient at 0 is 0.25 and matches finite differences") {
    Tensor4<double> z(1, 1, 1, 1);
    const auto y = activation_forward(z, Activation::Sigmoid);
    Tensor4<double> ones(z.shape), gin(z.shape);
    ones.data[0] = 1.0;
    activation_backward_acc(y, Activation::Sigmoid, ones, gin);
    REQUIRE(gin.data[0] == Approx(0.25));
    auto loss = [&] {
      return activation_forward(z, Activation::Sigmoid).data[0];
    };
    testing::GradCheckStats stats;
    testing::fd_check(z.data.data(), gin.data.data(), 1, loss, stats);
    REQUIRE(stats.max_rel_err <= 1e-5);
  }
}

TEST_CASE("upsample nearest 2x") {
  Tensor4<float> x(1, 1, 1, 1);
  x.data[0] = 7.f;
  auto out = upsample_nearest_2x(x);
  REQUIRE(out.shape == Shape4{1, 1, 2, 2});
  for (float v : out.data) REQUIRE(v == 7.0f);

  Tensor4<float> x2(1, 1, 2, 2);
  x2.data = {1.f, 2.f, 3.f, 4.f};
  out = upsample_nearest_2x(x2);
  const float expect[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  for (int i = 0; i < 16; ++i) REQUIRE(out.data[i] == expect[i]);

  Tensor4<float> g(1, 1, 4, 4), gin(1, 1, 2, 2);
  for (auto& v : g.data) v = 1.0f;
  upsample_nearest_2x_backward_acc(x2.shape, g, gin);
  for (float v : gin.data) REQUIRE(v == 4.0f);
}

TEST_CASE("add") {
  Rng rng(8);
  Tensor4<float> a(1, 2, 3, 3), zero(1, 2, 3, 3);
  testing::fill_uniform(a, rng, -1.0, 1.0);
  REQUIRE(add(a, zero).data == a.data);
  Tensor4<float> b(1, 2, 3, 3);
  testing::fill_uniform(b, rng, -1.0, 1.0);
  REQUIRE(add(a, b).data == add(b, a).data);
  Tensor4<float> c(1, 2, 3, 4);
  REQUIRE_THROWS_AS(add(a, c), std::invalid_argument);
}

TEST_CASE("rmsprop step") {
  SECTION("zero gradient leaves parameters unchanged") {
    std::vector<double> params{1.0, -2.0, 3.0}, grads{0, 0, 0};
    RmspropState<double> s(3);
    const auto before = params;
    rmsprop_step(params, grads, s);
    REQUIRE(params == before);
  }

  SECTION("first step with g=1 reproduces the hand-evaluated update") {
    std::vector<double> params{0.0}, grads{1.0};
    RmspropState<double> s(1, 1e-4);
    rmsprop_step(params, grads, s);
    REQUIRE(s.sq_avg[0] == Approx(0.1));
    REQUIRE(params[0] == Approx(-3.1623e-4).epsilon(1e-3));
  }

  SECTION("parameters update independently") {
    std::vector<double> p1{1.0, 5.0}, p2{1.0, -7.0};
    RmspropState<double> s1(2, 1e-2), s2(2, 1e-2);
    rmsprop_step(p1, {0.3, 0.0}, s1);
    rmsprop_step(p2, {0.3, 0.9}, s2);
    REQUIRE(p1[0] == p2[0]);
  }

  SECTION("non-finite gradient is rejected") {
    std::vector<double> params{1.0}, grads{std::nan("")};
    RmspropState<double> s(1);
    REQUIRE_THROWS_AS(rmsprop_step(params, grads, s), std::runtime_error);
  }
}

TEST_CASE("weight init") {
  Tensor4<float> k1(8, 4, 3, 3), k2(8, 4, 3, 3);
  Rng r1(123), r2(123);
  init_weights(k1, r1);
  init_weights(k2, r2);
  REQUIRE(k1.data == k2.data);

  const double limit = init_limit<float>(k1.shape);
  for (float v : k1.data) {
    REQUIRE(v >= -limit);
    REQUIRE(v <= limit);
  }

  SECTION("empirical mean of 1e5 samples is near zero") {
    Tensor4<double> big(100, 10, 10, 10);  // 1e5 scalars, fan sums irrelevant
    Rng rng(77);
    init_weights(big, rng);
    const double l = init_limit<double>(big.shape);
    double mean = 0;
    for (double v : big.data) mean += v;
    mean /= double(big.data.size());
    REQUIRE(std::abs(mean) <= 3.0 * l / std::sqrt(3.0 * 1e5));
  }
}
