#include <doctest.h>

#include <cmath>

#include "distillgan/grad_check.hpp"
#include "distillgan/ops.hpp"
#include "distillgan/optimizer.hpp"
#include "distillgan/random.hpp"
#include "layer_cases.hpp"

using namespace distillgan;

namespace {

TensorPtr<float> tensor(Shape s, std::vector<float> v, bool grad = false) {
  return make_tensor<float>(std::move(s), std::move(v), grad);
}

}  // namespace

TEST_CASE("relu clamps negatives") {
  auto y = ops::relu<float>(nullptr, tensor({3}, {-1.0f, 0.0f, 2.0f}));
  CHECK(y->data == std::vector<float>{0.0f, 0.0f, 2.0f});
}

TEST_CASE("conv2d output shape and direct summation") {
  auto x = full<float>({1, 1, 4, 4}, 1.0f);
  auto w = full<float>({1, 1, 3, 3}, 1.0f);
  auto y = ops::conv2d<float>(nullptr, x, w, nullptr, {1, 0});
  REQUIRE(y->shape == Shape{1, 1, 2, 2});
  for (float v : y->data) CHECK(v == 9.0f);
}

TEST_CASE("conv2d matches a direct nested-loop convolution") {
  testing::CaseBuilder b(11);
  auto x = b.uniform<double>({2, 3, 5, 6}, -1, 1);
  auto w = b.uniform<double>({4, 3, 3, 3}, -1, 1);
  auto bias = b.uniform<double>({4}, -1, 1);
  const ops::ConvGeometry g{2, 1};
  auto y = ops::conv2d<double>(nullptr, x, w, bias, g);
  REQUIRE(y->shape == Shape{2, 4, 3, 3});
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t o = 0; o < 4; ++o) {
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
          double acc = bias->data[o];
          for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t ki = 0; ki < 3; ++ki) {
              for (std::size_t kj = 0; kj < 3; ++kj) {
                const long r = static_cast<long>(i * 2 + ki) - 1;
                const long s = static_cast<long>(j * 2 + kj) - 1;
                if (r < 0 || r >= 5 || s < 0 || s >= 6) continue;
                acc += x->data[((n * 3 + c) * 5 + r) * 6 + s] * w->data[((o * 3 + c) * 3 + ki) * 3 + kj];
              }
            }
          }
          CHECK(y->data[((n * 4 + o) * 3 + i) * 3 + j] == doctest::Approx(acc).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  // <conv(x), y> == <x, conv_transpose(y)> for the same kernel and geometry.
  testing::CaseBuilder b(5);
  auto x = b.uniform<double>({2, 3, 8, 8}, -1, 1);
  auto w = b.uniform<double>({4, 3, 4, 4}, -1, 1);
  const ops::ConvGeometry g{2, 1};
  auto cx = ops::conv2d<double>(nullptr, x, w, nullptr, g);
  auto y = b.uniform<double>(cx->shape, -1, 1);
  // conv_transpose expects [C_in, C_out, K, K] with C_in = conv output channels.
  auto ty = ops::conv_transpose2d<double>(nullptr, y, w, nullptr, g);
  REQUIRE(ty->shape == x->shape);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < cx->numel(); ++i) lhs += cx->data[i] * y->data[i];
  for (std::size_t i = 0; i < x->numel(); ++i) rhs += x->data[i] * ty->data[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("conv output size formulas") {
  CHECK(ops::conv_out_size(16, 4, {2, 1}) == 8);
  CHECK(ops::conv_transpose_out_size(8, 4, {2, 1}) == 16);
  CHECK(ops::conv_transpose_out_size(4, 3, {1, 0}) == 6);
  CHECK_THROWS_AS(ops::conv_out_size(2, 5, {1, 1}), ShapeError);
}

TEST_CASE("shape algebra: conv then conv_transpose restores spatial dims") {
  int tested = 0;
  for (std::size_t h = 2; h <= 20; ++h) {
    for (std::size_t k = 1; k <= 5; ++k) {
      for (std::size_t s = 1; s <= 3; ++s) {
        for (std::size_t p = 0; p <= 2; ++p) {
          if (h + 2 * p < k || (h + 2 * p - k) % s != 0) continue;
          const ops::ConvGeometry g{s, p};
          const std::size_t down = ops::conv_out_size(h, k, g);
          if ((down - 1) * s + k <= 2 * p) continue;
          CHECK(ops::conv_transpose_out_size(down, k, g) == h);
          ++tested;
        }
      }
    }
  }
  CHECK(tested > 100);
  // And through the actual ops.
  auto x = full<float>({1, 2, 9, 9}, 0.5f);
  auto w = full<float>({3, 2, 3, 3}, 0.1f);
  auto down = ops::conv2d<float>(nullptr, x, w, nullptr, {2, 1});
  auto wt = full<float>({3, 2, 3, 3}, 0.1f);
  auto up = ops::conv_transpose2d<float>(nullptr, down, wt, nullptr, {2, 1});
  CHECK(up->shape == x->shape);
}

TEST_CASE("dimension errors are descriptive") {
  auto x = zeros<float>({2, 3});
  auto w = zeros<float>({4, 5});
  CHECK_THROWS_AS(ops::dense<float>(nullptr, x, w, nullptr), ShapeError);
  CHECK_THROWS_AS(ops::conv2d<float>(nullptr, x, w, nullptr, {}), ShapeError);
  CHECK_THROWS_AS(ops::add<float>(nullptr, x, zeros<float>({3, 2})), ShapeError);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, {1.0f}), ShapeError);
}

TEST_CASE("non-finite inputs raise numeric errors") {
  auto x = tensor({2}, {1.0f, std::nanf("")});
  CHECK_THROWS_AS(ops::relu<float>(nullptr, x), NumericError);
  auto y = tensor({2}, {1.0f, INFINITY});
  CHECK_THROWS_AS(ops::tanh<float>(nullptr, y), NumericError);
}

TEST_CASE("backward of sum(x^2) is 2x") {
  Tape<float> tape;
  auto x = tensor({3}, {1.0f, 2.0f, 3.0f}, true);
  auto loss = ops::sum(&tape, ops::square(&tape, x));
  backward(tape, loss);
  CHECK(x->grad == std::vector<float>{2.0f, 4.0f, 6.0f});
  CHECK(tape.empty());
}

TEST_CASE("mse of equal tensors has zero gradient") {
  Tape<float> tape;
  auto a = tensor({2, 2}, {0.5f, -1.0f, 3.0f, 0.25f}, true);
  auto b = tensor({2, 2}, {0.5f, -1.0f, 3.0f, 0.25f});
  auto loss = ops::mse_loss(&tape, a, b);
  CHECK(loss->data[0] == 0.0f);
  backward(tape, loss);
  for (float g : a->grad) CHECK(g == 0.0f);
}

TEST_CASE("backward rejects non-scalar losses") {
  Tape<float> tape;
  auto x = tensor({2}, {1.0f, 2.0f}, true);
  auto y = ops::square(&tape, x);
  CHECK_THROWS_AS(backward(tape, y), ContractError);
}

TEST_CASE("ops without a tape record nothing") {
  Tape<float> tape;
  auto x = tensor({2}, {1.0f, 2.0f}, false);
  auto y = ops::square(&tape, x);
  CHECK(tape.empty());
  CHECK_FALSE(y->requires_grad);
}

TEST_CASE("gradients accumulate across backward passes") {
  auto x = tensor({1}, {3.0f}, true);
  for (int i = 0; i < 2; ++i) {
    Tape<float> tape;
    backward(tape, ops::sum(&tape, ops::square(&tape, x)));
  }
  CHECK(x->grad[0] == 12.0f);
}

TEST_CASE("batchnorm running averages use momentum 0.9") {
  auto x = make_tensor<float>({2, 1, 1, 1}, {1.0f, 3.0f});
  auto gamma = full<float>({1}, 1.0f);
  auto beta = full<float>({1}, 0.0f);
  ops::BatchNormStats<float> stats(1);
  auto y = ops::batchnorm2d<float>(nullptr, x, gamma, beta, stats, ops::NormMode::train);
  CHECK(stats.running_mean[0] == doctest::Approx(0.2));
  // unbiased variance of {1, 3} is 2
  CHECK(stats.running_var[0] == doctest::Approx(0.9 + 0.2));
  CHECK(y->data[0] == doctest::Approx(-1.0).epsilon(1e-4));
  ops::batchnorm2d<float>(nullptr, x, gamma, beta, stats, ops::NormMode::batch);
  CHECK(stats.running_mean[0] == doctest::Approx(0.2));
  auto e = ops::batchnorm2d<float>(nullptr, x, gamma, beta, stats, ops::NormMode::eval);
  CHECK(e->data[0] == doctest::Approx((1.0 - 0.2) / std::sqrt(1.1 + 1e-5)));
}

TEST_CASE("grad_check: every layer kind in 32-bit and 64-bit modes") {
  for (const auto& kind : testing::layer_kinds()) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto c32 = testing::make_layer_case<float>(kind, seed);
      const auto r32 = grad_check<float>(c32.fragment, c32.wrt, 3e-3f, 1e-3, seed);
      INFO(c32.description, " f32 worst: ", r32.worst, " err ", r32.max_rel_error);
      CHECK(r32.passed);
      auto c64 = testing::make_layer_case<double>(kind, seed);
      const auto r64 = grad_check<double>(c64.fragment, c64.wrt, 1e-5, 1e-5, seed);
      INFO(c64.description, " f64 worst: ", r64.worst, " err ", r64.max_rel_error);
      CHECK(r64.passed);
    }
  }
}

TEST_CASE("grad_check named fragments") {
  SUBCASE("dense 4 -> 3") {
    testing::CaseBuilder b(1);
    auto x = b.uniform<float>({2, 4}, -1, 1);
    auto w = b.uniform<float>({3, 4}, -1, 1);
    auto bias = b.uniform<float>({3}, -1, 1);
    auto r = grad_check<float>([=](Tape<float>* t) { return ops::dense(t, x, w, bias); },
                               {x, w, bias}, 3e-3f, 1e-3);
    CHECK(r.max_rel_error < 1e-3);
  }
  SUBCASE("batchnorm2d over a 2x3x4x4 batch") {
    testing::CaseBuilder b(2);
    auto x = b.uniform<float>({2, 3, 4, 4}, -1, 1);
    auto gamma = b.uniform<float>({3}, 0.5, 1.5);
    auto beta = b.uniform<float>({3}, -0.5, 0.5);
    auto stats = std::make_shared<ops::BatchNormStats<float>>(3);
    auto r = grad_check<float>(
        [=](Tape<float>* t) {
          return ops::batchnorm2d(t, x, gamma, beta, *stats, ops::NormMode::batch);
        },
        {x, gamma, beta}, 3e-3f, 1e-3);
    INFO(r.worst);
    CHECK(r.max_rel_error < 1e-3);
  }
  SUBCASE("conv_transpose2d stride 2") {
    testing::CaseBuilder b(3);
    auto x = b.uniform<float>({2, 3, 4, 4}, -1, 1);
    auto w = b.uniform<float>({3, 2, 4, 4}, -1, 1);
    auto bias = b.uniform<float>({2}, -1, 1);
    auto r = grad_check<float>(
        [=](Tape<float>* t) { return ops::conv_transpose2d(t, x, w, bias, {2, 1}); },
        {x, w, bias}, 3e-3f, 1e-3);
    INFO(r.worst);
    CHECK(r.max_rel_error < 1e-3);
  }
}

TEST_CASE("grad_check detects a wrong gradient") {
  // A fragment whose recorded rule is deliberately wrong (factor 3 instead of 2).
  auto x = make_tensor<double>({3}, {0.3, -0.7, 1.1}, true);
  Fragment<double> broken = [x](Tape<double>* tape) {
    auto y = ops::square<double>(nullptr, x);
    if (tape) {
      y->requires_grad = true;
      tape->record([x, y]() {
        x->ensure_grad();
        for (std::size_t i = 0; i < 3; ++i) x->grad[i] += y->grad[i] * 3.0 * x->data[i];
      });
    }
    return y;
  };
  auto r = grad_check<double>(broken, {x}, 1e-5, 1e-5);
  CHECK_FALSE(r.passed);
  CHECK(r.max_rel_error > 0.3);
}

TEST_CASE("sgd update and clip") {
  auto p = tensor({1}, {1.0f}, true);
  p->grad = {1.0f};
  Optimizer sgd(OptimizerSettings::sgd(0.1f), {p});
  sgd.step();
  CHECK(p->data[0] == doctest::Approx(0.9f));
  CHECK(p->grad[0] == 0.0f);
  CHECK(sgd.steps() == 1);

  auto q = tensor({2}, {0.5f, -0.5f}, true);
  q->grad = {0.0f, 0.0f};
  auto s = OptimizerSettings::sgd(0.1f);
  s.clip = 0.01f;
  Optimizer clipped(s, {q});
  clipped.step();
  CHECK(q->data == std::vector<float>{0.01f, -0.01f});
}

TEST_CASE("adam first step matches the hand-unrolled recurrence") {
  for (float g : {0.3f, -2.0f, 1e-3f}) {
    auto p = tensor({1}, {0.0f}, true);
    p->grad = {g};
    Optimizer adam(OptimizerSettings::adam(2e-4f), {p});
    adam.step();
    // m1 = 0.5 g, v1 = 0.001 g^2; bias-corrected m = g, v = g^2.
    const double m1 = (1.0 - 0.5) * g, v1 = (1.0 - 0.999) * double(g) * g;
    const double mhat = m1 / (1.0 - 0.5), vhat = v1 / (1.0 - 0.999);
    const double expected = -2e-4 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(p->data[0] == doctest::Approx(expected).epsilon(1e-5));
    CHECK(std::abs(p->data[0]) == doctest::Approx(2e-4).epsilon(1e-4));
    CHECK((p->data[0] < 0) == (g > 0));
  }
}

TEST_CASE("rmsprop step") {
  auto p = tensor({1}, {1.0f}, true);
  p->grad = {2.0f};
  Optimizer rms(OptimizerSettings::rmsprop(5e-5f), {p});
  rms.step();
  const double v = 0.01 * 4.0;
  CHECK(p->data[0] == doctest::Approx(1.0 - 5e-5 * 2.0 / (std::sqrt(v) + 1e-8)));
}

TEST_CASE("optimizer refuses parameters without gradients") {
  auto p = tensor({2}, {1.0f, 2.0f}, true);
  Optimizer sgd(OptimizerSettings::sgd(0.1f), {p});
  CHECK_THROWS_AS(sgd.step(), ContractError);
}

TEST_CASE("clip invariant holds after random clipped steps") {
  testing::CaseBuilder b(9);
  auto p = b.uniform<float>({50}, -1, 1);
  auto s = OptimizerSettings::rmsprop(0.05f);
  s.clip = 0.01f;
  Optimizer opt(s, {p});
  for (int step = 0; step < 100; ++step) {
    p->ensure_grad();
    for (auto& g : p->grad) g = static_cast<float>(b.pick(0, 200)) / 100.0f - 1.0f;
    opt.step();
    float mx = 0.0f;
    for (float v : p->data) mx = std::max(mx, std::abs(v));
    REQUIRE(mx <= 0.01f);
  }
}

TEST_CASE("philox known-answer vectors") {
  // Random123 kat_vectors: philox4x32_10
  auto zero = philox4x32({0, 0, 0, 0}, {0, 0});
  CHECK(zero == std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  auto ones = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                         {0xffffffffu, 0xffffffffu});
  CHECK(ones == std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  auto pi = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                       {0xa4093822u, 0x299f31d0u});
  CHECK(pi == std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("latent sampler moments and determinism") {
  constexpr std::size_t kDraws = 100000;
  LatentSampler a(42, 4), b(42, 4);
  auto za = a.sample(kDraws);
  auto zb = b.sample(kDraws);
  CHECK(za->data == zb->data);
  for (std::size_t d = 0; d < 4; ++d) {
    double m = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < kDraws; ++i) m += za->data[i * 4 + d];
    m /= double(kDraws);
    for (std::size_t i = 0; i < kDraws; ++i) sq += (za->data[i * 4 + d] - m) * (za->data[i * 4 + d] - m);
    const double var = sq / double(kDraws);
    CHECK(std::abs(m) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
  }
  LatentSampler c(43, 4);
  CHECK(c.sample(10)->data != LatentSampler(42, 4).sample(10)->data);
}
