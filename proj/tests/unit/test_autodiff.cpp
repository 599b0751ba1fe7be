#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../support/gradcheck.hpp"
#include "../support/layer_cases.hpp"
#include "swpc/autodiff.hpp"
#include "swpc/error.hpp"

using namespace swpc;
using swpc::testing::gradcheck;
using swpc::testing::project;
using swpc::testing::random_tensor;

namespace {

constexpr double kLayerTol = 1e-4;

class LayerGrad : public ::testing::TestWithParam<std::tuple<std::size_t, std::uint64_t>> {};

TEST_P(LayerGrad, MatchesFiniteDifferences) {
  const auto [index, seed] = GetParam();
  const auto c = swpc::testing::layer_cases().at(index);
  std::mt19937_64 rng(seed);
  EXPECT_LT(c.run(rng), kLayerTol) << c.name;
}

INSTANTIATE_TEST_SUITE_P(Layers, LayerGrad,
                         ::testing::Combine(::testing::Range<std::size_t>(0, swpc::testing::layer_cases().size()),
                                            ::testing::Range<std::uint64_t>(0, 5)),
                         [](const auto& info) {
                           return swpc::testing::layer_cases()[std::get<0>(info.param)].name + "_seed" +
                                  std::to_string(std::get<1>(info.param));
                         });

TEST(Autodiff, ConvMatchesDirectSum) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({1, 1, 1, 6}, rng);
  const Tensor w = random_tensor({1, 1, 3}, rng);
  ad::Tape tape;
  const Tensor& y = tape.value(ad::conv2d_temporal(tape, tape.constant(x), tape.constant(w)));
  for (int t = 0; t < 6; ++t) {
    double expect = 0.0;
    for (int k = 0; k < 3; ++k) {
      const int s = t + k - 1;
      if (s >= 0 && s < 6) expect += w[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(s)];
    }
    EXPECT_NEAR(y[static_cast<std::size_t>(t)], expect, 1e-14);
  }
}

TEST(Autodiff, BatchNormTrainNormalizes) {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({16, 2, 1, 32}, rng, -30.0, 30.0);
  ad::Tape tape;
  ad::BatchNormState st{{0, 0}, {1, 1}};
  const Tensor& y = tape.value(ad::batchnorm(tape, tape.constant(x), tape.constant(Tensor({2}, 1.0)),
                                             tape.constant(Tensor({2}, 0.0)), st, ad::BatchNormMode::train));
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0, ss = 0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < 16; ++b)
      for (std::size_t t = 0; t < 32; ++t) {
        const double v = y[(b * 2 + c) * 32 + t];
        s += v;
        ss += v * v;
        ++n;
      }
    const double mean = s / static_cast<double>(n);
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(ss / static_cast<double>(n) - mean * mean, 1.0, 1e-6);
  }
  // Running statistics moved toward the batch statistics.
  EXPECT_NE(st.running_var[0], 1.0);
}

TEST(Autodiff, FrozenBatchNormKeepsRunningStats) {
  std::mt19937_64 rng(6);
  ad::Tape tape;
  ad::BatchNormState st{{0.5}, {2.0}};
  ad::batchnorm(tape, tape.constant(random_tensor({4, 1, 1, 8}, rng)), tape.constant(Tensor({1}, 1.0)),
                tape.constant(Tensor({1}, 0.0)), st, ad::BatchNormMode::train_frozen);
  EXPECT_EQ(st.running_mean[0], 0.5);
  EXPECT_EQ(st.running_var[0], 2.0);
}

TEST(Autodiff, DropoutNullRngIsIdentity) {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({2, 3}, rng);
  ad::Tape tape;
  EXPECT_EQ(tape.value(ad::dropout(tape, tape.constant(x), 0.5, nullptr)), x);
}

TEST(Autodiff, L2NormalizeRejectsZeroRow) {
  ad::Tape tape;
  EXPECT_THROW(ad::l2_normalize(tape, tape.constant(Tensor({2, 3}, 0.0))), Error);
}

TEST(Autodiff, BackwardNeedsScalar) {
  ad::Tape tape;
  const auto v = tape.parameter(Tensor({2}, 1.0));
  EXPECT_THROW(tape.backward(v), Error);
}

TEST(Autodiff, UnreachedGradIsZero) {
  ad::Tape tape;
  const auto a = tape.parameter(Tensor({2}, 1.0));
  const auto b = tape.parameter(Tensor({2}, 3.0));
  tape.backward(ad::sum(tape, a));
  EXPECT_EQ(tape.grad(b), Tensor({2}, 0.0));
  EXPECT_EQ(tape.grad(a), Tensor({2}, 1.0));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<Tensor> p{Tensor({1}, 0.0)};
  auto st = ad::make_adam(0.1, p);
  ad::adam_step(st, p, {Tensor({1}, 3.0)});
  // Bias-corrected moments give m_hat / sqrt(v_hat) = g / |g| on step one.
  EXPECT_NEAR(p[0][0], -0.1, 1e-8);
}

TEST(Adam, ConvergesOnQuadratic) {
  std::vector<Tensor> p{Tensor({1}, 0.0)};
  auto st = ad::make_adam(0.05, p);
  for (int i = 0; i < 1000; ++i) ad::adam_step(st, p, {Tensor({1}, 2.0 * (p[0][0] - 2.0))});
  EXPECT_NEAR(p[0][0], 2.0, 1e-2);
}

TEST(Adam, MatchesReferenceRecurrence) {
  std::vector<Tensor> p{Tensor({2}, std::vector<double>{1.0, -1.0})};
  auto st = ad::make_adam(1e-3, p);
  double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {1.0, -1.0};
  for (int step = 1; step <= 5; ++step) {
    const Tensor g({2}, std::vector<double>{x[0] * 3.0, std::sin(x[1])});
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[static_cast<std::size_t>(i)];
      v[i] = 0.999 * v[i] + 0.001 * g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(i)];
      const double mh = m[i] / (1 - std::pow(0.9, step));
      const double vh = v[i] / (1 - std::pow(0.999, step));
      x[i] -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
    }
    ad::adam_step(st, p, {g});
    EXPECT_NEAR(p[0][0], x[0], 1e-15);
    EXPECT_NEAR(p[0][1], x[1], 1e-15);
  }
}

}  // namespace
