#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "../support/fixtures.hpp"
#include "swpc/dsp.hpp"
#include "swpc/error.hpp"
#include "swpc/stream_engine.hpp"

using namespace swpc;

namespace {

std::vector<DecisionRecord> run_decoder(const std::vector<double>& p_bar, const std::vector<std::vector<double>>& p,
                                        double tau, bool averaging = true) {
  StreamDecoder dec(tau, averaging);
  std::vector<DecisionRecord> out;
  for (std::size_t i = 0; i < p_bar.size(); ++i) out.push_back(dec.step(i, i * 10, p_bar[i], p[i]));
  return out;
}

}  // namespace

TEST(RunningAverage, Examples) {
  const std::vector<std::vector<double>> one{{0.3, 0.7}};
  EXPECT_EQ(running_average(one), one[0]);
  const std::vector<std::vector<double>> two{{0.9, 0.1}, {0.5, 0.5}};
  const auto m = running_average(two);
  EXPECT_NEAR(m[0], 0.7, 1e-15);
  EXPECT_NEAR(m[1], 0.3, 1e-15);
  const std::vector<std::vector<double>> same(5, {0.25, 0.5, 0.25});
  EXPECT_EQ(running_average(same), same[0]);
  EXPECT_THROW(running_average({}), InvalidArgument);
}

TEST(ClassLabel, ArgmaxTiesLow) {
  EXPECT_EQ(class_label(std::vector<double>{0.2, 0.8}), 2);
  EXPECT_EQ(class_label(std::vector<double>{0.4, 0.4, 0.2}), 1);
  EXPECT_EQ(class_label(std::vector<double>{0.1, 0.45, 0.45}), 2);
}

TEST(Decoder, GatingExample) {
  const std::vector<std::vector<double>> p{{0.5, 0.5}, {0.8, 0.2}, {0.4, 0.6}, {0.5, 0.5}};
  const auto r = run_decoder({0.1, 0.3, 0.3, 0.1}, p, 0.2);
  EXPECT_EQ(r[0].predicted_label, kRestDecision);
  EXPECT_EQ(r[1].predicted_label, 1);
  EXPECT_EQ(r[2].predicted_label, 1);
  EXPECT_EQ(r[3].predicted_label, kRestDecision);
  EXPECT_FALSE(r[0].p_hat.has_value());
  EXPECT_FALSE(r[0].p.has_value());
  EXPECT_EQ(*r[1].p_hat, p[1]);
  EXPECT_NEAR((*r[2].p_hat)[0], 0.6, 1e-15);
  EXPECT_EQ(r[2].run_start, 1u);
  EXPECT_FALSE(r[3].run_start.has_value());
}

TEST(Decoder, ThresholdIsInclusive) {
  const auto r = run_decoder({0.2}, {{0.3, 0.7}}, 0.2);
  EXPECT_EQ(r[0].predicted_label, 2);
}

TEST(Decoder, RunMeanArithmetic) {
  const auto r = run_decoder({0.9, 0.9, 0.9}, {{0.8, 0.2}, {0.6, 0.4}, {0.4, 0.6}}, 0.5);
  EXPECT_NEAR((*r[2].p_hat)[1], 0.4, 1e-15);
}

TEST(Decoder, AveragingOffKeepsInstantaneous) {
  const std::vector<std::vector<double>> p{{0.9, 0.1}, {0.2, 0.8}};
  const auto r = run_decoder({0.9, 0.9}, p, 0.5, false);
  EXPECT_EQ(*r[1].p_hat, p[1]);
  EXPECT_EQ(r[1].predicted_label, 2);
  EXPECT_EQ(r[1].run_start, 0u);
}

TEST(Decoder, RunBookkeepingMatchesBruteForce) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 200;
    std::vector<double> p_bar(n);
    std::vector<std::vector<double>> p(n);
    for (std::size_t i = 0; i < n; ++i) {
      p_bar[i] = u(rng);
      const double a = u(rng), b = u(rng), c = u(rng);
      p[i] = {a / (a + b + c), b / (a + b + c), c / (a + b + c)};
    }
    const double tau = 0.3;
    const auto r = run_decoder(p_bar, p, tau);
    for (std::size_t i = 0; i < n; ++i) {
      if (p_bar[i] < tau) {
        ASSERT_FALSE(r[i].run_start.has_value());
        ASSERT_EQ(r[i].predicted_label, kRestDecision);
        continue;
      }
      std::size_t i0 = i;
      while (i0 > 0 && p_bar[i0 - 1] >= tau) --i0;
      ASSERT_EQ(r[i].run_start, i0);
      std::vector<double> mean(3, 0.0);
      for (std::size_t j = i0; j <= i; ++j)
        for (std::size_t k = 0; k < 3; ++k) mean[k] += p[j][k] / static_cast<double>(i - i0 + 1);
      double total = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        ASSERT_NEAR((*r[i].p_hat)[k], mean[k], 1e-12);
        total += (*r[i].p_hat)[k];
      }
      ASSERT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(Decoder, GatedWindowNeedsProbabilities) {
  StreamDecoder dec(0.5);
  EXPECT_THROW(dec.step(0, 0, 0.9, {}), InvalidArgument);
  EXPECT_NO_THROW(dec.step(1, 10, 0.1, {}));
  EXPECT_THROW(StreamDecoder(0.0), InvalidArgument);
  EXPECT_THROW(StreamDecoder(1.0), InvalidArgument);
}

TEST(Engine, OnlineMatchesBatch) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = swpc::testing::random_stream_case(seed);
    const auto batch = decode_stream(c.prescreen, c.classifier, c.recording, c.config);
    const auto online = decode_stream_online(c.prescreen, c.classifier, c.recording, c.config);
    ASSERT_EQ(batch.size(), dsp::window_count(c.recording.n_samples(), c.config.window_samples(c.recording.fs),
                                              c.config.step_samples));
    EXPECT_EQ(batch, online) << "seed " << seed;
    std::size_t gated = 0;
    for (const auto& r : batch) gated += r.p_hat.has_value();
    EXPECT_GT(gated, 0u);
    EXPECT_LT(gated, batch.size());
  }
}

TEST(Engine, Deterministic) {
  const auto c = swpc::testing::random_stream_case(77);
  EXPECT_EQ(decode_stream(c.prescreen, c.classifier, c.recording, c.config),
            decode_stream(c.prescreen, c.classifier, c.recording, c.config));
}

TEST(Engine, MonotoneGating) {
  const auto c = swpc::testing::random_stream_case(5);
  const auto scores = score_windows(c.prescreen, c.classifier, c.recording, c.config);
  std::vector<DecisionRecord> prev;
  for (double tau : {0.05, 0.2, 0.4, 0.5, 0.6, 0.8, 0.95}) {
    const auto cur = gate_and_average(scores, tau, true);
    if (!prev.empty()) {
      for (std::size_t i = 0; i < cur.size(); ++i) {
        if (prev[i].predicted_label == kRestDecision) ASSERT_EQ(cur[i].predicted_label, kRestDecision);
      }
    }
    prev = cur;
  }
}

TEST(Engine, ShapeMismatchRejected) {
  auto c = swpc::testing::random_stream_case(3);
  c.config.lw_seconds = 1.0;
  EXPECT_THROW(decode_stream(c.prescreen, c.classifier, c.recording, c.config), ShapeError);
}

TEST(DecisionLog, RoundTrip) {
  const auto c = swpc::testing::random_stream_case(9);
  const auto records = decode_stream(c.prescreen, c.classifier, c.recording, c.config);
  std::stringstream ss;
  write_decision_log(records, ss);
  EXPECT_EQ(read_decision_log(ss), records);
}

TEST(DecisionLog, MalformedLineRejected) {
  std::stringstream ss("{\"i\": 0, \"start_sample\": 0}\nnot json\n");
  EXPECT_THROW(read_decision_log(ss), FormatError);
}

TEST(StreamConfig, Validation) {
  StreamConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.window_samples(250), 250u);
  c.tau = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.lw_seconds = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}
