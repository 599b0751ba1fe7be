#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "swpc/config.hpp"
#include "swpc/error.hpp"
#include "swpc/pipeline.hpp"

using namespace swpc;

TEST(Config, RoundTrip) {
  SwpcConfig cfg;
  cfg.mode = Mode::cross_subject;
  cfg.subjects = {"S01", "S02", "S03"};
  cfg.supervised.lr = 1e-3;
  cfg.ssl.epochs = 7;
  cfg.stream.tau = 0.35;
  cfg.ablation.averaging = false;
  cfg.synth.erd_channels = {{0, 1}, {2}};
  cfg.seeds = {3, 9};
  const auto text = to_json_string(cfg);
  const auto back = config_from_json_string(text);
  EXPECT_EQ(to_json_string(back), text);
  EXPECT_EQ(back.mode, Mode::cross_subject);
  EXPECT_EQ(back.synth.erd_channels, cfg.synth.erd_channels);
  EXPECT_EQ(back.ablation, cfg.ablation);
}

TEST(Config, DefaultsAndPartialDocuments) {
  const auto cfg = config_from_json_string(R"({"stream": {"tau": 0.4}})");
  EXPECT_EQ(cfg.stream.tau, 0.4);
  EXPECT_EQ(cfg.stream.lw_seconds, 1.0);
  EXPECT_EQ(cfg.ssl.delta, 0.3);
  EXPECT_EQ(cfg.ssl.sigma, 2.0);
  EXPECT_EQ(cfg.ssl.lambda, 0.9995);
  EXPECT_EQ(cfg.ssl.lr, 5e-5);
  EXPECT_EQ(cfg.ssl.epochs, 40u);
  EXPECT_EQ(cfg.supervised.lr, 5e-4);
  EXPECT_EQ(cfg.supervised.patience, 30u);
  EXPECT_EQ(cfg.supervised.valid_fraction, 0.4);
  EXPECT_EQ(cfg.stream.step_samples, 10u);
  EXPECT_EQ(cfg.preprocess.band_low_hz, 8.0);
  EXPECT_EQ(cfg.preprocess.band_high_hz, 30.0);
  EXPECT_EQ(cfg.preprocess.notch_hz, 50.0);
  EXPECT_EQ(cfg.mode, Mode::within_subject);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(config_from_json_string(R"({"tua": 0.2})"), InvalidArgument);
  EXPECT_THROW(config_from_json_string(R"({"stream": {"tua": 0.2}})"), InvalidArgument);
}

TEST(Config, MalformedRejected) {
  EXPECT_THROW(config_from_json_string("{"), FormatError);
  EXPECT_THROW(config_from_json_string("[]"), FormatError);
  EXPECT_THROW(config_from_json_string(R"({"stream": {"tau": "high"}})"), FormatError);
}

TEST(Config, Validation) {
  SwpcConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.mode = Mode::cross_subject;
  cfg.subjects = {"S01"};
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.seeds.clear();
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(Config, FileRoundTripAndPaths) {
  SwpcConfig cfg;
  cfg.data_root = "/data";
  cfg.dataset = "MI4";
  const auto p = std::filesystem::temp_directory_path() / "swpc_cfg_test.json";
  save_config(cfg, p);
  EXPECT_EQ(to_json_string(load_config(p)), to_json_string(cfg));
  std::filesystem::remove(p);
  EXPECT_EQ(recording_path(cfg, "S03", "2"), std::filesystem::path("/data/MI4/S03/2.swpc"));
}

TEST(Ablation, EightDistinctRows) {
  const auto grid = pipeline::ablation_grid();
  std::set<std::tuple<bool, bool, bool>> seen;
  for (const auto& s : grid) seen.insert({s.ssl_prescreen, s.ssl_classification, s.averaging});
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_EQ(grid.front(), (AblationSwitches{true, true, true}));
  EXPECT_EQ(grid.back(), (AblationSwitches{false, false, false}));
}

TEST(Pipeline, NetForFillsDataFields) {
  SwpcConfig cfg;
  const auto net = pipeline::net_for(cfg, 3, 250.0, 4);
  EXPECT_EQ(net.n_channels, 3u);
  EXPECT_EQ(net.input_len, 250u);
  EXPECT_EQ(net.n_classes, 4u);
  EXPECT_EQ(net.fs, 250.0);
}

TEST(Pipeline, SelectFollowsSwitches) {
  NetConfig net;
  net.n_channels = 2;
  net.input_len = 64;
  net.fs = 64;
  pipeline::StageModels m{init_model(net, 1), init_model(net, 2), init_model(net, 3), init_model(net, 4), 0, 0};
  auto pair = pipeline::select(m, {true, false, true});
  EXPECT_EQ(pair.prescreen.theta, m.prescreen_refined.theta);
  EXPECT_EQ(pair.classifier.theta, m.classifier_supervised.theta);
  pair = pipeline::select(m, {false, true, false});
  EXPECT_EQ(pair.prescreen.theta, m.prescreen_supervised.theta);
  EXPECT_EQ(pair.classifier.theta, m.classifier_refined.theta);
}
