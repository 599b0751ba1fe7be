#include <gtest/gtest.h>

#include "swpc/datagen.hpp"
#include "swpc/dsp.hpp"
#include "swpc/eval.hpp"
#include "swpc/pipeline.hpp"

using namespace swpc;

// Adapting both networks on the unlabeled test stream should not cost
// accuracy on average.
TEST(OfflineAdapt, NotWorseThanOnlineOverFiveSeeds) {
  SwpcConfig cfg;
  double online = 0.0, offline = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthSpec train_spec = cfg.synth, test_spec = cfg.synth;
    train_spec.seed = seed * 2 + 1;
    test_spec.seed = seed * 2 + 2;
    const auto train = dsp::preprocess(synth_dataset(train_spec, cfg.synth.n_events / cfg.synth.n_classes).recording,
                                       cfg.preprocess);
    const auto test = dsp::preprocess(synth_recording(test_spec), cfg.preprocess);
    const auto data = pipeline::build_training_data(std::span(&train, 1), cfg.trial_seconds);
    const auto models = pipeline::select(pipeline::train_models(data, cfg, seed), cfg.ablation);
    const std::size_t len = cfg.stream.window_samples(test.fs);
    for (bool adapt : {false, true}) {
      SwpcConfig run = cfg;
      run.offline_adapt = adapt;
      const auto decoded = pipeline::decode(models, test, run, seed);
      const double acc = eval::score_stream(decoded.records, test.events, len, cfg.stream.tau).acc;
      (adapt ? offline : online) += acc / 5.0;
    }
  }
  EXPECT_GE(offline, online - 0.01) << "online " << online << ", offline " << offline;
}
