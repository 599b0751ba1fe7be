#pragma once

// nlohmann/json bindings for configuration structs. Private to the library.

#include <json.hpp>

#include "swpc/augment.hpp"
#include "swpc/datagen.hpp"
#include "swpc/dsp.hpp"
#include "swpc/model.hpp"
#include "swpc/stream_engine.hpp"
#include "swpc/training.hpp"

namespace swpc {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(NetConfig, n_channels, input_len, fs, f1, depth, f2, temporal_kernel,
                                                separable_kernel, pool1, pool2, dropout, n_classes)

namespace dsp {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PreprocessConfig, band_low_hz, band_high_hz, band_order, notch_hz,
                                                notch_quality, notch)
}

namespace augment {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AugmentParams, noise_factor, scale_low, scale_high,
                                                channel_mask_fraction, n_segments, segment_fraction)
}

namespace training {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SupervisedConfig, lr, patience, max_epochs, batch_size, crops_per_trial,
                                                valid_fraction, refit, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SslConfig, delta, sigma, lambda, lr, epochs, full_batch_limit,
                                                batch_size, seed)
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(StreamConfig, lw_seconds, step_samples, tau, averaging)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthSpec, n_channels, fs, n_classes, mu_freq, mu_amplitude,
                                                mu_modulation, mu_jitter_hz, erd_depth, erd_channels, noise_amplitude,
                                                trial_seconds, rest_min_seconds, rest_max_seconds, n_events, seed)

}  // namespace swpc
