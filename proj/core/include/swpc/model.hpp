#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "swpc/autodiff.hpp"
#include "swpc/tensor.hpp"

namespace swpc {

// Shape of the compact EEGNet-style network used by both modules.
struct NetConfig {
  std::size_t n_channels = 22;
  std::size_t input_len = 250;      // samples per window
  double fs = 250.0;
  std::size_t f1 = 8;               // temporal filters
  std::size_t depth = 2;            // spatial filters per temporal filter
  std::size_t f2 = 16;              // separable filters, f1 * depth
  std::size_t temporal_kernel = 0;  // 0: round(fs / 2), clipped to input_len / 2
  std::size_t separable_kernel = 16;
  std::size_t pool1 = 4;
  std::size_t pool2 = 8;
  double dropout = 0.25;
  std::size_t n_classes = 2;

  std::size_t resolved_temporal_kernel() const;
  std::size_t resolved_separable_kernel() const;
  std::size_t pooled_len() const { return input_len / pool1 / pool2; }
  std::size_t embedding_dim() const { return f2 * pooled_len(); }
  void validate() const;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

// theta: feature extractor, psi: classifier head, phi: EMA copy of theta that
// exists only while self-supervised refinement runs.
struct ModelBundle {
  NetConfig config;
  std::vector<Tensor> theta;
  std::vector<Tensor> psi;
  std::optional<std::vector<Tensor>> phi;
  std::vector<ad::BatchNormState> batchnorm;  // running statistics of theta's three batchnorm layers
};

// Order of the tensors in ModelBundle::theta and ::psi.
const std::vector<std::string>& theta_names();
const std::vector<std::string>& psi_names();

// Glorot-uniform weights, zero biases, unit batchnorm scales.
ModelBundle init_model(const NetConfig& config, std::uint64_t seed);

// Stacks [channels x input_len] windows into a [B, 1, channels, input_len] tensor.
Tensor stack_batch(std::span<const Matrix* const> windows, const NetConfig& config);
Tensor stack_batch(std::span<const Matrix> windows, const NetConfig& config);

std::vector<ad::Var> bind_params(ad::Tape& tape, const std::vector<Tensor>& params, bool trainable);

struct ForwardMode {
  ad::BatchNormMode batchnorm = ad::BatchNormMode::eval;
  std::mt19937_64* dropout_rng = nullptr;  // null disables dropout

  static ForwardMode eval() { return {}; }
};

// Feature extractor f: [B, 1, ch, T] -> [B, embedding_dim].
ad::Var feature_extract(ad::Tape& tape, const NetConfig& config, std::span<const ad::Var> theta,
                        std::vector<ad::BatchNormState>& bn_state, ad::Var input, ForwardMode mode);

// Classifier head h as logits: one dense layer.
ad::Var classify_logits(ad::Tape& tape, std::span<const ad::Var> psi, ad::Var embeddings);

// Eval-mode embeddings and class probabilities, computed in fixed-size chunks.
// Each row depends only on its own input.
Tensor embed(const ModelBundle& bundle, std::span<const Matrix> windows);
Tensor classify(std::span<const Tensor> psi, const Tensor& embeddings);
std::vector<std::vector<double>> predict_proba(const ModelBundle& bundle, std::span<const Matrix> windows);

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace swpc
