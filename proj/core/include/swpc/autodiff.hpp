#pragma once

// Reverse-mode differentiation over dense f64 tensors, with the small set of
// layers an EEGNet-style network needs.

#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "swpc/tensor.hpp"

namespace swpc::ad {

class Tape;

// Handle to a node recorded on a Tape. Only meaningful for the tape that made it.
class Var {
 public:
  Var() = default;
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return id_ != kInvalid; }

 private:
  friend class Tape;
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  explicit Var(std::size_t id) : id_(id) {}
  std::size_t id_ = kInvalid;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  // Appends a node whose gradient flows to `parents` through `fn`. The closure
  // is dropped when no parent requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  // Gradient accumulated by the last backward(); zeros if never reached.
  Tensor grad(Var v) const;
  // Mutable gradient buffer for use inside backward closures.
  Tensor& grad_buffer(Var v);
  const Tensor& upstream(std::size_t self) const { return nodes_[self].grad; }
  const Tensor& output(std::size_t self) const { return nodes_[self].value; }

  // Seeds d(loss)/d(loss) = 1 and walks the tape in reverse. Nodes are stored
  // in creation order, which is already topological.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  const Node& node(Var v) const;
  std::vector<Node> nodes_;
};

// Layers. Activations are [batch, channels, height, time] unless noted.

// 1 x K convolution along time with "same" padding. w: [out, in, K].
Var conv2d_temporal(Tape& tape, Var x, Var w);
// Depthwise convolution whose kernel covers the full height ("valid") and K
// samples of time ("same"). w: [in * depth, H, K]; output channel o reads
// input channel o / depth. Output height is 1.
Var conv2d_depthwise(Tape& tape, Var x, Var w, std::size_t depth);
// 1 x 1 convolution mixing channels. w: [out, in].
Var conv2d_pointwise(Tape& tape, Var x, Var w);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

enum class BatchNormMode {
  eval,         // running statistics
  train,        // batch statistics, running statistics updated
  train_frozen  // batch statistics, running statistics untouched
};

// Normalizes per channel (axis 1) over all other axes.
Var batchnorm(Tape& tape, Var x, Var gamma, Var beta, BatchNormState& state, BatchNormMode mode,
              double momentum = 0.1, double eps = 1e-5);

Var elu(Tape& tape, Var x, double alpha = 1.0);
// Non-overlapping mean over `factor` time samples; trailing remainder dropped.
Var avgpool_time(Tape& tape, Var x, std::size_t factor);
// Inverted dropout. A null rng means evaluation mode (identity).
Var dropout(Tape& tape, Var x, double rate, std::mt19937_64* rng);
// [B, ...] -> [B, prod(...)]
Var flatten(Tape& tape, Var x);
// x: [B, n], weight: [out, n], bias: [out]
Var dense(Tape& tape, Var x, Var weight, Var bias);
Var softmax(Tape& tape, Var logits);
// Mean negative log-likelihood of `targets` under softmax(logits).
Var cross_entropy(Tape& tape, Var logits, std::span<const std::size_t> targets);
// Row-wise v / ||v||_2 on [B, n]. Throws on a zero row.
Var l2_normalize(Tape& tape, Var x);
// exp(-sum_i ||a_i - b_i||^2 / (2 sigma^2)) over the whole batch; scalar.
Var gaussian_kernel_similarity(Tape& tape, Var a, Var b, double sigma);

Var add(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var x, double factor);
Var sum(Tape& tape, Var x);

// Plain-array versions of the loss pieces, shared with the model for
// inference paths that do not need a tape.
std::vector<double> softmax_row(std::span<const double> logits);

// Adam moment buffers for one parameter list.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

AdamState make_adam(double lr, const std::vector<Tensor>& params);

// One bias-corrected Adam update, in place.
void adam_step(AdamState& state, std::vector<Tensor>& params, const std::vector<Tensor>& grads);

}  // namespace swpc::ad
