#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swpc/augment.hpp"
#include "swpc/dataio.hpp"
#include "swpc/model.hpp"

namespace swpc::training {

struct SupervisedConfig {
  double lr = 5e-4;
  std::size_t patience = 30;
  std::size_t max_epochs = 400;
  std::size_t batch_size = 8;
  std::size_t crops_per_trial = 2;  // random windows drawn from each trial per epoch
  double valid_fraction = 0.4;
  bool refit = true;  // retrain on train + valid for the selected epoch count
  std::uint64_t seed = 0;

  void validate() const;
};

struct SslConfig {
  double delta = 0.3;    // weight of the transition (negative) term
  double sigma = 2.0;    // kernel width
  double lambda = 0.9995;
  double lr = 5e-5;
  std::size_t epochs = 40;
  std::size_t full_batch_limit = 256;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetricRecord {
  std::string stage;  // "supervised", "refit", "ssl_prescreen", "ssl_classification"
  std::size_t epoch = 0;
  std::optional<double> train_loss;
  std::optional<double> valid_loss;
  std::optional<double> valid_acc;
  std::optional<double> ssl_loss;
};

std::string to_json_line(const MetricRecord& record);

using MetricsSink = std::function<void(const MetricRecord&)>;

struct TrainValidSplit {
  TrialSet train;
  TrialSet valid;
};

// Stratified by class index; both sides keep the input order of their trials.
TrainValidSplit split_train_valid(const TrialSet& set, double valid_fraction, std::uint64_t seed);

// Tracks the best (largest) metric seen; stops after `patience` epochs
// without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);
  // Returns true when training should stop. Epochs are numbered from 1.
  bool update(std::size_t epoch, double metric);
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_metric() const noexcept { return best_metric_; }
  bool last_improved() const noexcept { return last_improved_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  double best_metric_ = 0.0;
  std::size_t since_best_ = 0;
  bool last_improved_ = false;
};

// Window of `len` samples starting at `offset`.
Matrix crop(const Matrix& trial, std::size_t offset, std::size_t len);
Matrix center_crop(const Matrix& trial, std::size_t len);

struct Evaluation {
  double loss = 0.0;      // mean cross-entropy
  double accuracy = 0.0;  // argmax agreement with the class index
};

// Eval-mode scores on the center crop of every trial.
Evaluation evaluate(const ModelBundle& bundle, const TrialSet& set);
double accuracy(const ModelBundle& bundle, const TrialSet& set);

struct SupervisedResult {
  ModelBundle bundle;
  std::size_t best_epoch = 0;
  double best_valid_loss = 0.0;
  double best_valid_acc = 0.0;
  std::size_t epochs_run = 0;
};

// Mean cross-entropy with Adam on random crops; returns the parameters of the
// epoch with the lowest validation loss.
SupervisedResult train_supervised(const ModelBundle& init, const TrialSet& train, const TrialSet& valid,
                                  const SupervisedConfig& cfg, const MetricsSink& sink = {});

// Trains for exactly `epochs` epochs without validation.
ModelBundle train_epochs(const ModelBundle& init, const TrialSet& train, std::size_t epochs,
                         const SupervisedConfig& cfg, const MetricsSink& sink = {}, const std::string& stage = "refit");

// Split, train with early stopping, then refit from `init` on the whole set.
SupervisedResult fit_supervised(const ModelBundle& init, const TrialSet& set, const SupervisedConfig& cfg,
                                const MetricsSink& sink = {});

struct TransitionTrial {
  Matrix samples;
  std::size_t rest_index = 0;  // index into the binary set
  std::size_t mi_index = 0;
};

// Each output averages one uniformly drawn rest trial with one uniformly drawn MI trial.
std::vector<TransitionTrial> make_transition_trials(const TrialSet& binary_set, std::size_t n_out,
                                                    std::uint64_t seed);

// phi <- lambda * phi + (1 - lambda) * theta
void ema_update(std::vector<Tensor>& phi, const std::vector<Tensor>& theta, double lambda);

// Prescreen objective on raw embeddings (normalized here):
// delta * k(theta(X), phi(X_hat)) - k(theta(X), phi(X)).
ad::Var prescreen_contrastive_loss(ad::Tape& tape, ad::Var theta_pos, ad::Var phi_pos, ad::Var phi_neg,
                                   double delta, double sigma);
// Classification objective: -k(theta(X_1), phi(X_2)).
ad::Var classification_contrastive_loss(ad::Tape& tape, ad::Var theta_view1, ad::Var phi_view2, double sigma);

// Refines theta of a binary bundle. `transitions` pairs index-to-index with
// the trials of `binary_set`. psi is left untouched and phi is discarded on return.
ModelBundle ssl_prescreen(const ModelBundle& bundle, const TrialSet& binary_set,
                          std::span<const TransitionTrial> transitions, const SslConfig& cfg,
                          const MetricsSink& sink = {});

ModelBundle ssl_classification(const ModelBundle& bundle, const TrialSet& multiclass_set, const SslConfig& cfg,
                               const augment::AugmentParams& aug, const MetricsSink& sink = {});

struct AdaptReport {
  ModelBundle prescreen;
  ModelBundle classifier;
  std::size_t n_predicted_mi = 0;
  std::size_t n_predicted_rest = 0;
  std::vector<std::string> warnings;
};

// SSL on unlabeled test windows. Windows predicted MI (p_bar >= tau) and rest
// stand in for the two binary classes; the MI subset then refines the
// classifier. At most `max_windows` windows, evenly spaced, are used.
AdaptReport ssl_offline_adapt(const ModelBundle& prescreen, const ModelBundle& classifier,
                              std::span<const Matrix> windows, double tau, const SslConfig& cfg,
                              const augment::AugmentParams& aug, std::size_t max_windows = 512,
                              const MetricsSink& sink = {});

}  // namespace swpc::training
