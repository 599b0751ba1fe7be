#include "swpc/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "swpc/error.hpp"

namespace swpc::training {

using ad::Tape;
using ad::Var;

void SupervisedConfig::validate() const {
  if (!(lr > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (patience < 1) throw InvalidArgument("patience must be at least 1");
  if (max_epochs < 1) throw InvalidArgument("max_epochs must be at least 1");
  if (batch_size < 2) throw InvalidArgument("batch size must be at least 2");
  if (crops_per_trial < 1) throw InvalidArgument("crops_per_trial must be at least 1");
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) throw InvalidArgument("valid_fraction must be in (0, 1)");
}

void SslConfig::validate() const {
  if (!(delta >= 0.0)) throw InvalidArgument("delta must be non-negative");
  if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive");
  if (!(lambda > 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must be in (0, 1)");
  if (!(lr > 0.0)) throw InvalidArgument("SSL learning rate must be positive");
  if (batch_size < 2) throw InvalidArgument("SSL batch size must be at least 2");
}

std::string to_json_line(const MetricRecord& record) {
  nlohmann::ordered_json j;
  j["stage"] = record.stage;
  j["epoch"] = record.epoch;
  if (record.train_loss) j["train_loss"] = *record.train_loss;
  if (record.valid_loss) j["valid_loss"] = *record.valid_loss;
  if (record.valid_acc) j["valid_acc"] = *record.valid_acc;
  if (record.ssl_loss) j["ssl_loss"] = *record.ssl_loss;
  return j.dump();
}

TrainValidSplit split_train_valid(const TrialSet& set, double valid_fraction, std::uint64_t seed) {
  if (set.empty()) throw InvalidArgument("cannot split an empty trial set");
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) throw InvalidArgument("valid_fraction must be in (0, 1)");
  std::vector<std::vector<std::size_t>> by_class(set.n_classes());
  for (std::size_t i = 0; i < set.size(); ++i) by_class[set.class_index(set.trials[i])].push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<bool> to_valid(set.size(), false);
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& idx = by_class[k];
    if (idx.size() < 2) {
      throw InvalidArgument("class " + set.class_names[k] + " has " + std::to_string(idx.size()) +
                            " trials; at least 2 are needed to split");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_valid = static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(idx.size())));
    n_valid = std::clamp<std::size_t>(n_valid, 1, idx.size() - 1);
    for (std::size_t j = 0; j < n_valid; ++j) to_valid[idx[j]] = true;
  }

  TrainValidSplit out;
  out.train.kind = out.valid.kind = set.kind;
  out.train.class_names = out.valid.class_names = set.class_names;
  for (std::size_t i = 0; i < set.size(); ++i) (to_valid[i] ? out.valid : out.train).trials.push_back(set.trials[i]);
  return out;
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw InvalidArgument("patience must be at least 1");
}

bool EarlyStopping::update(std::size_t epoch, double metric) {
  last_improved_ = best_epoch_ == 0 || metric > best_metric_;
  if (last_improved_) {
    best_metric_ = metric;
    best_epoch_ = epoch;
    since_best_ = 0;
    return false;
  }
  return ++since_best_ >= patience_;
}

Matrix crop(const Matrix& trial, std::size_t offset, std::size_t len) {
  if (offset + len > trial.cols()) throw ShapeError("crop exceeds trial length");
  if (offset == 0 && len == trial.cols()) return trial;
  return trial.slice_cols(offset, len);
}

Matrix center_crop(const Matrix& trial, std::size_t len) {
  if (len > trial.cols()) throw ShapeError("trial shorter than the network input");
  return crop(trial, (trial.cols() - len) / 2, len);
}

namespace {

void check_set(const ModelBundle& bundle, const TrialSet& set, const char* what) {
  if (set.empty()) throw InvalidArgument(std::string(what) + " set is empty");
  if (set.n_classes() != bundle.config.n_classes) {
    throw InvalidArgument(std::string(what) + " set has " + std::to_string(set.n_classes()) +
                          " classes but the network has " + std::to_string(bundle.config.n_classes) + " outputs");
  }
  for (const Trial& t : set.trials) {
    if (t.samples.rows() != bundle.config.n_channels || t.samples.cols() < bundle.config.input_len) {
      throw ShapeError(std::string(what) + " trial of " + std::to_string(t.samples.rows()) + "x" +
                       std::to_string(t.samples.cols()) + " does not fit a " +
                       std::to_string(bundle.config.n_channels) + "x" + std::to_string(bundle.config.input_len) +
                       " network");
    }
  }
}

Matrix random_crop(const Matrix& trial, std::size_t len, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> off(0, trial.cols() - len);
  return crop(trial, off(rng), len);
}

// Shuffled minibatches; a trailing batch of one is merged into its predecessor
// so batch statistics stay defined.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < n; b += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch_size)));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

std::vector<Tensor> grads_of(const Tape& tape, std::span<const Var> vars) {
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (Var v : vars) out.push_back(tape.grad(v));
  return out;
}

struct Optimizers {
  ad::AdamState theta;
  ad::AdamState psi;
};

// One epoch of cross-entropy training; returns the mean batch loss.
double supervised_epoch(ModelBundle& b, const TrialSet& set, Optimizers& opt, const SupervisedConfig& cfg,
                        std::mt19937_64& rng) {
  const NetConfig& nc = b.config;
  double total = 0.0;
  const auto batches = make_batches(set.size() * cfg.crops_per_trial, cfg.batch_size, rng);
  for (const auto& batch : batches) {
    std::vector<Matrix> inputs;
    std::vector<std::size_t> targets;
    inputs.reserve(batch.size());
    for (std::size_t j : batch) {
      const std::size_t i = j % set.size();
      inputs.push_back(random_crop(set.trials[i].samples, nc.input_len, rng));
      targets.push_back(set.class_index(set.trials[i]));
    }
    Tape tape;
    const auto th = bind_params(tape, b.theta, true);
    const auto ps = bind_params(tape, b.psi, true);
    const Var x = tape.constant(stack_batch(std::span<const Matrix>(inputs), nc));
    const Var emb = feature_extract(tape, nc, th, b.batchnorm, x, {ad::BatchNormMode::train, &rng});
    const Var loss = ad::cross_entropy(tape, classify_logits(tape, ps, emb), targets);
    const double value = tape.value(loss)[0];
    if (!std::isfinite(value)) {
      throw TrainingError("non-finite training loss (" + std::to_string(value) + ") after " +
                          std::to_string(opt.theta.step) + " optimizer steps");
    }
    tape.backward(loss);
    ad::adam_step(opt.theta, b.theta, grads_of(tape, th));
    ad::adam_step(opt.psi, b.psi, grads_of(tape, ps));
    total += value;
  }
  return total / static_cast<double>(batches.size());
}

}  // namespace

Evaluation evaluate(const ModelBundle& bundle, const TrialSet& set) {
  if (set.empty()) throw InvalidArgument("cannot evaluate on an empty set");
  std::vector<Matrix> inputs;
  inputs.reserve(set.size());
  for (const Trial& t : set.trials) inputs.push_back(center_crop(t.samples, bundle.config.input_len));
  const auto probs = predict_proba(bundle, inputs);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& p = probs[i];
    const std::size_t target = set.class_index(set.trials[i]);
    const auto pred = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    correct += pred == target;
    loss -= std::log(std::max(p[target], 1e-300));
  }
  const auto n = static_cast<double>(set.size());
  return {loss / n, static_cast<double>(correct) / n};
}

double accuracy(const ModelBundle& bundle, const TrialSet& set) { return evaluate(bundle, set).accuracy; }

SupervisedResult train_supervised(const ModelBundle& init, const TrialSet& train, const TrialSet& valid,
                                  const SupervisedConfig& cfg, const MetricsSink& sink) {
  cfg.validate();
  check_set(init, train, "training");
  check_set(init, valid, "validation");

  ModelBundle b = init;
  Optimizers opt{ad::make_adam(cfg.lr, b.theta), ad::make_adam(cfg.lr, b.psi)};
  std::mt19937_64 rng(augment::mix_seed(cfg.seed, 101));
  EarlyStopping stopper(cfg.patience);
  SupervisedResult result{b, 0, 0.0, 0};

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double loss = supervised_epoch(b, train, opt, cfg, rng);
    const Evaluation ev = evaluate(b, valid);
    if (sink) sink({"supervised", epoch, loss, ev.loss, ev.accuracy, std::nullopt});
    result.epochs_run = epoch;
    const bool stop = stopper.update(epoch, -ev.loss);
    if (stopper.last_improved()) {
      result.bundle = b;
      result.best_valid_loss = ev.loss;
      result.best_valid_acc = ev.accuracy;
    }
    if (stop) break;
  }
  result.best_epoch = stopper.best_epoch();
  return result;
}

ModelBundle train_epochs(const ModelBundle& init, const TrialSet& train, std::size_t epochs,
                         const SupervisedConfig& cfg, const MetricsSink& sink, const std::string& stage) {
  cfg.validate();
  check_set(init, train, "training");
  ModelBundle b = init;
  Optimizers opt{ad::make_adam(cfg.lr, b.theta), ad::make_adam(cfg.lr, b.psi)};
  std::mt19937_64 rng(augment::mix_seed(cfg.seed, 102));
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const double loss = supervised_epoch(b, train, opt, cfg, rng);
    if (sink) sink({stage, epoch, loss, std::nullopt, std::nullopt, std::nullopt});
  }
  return b;
}

SupervisedResult fit_supervised(const ModelBundle& init, const TrialSet& set, const SupervisedConfig& cfg,
                                const MetricsSink& sink) {
  const auto split = split_train_valid(set, cfg.valid_fraction, cfg.seed);
  SupervisedResult result = train_supervised(init, split.train, split.valid, cfg, sink);
  if (cfg.refit) result.bundle = train_epochs(init, set, result.best_epoch, cfg, sink, "refit");
  return result;
}

std::vector<TransitionTrial> make_transition_trials(const TrialSet& binary_set, std::size_t n_out,
                                                    std::uint64_t seed) {
  if (binary_set.kind != TrialKind::binary) throw InvalidArgument("transition trials need a binary set");
  std::vector<std::size_t> rest;
  std::vector<std::size_t> mi;
  for (std::size_t i = 0; i < binary_set.size(); ++i) {
    (binary_set.trials[i].label == kRestLabel ? rest : mi).push_back(i);
  }
  if (rest.empty() || mi.empty()) throw InvalidArgument("transition trials need both rest and MI trials");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_rest(0, rest.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_mi(0, mi.size() - 1);
  std::vector<TransitionTrial> out;
  out.reserve(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const std::size_t r = rest[pick_rest(rng)];
    const std::size_t m = mi[pick_mi(rng)];
    const Matrix& a = binary_set.trials[r].samples;
    const Matrix& b = binary_set.trials[m].samples;
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("rest and MI trials differ in shape");
    Matrix mixed(a.rows(), a.cols());
    for (std::size_t j = 0; j < mixed.size(); ++j) mixed.data()[j] = 0.5 * (a.data()[j] + b.data()[j]);
    out.push_back({std::move(mixed), r, m});
  }
  return out;
}

void ema_update(std::vector<Tensor>& phi, const std::vector<Tensor>& theta, double lambda) {
  if (phi.size() != theta.size()) throw ShapeError("EMA target and online parameter lists differ in length");
  for (std::size_t p = 0; p < phi.size(); ++p) {
    if (phi[p].shape() != theta[p].shape()) throw ShapeError("EMA parameter shape mismatch");
    for (std::size_t i = 0; i < phi[p].size(); ++i) phi[p][i] = lambda * phi[p][i] + (1.0 - lambda) * theta[p][i];
  }
}

Var prescreen_contrastive_loss(Tape& tape, Var theta_pos, Var phi_pos, Var phi_neg, double delta, double sigma) {
  const Var a = ad::l2_normalize(tape, theta_pos);
  const Var pos = ad::gaussian_kernel_similarity(tape, a, ad::l2_normalize(tape, phi_pos), sigma);
  const Var neg = ad::gaussian_kernel_similarity(tape, a, ad::l2_normalize(tape, phi_neg), sigma);
  return ad::add(tape, ad::scale(tape, neg, delta), ad::scale(tape, pos, -1.0));
}

Var classification_contrastive_loss(Tape& tape, Var theta_view1, Var phi_view2, double sigma) {
  const Var sim = ad::gaussian_kernel_similarity(tape, ad::l2_normalize(tape, theta_view1),
                                                 ad::l2_normalize(tape, phi_view2), sigma);
  return ad::scale(tape, sim, -1.0);
}

namespace {

// Shared SSL loop: `make_views` fills (online input, target inputs...) for a
// batch and `loss_fn` combines the embeddings.
struct SslBatch {
  std::vector<Matrix> online;
  std::vector<std::vector<Matrix>> targets;
};

template <typename MakeBatch, typename LossFn>
ModelBundle run_ssl(const ModelBundle& bundle, std::size_t n, const SslConfig& cfg, const std::string& stage,
                    const MetricsSink& sink, std::uint64_t stream, MakeBatch make_batch, LossFn loss_fn) {
  cfg.validate();
  ModelBundle b = bundle;
  if (cfg.epochs == 0 || n == 0) {
    b.phi.reset();
    return b;
  }
  b.phi = b.theta;
  std::vector<ad::BatchNormState> phi_bn = b.batchnorm;
  ad::AdamState opt = ad::make_adam(cfg.lr, b.theta);
  std::mt19937_64 rng(augment::mix_seed(cfg.seed, stream));
  const NetConfig& nc = b.config;
  const std::size_t batch_size = n <= cfg.full_batch_limit ? n : cfg.batch_size;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = make_batches(n, batch_size, rng);
    double total = 0.0;
    for (const auto& idx : batches) {
      const SslBatch views = make_batch(idx, rng);
      Tape tape;
      const auto th = bind_params(tape, b.theta, true);
      const auto ph = bind_params(tape, *b.phi, false);
      const Var x = tape.constant(stack_batch(std::span<const Matrix>(views.online), nc));
      // Batchnorm keeps its supervised running statistics on both branches:
      // SSL then refines exactly the feature map the frozen head reads.
      const Var online = feature_extract(tape, nc, th, b.batchnorm, x, {ad::BatchNormMode::eval, &rng});
      std::vector<Var> target;
      for (const auto& t : views.targets) {
        const Var xt = tape.constant(stack_batch(std::span<const Matrix>(t), nc));
        target.push_back(feature_extract(tape, nc, ph, phi_bn, xt, ForwardMode::eval()));
      }
      const Var loss = loss_fn(tape, online, target);
      const double value = tape.value(loss)[0];
      if (!std::isfinite(value)) throw TrainingError(stage + ": non-finite SSL loss at epoch " + std::to_string(epoch));
      tape.backward(loss);
      ad::adam_step(opt, b.theta, grads_of(tape, th));
      ema_update(*b.phi, b.theta, cfg.lambda);
      total += value;
    }
    if (sink) sink({stage, epoch, std::nullopt, std::nullopt, std::nullopt, total / static_cast<double>(batches.size())});
  }
  b.phi.reset();
  return b;
}

}  // namespace

ModelBundle ssl_prescreen(const ModelBundle& bundle, const TrialSet& binary_set,
                          std::span<const TransitionTrial> transitions, const SslConfig& cfg,
                          const MetricsSink& sink) {
  check_set(bundle, binary_set, "SSL");
  if (transitions.size() != binary_set.size()) {
    throw InvalidArgument("need one transition trial per positive trial (" + std::to_string(binary_set.size()) +
                          "), got " + std::to_string(transitions.size()));
  }
  const std::size_t len = bundle.config.input_len;
  for (const auto& t : transitions) {
    if (t.samples.rows() != bundle.config.n_channels || t.samples.cols() < len) {
      throw ShapeError("transition trial does not fit the network input");
    }
  }
  auto make_batch = [&](const std::vector<std::size_t>& idx, std::mt19937_64& rng) {
    SslBatch views;
    views.targets.resize(2);
    for (std::size_t i : idx) {
      Matrix pos = random_crop(binary_set.trials[i].samples, len, rng);
      views.online.push_back(pos);
      views.targets[0].push_back(std::move(pos));
      views.targets[1].push_back(random_crop(transitions[i].samples, len, rng));
    }
    return views;
  };
  auto loss_fn = [&](Tape& tape, Var online, const std::vector<Var>& target) {
    return prescreen_contrastive_loss(tape, online, target[0], target[1], cfg.delta, cfg.sigma);
  };
  return run_ssl(bundle, binary_set.size(), cfg, "ssl_prescreen", sink, 201, make_batch, loss_fn);
}

ModelBundle ssl_classification(const ModelBundle& bundle, const TrialSet& multiclass_set, const SslConfig& cfg,
                               const augment::AugmentParams& aug, const MetricsSink& sink) {
  aug.validate();
  if (multiclass_set.empty()) throw InvalidArgument("SSL set is empty");
  const std::size_t len = bundle.config.input_len;
  for (const Trial& t : multiclass_set.trials) {
    if (t.samples.rows() != bundle.config.n_channels || t.samples.cols() < len) {
      throw ShapeError("SSL trial does not fit the network input");
    }
  }
  auto make_batch = [&](const std::vector<std::size_t>& idx, std::mt19937_64& rng) {
    SslBatch views;
    views.targets.resize(1);
    for (std::size_t i : idx) {
      const Matrix base = random_crop(multiclass_set.trials[i].samples, len, rng);
      auto pair = augment::pick_two_distinct(base, aug, rng());
      views.online.push_back(std::move(pair.first));
      views.targets[0].push_back(std::move(pair.second));
    }
    return views;
  };
  auto loss_fn = [&](Tape& tape, Var online, const std::vector<Var>& target) {
    return classification_contrastive_loss(tape, online, target[0], cfg.sigma);
  };
  return run_ssl(bundle, multiclass_set.size(), cfg, "ssl_classification", sink, 202, make_batch, loss_fn);
}

AdaptReport ssl_offline_adapt(const ModelBundle& prescreen, const ModelBundle& classifier,
                              std::span<const Matrix> windows, double tau, const SslConfig& cfg,
                              const augment::AugmentParams& aug, std::size_t max_windows, const MetricsSink& sink) {
  if (max_windows < 2) throw InvalidArgument("offline adaptation needs at least two windows");
  AdaptReport report{prescreen, classifier, 0, 0, {}};
  if (windows.empty()) {
    report.warnings.emplace_back("no test windows; adaptation skipped");
    return report;
  }
  const std::size_t stride = (windows.size() + max_windows - 1) / max_windows;
  std::vector<Matrix> used;
  for (std::size_t i = 0; i < windows.size(); i += stride) used.push_back(windows[i]);

  const auto p_bar = predict_proba(prescreen, used);
  TrialSet binary;
  binary.kind = TrialKind::binary;
  binary.class_names = {"rest", "mi"};
  TrialSet mi_set;
  mi_set.kind = TrialKind::multiclass;
  mi_set.class_names = default_class_names(classifier.config.n_classes);
  for (std::size_t i = 0; i < used.size(); ++i) {
    const bool is_mi = p_bar[i][1] >= tau;
    binary.trials.push_back({used[i], static_cast<std::uint16_t>(is_mi ? 1 : 0)});
    if (is_mi) mi_set.trials.push_back({used[i], 1});
  }
  report.n_predicted_mi = mi_set.size();
  report.n_predicted_rest = used.size() - mi_set.size();

  if (report.n_predicted_mi > 0 && report.n_predicted_rest > 0) {
    const auto transitions = make_transition_trials(binary, binary.size(), augment::mix_seed(cfg.seed, 301));
    report.prescreen = ssl_prescreen(prescreen, binary, transitions, cfg, sink);
  } else {
    report.warnings.emplace_back("test windows were all predicted " +
                                 std::string(report.n_predicted_mi == 0 ? "rest" : "MI") +
                                 "; prescreen adaptation skipped");
  }
  if (report.n_predicted_mi > 0) {
    report.classifier = ssl_classification(classifier, mi_set, cfg, aug, sink);
  } else {
    report.warnings.emplace_back("no test windows predicted MI; classification adaptation skipped");
  }
  return report;
}

}  // namespace swpc::training
