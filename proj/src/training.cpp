// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "ecgcloud/metrics.hpp"
#include "ecgcloud/ops.hpp"

namespace ecgcloud::train {

namespace {

std::vector<double> resolve_weights(std::span<const double> weights, std::size_t n) {
  if (weights.empty()) return std::vector<double>(n, 1.0);
  if (weights.size() != n) {
    throw ValidationError("LENGTH_MISMATCH", "label weights do not match the label count");
  }
  return {weights.begin(), weights.end()};
}

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

}  // namespace

nn::Var bce_multilabel_loss(nn::Tape& tape, nn::Var probabilities, std::span<const double> targets,
                            std::span<const double> weights) {
  const nn::Tensor& p = tape.value(probabilities);
  const std::size_t n = p.size();
  if (targets.size() != n || n == 0) {
    throw ValidationError("LENGTH_MISMATCH", "predictions and targets differ in length");
  }
  const std::vector<double> w = resolve_weights(weights, n);
  const std::vector<double> y(targets.begin(), targets.end());
  const double loss = bce_multilabel_loss(p.data(), targets, w);
  return tape.push(nn::Tensor::scalar(loss), tape.needs_grad(probabilities.id),
                   [=](nn::Tape& t, std::size_t self) {
                     const double g = t.grad_of(self)[0];
                     const nn::Tensor& pv = t.value_of(probabilities.id);
                     nn::Tensor& dp = t.grad_of(probabilities.id);
                     for (std::size_t i = 0; i < n; ++i) {
                       // Zero gradient where the clamp is active.
                       const double pi = pv[i];
                       if (pi < kProbabilityClamp || pi > 1.0 - kProbabilityClamp) continue;
                       const double d = -y[i] / pi + (1.0 - y[i]) / (1.0 - pi);
                       dp[i] += g * w[i] * d / static_cast<double>(n);
                     }
                   });
}

double bce_multilabel_loss(std::span<const double> probabilities, std::span<const double> targets,
                           std::span<const double> weights) {
  const std::size_t n = probabilities.size();
  if (targets.size() != n || n == 0) {
    throw ValidationError("LENGTH_MISMATCH", "predictions and targets differ in length");
  }
  const std::vector<double> w = resolve_weights(weights, n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = clamp_probability(probabilities[i]);
    acc += -w[i] * (targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p));
  }
  return acc / static_cast<double>(n);
}

void SgdMomentum::step(std::map<std::string, nn::Parameter>& params, double lr) {
  for (const auto& [name, p] : params) {
    if (!p.grad_ready) {
      throw Error("GRADIENT_NOT_READY", "optimizer step before backward for parameter " + name);
    }
  }
  for (auto& [name, p] : params) {
    auto it = velocity_.find(name);
    if (it == velocity_.end()) it = velocity_.emplace(name, nn::Tensor(p.value.shape())).first;
    nn::Tensor& v = it->second;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = momentum_ * v[i] - lr * p.grad[i];
      p.value[i] += v[i];
    }
    p.zero_grad();
  }
}

double clip_grad_norm(std::map<std::string, nn::Parameter>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    for (double g : p.grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [name, p] : params) {
      for (double& g : p.grad.values()) g *= factor;
    }
  }
  return norm;
}

PlateauScheduler::PlateauScheduler(double initial_lr, double factor, std::size_t patience_batches)
    : initial_lr_(initial_lr), factor_(factor), patience_(patience_batches), lr_(initial_lr) {
  if (!(initial_lr > 0.0) || !(factor > 0.0 && factor < 1.0) || patience_batches == 0) {
    throw ValidationError("INVALID_CONFIG", "scheduler needs lr > 0, factor in (0,1), patience >= 1");
  }
}

double PlateauScheduler::update(double metric, std::size_t batches_since_last) {
  if (!best_ || metric > *best_ + kMinDelta) {
    best_ = metric;
    counter_ = 0;
    return lr_;
  }
  counter_ += batches_since_last;
  if (counter_ >= patience_) {
    counter_ = 0;
    if (lr_ > kMinLearningRate) {
      ++reductions_;
      lr_ = std::max(initial_lr_ * std::pow(factor_, static_cast<double>(reductions_)), kMinLearningRate);
    }
  }
  return lr_;
}

void TrainConfig::validate() const {
  auto fail = [](const char* why) { throw ValidationError("INVALID_CONFIG", why); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) fail("lr_factor must lie in (0, 1)");
  if (plateau_patience_batches == 0) fail("plateau patience must be at least 1");
  if (batch_size == 0) fail("batch_size must be positive");
  if (validation_every == 0) fail("validation_every must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(grad_clip_norm >= 0.0)) fail("grad_clip_norm must be non-negative");
}

Dataset make_dataset(const model::ModelConfig& config, std::span<const SyntheticRecording> recordings) {
  const auto vocab = model::default_vocabulary();
  std::vector<std::size_t> source;
  for (const auto& label : config.labels) {
    const auto it = std::find_if(vocab.begin(), vocab.end(),
                                 [&](const Label& l) { return l.code == label.code; });
    if (it == vocab.end()) throw ValidationError("LABEL_MISMATCH", "unknown label " + label.code);
    source.push_back(static_cast<std::size_t>(it - vocab.begin()));
  }
  Dataset out;
  out.labels = config.labels;
  out.examples.reserve(recordings.size());
  for (const auto& rec : recordings) {
    if (rec.labels.size() != vocab.size()) {
      throw ValidationError("LABEL_MISMATCH", "truth vector does not cover the default vocabulary");
    }
    Example ex{model::prepare_input(config, rec.recording).batch, {}};
    for (std::size_t s : source) ex.targets.push_back(rec.labels[s]);
    out.examples.push_back(std::move(ex));
  }
  return out;
}

EvaluationResult evaluate(const model::CardioNet& net, const Dataset& data) {
  const std::size_t labels = data.labels.size();
  EvaluationResult out;
  out.probabilities.reserve(data.examples.size());
  for (const auto& ex : data.examples) {
    out.probabilities.push_back(net.forward_segments(ex.batch).probabilities);
  }
  double sum = 0.0;
  std::size_t defined = 0;
  std::vector<double> scores(data.examples.size());
  std::vector<int> truth(data.examples.size());
  for (std::size_t l = 0; l < labels; ++l) {
    int positives = 0;
    for (std::size_t i = 0; i < data.examples.size(); ++i) {
      scores[i] = out.probabilities[i][l];
      truth[i] = data.examples[i].targets[l] > 0.5 ? 1 : 0;
      positives += truth[i];
    }
    if (positives == 0 || positives == static_cast<int>(truth.size())) {
      out.label_auc.emplace_back();
      continue;
    }
    const double auc = metrics::roc_auc(scores, truth);
    out.label_auc.emplace_back(auc);
    sum += auc;
    ++defined;
  }
  if (defined == 0) {
    throw ValidationError("DEGENERATE_VALIDATION", "no label has both classes in the validation set");
  }
  out.macro_auc = sum / static_cast<double>(defined);
  return out;
}

CheckpointLedger fit(model::CardioNet& net, const Dataset& train, const Dataset& validation,
                     const TrainConfig& tc) {
  tc.validate();
  if (train.examples.empty() || validation.examples.empty()) {
    throw ValidationError("EMPTY_DATASET", "training and validation sets must be non-empty");
  }
  const auto& labels = net.config().labels;
  if (train.labels != labels || validation.labels != labels) {
    throw ValidationError("LABEL_MISMATCH", "dataset labels differ from the model vocabulary");
  }
  const std::vector<double> weights = resolve_weights(tc.label_weights, labels.size());

  CheckpointLedger ledger;
  ledger.labels = labels;
  ledger.label_best.resize(labels.size());
  PlateauScheduler scheduler(tc.learning_rate, tc.lr_factor, tc.plateau_patience_batches);
  SgdMomentum optimizer(tc.momentum);
  std::size_t last_validation = 0;

  auto validate_at = [&](std::size_t batch) {
    const EvaluationResult eval = evaluate(net, validation);
    const double lr = scheduler.update(eval.macro_auc, batch - last_validation);
    last_validation = batch;
    ledger.validations.push_back({batch, eval.label_auc, eval.macro_auc, lr});
    std::optional<nn::WeightBundle> snapshot;
    auto bundle = [&]() -> const nn::WeightBundle& {
      if (!snapshot) snapshot = net.to_bundle();
      return *snapshot;
    };
    for (std::size_t l = 0; l < labels.size(); ++l) {
      if (!eval.label_auc[l]) continue;
      auto& best = ledger.label_best[l];
      if (!best || *eval.label_auc[l] > best->auc) best = Snapshot{*eval.label_auc[l], batch, bundle()};
    }
    if (ledger.validations.size() == 1 || eval.macro_auc > ledger.macro_best.auc) {
      ledger.macro_best = Snapshot{eval.macro_auc, batch, bundle()};
    }
  };

  validate_at(0);

  std::mt19937_64 rng(tc.seed);
  std::vector<std::size_t> order(train.examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const double inv_batch = 1.0 / static_cast<double>(tc.batch_size);

  for (std::size_t batch = 1; batch <= tc.max_batches; ++batch) {
    const double lr = scheduler.learning_rate();
    double batch_loss = 0.0;
    for (std::size_t k = 0; k < tc.batch_size; ++k) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size() - 1; i > 0; --i) {
          std::swap(order[i], order[static_cast<std::size_t>(rng() % (i + 1))]);
        }
        cursor = 0;
      }
      const Example& ex = train.examples[order[cursor++]];
      nn::Tape tape;
      const auto params = net.bind(tape);
      const nn::Var probs = net.forward(tape, tape.constant_ref(ex.batch.segments), params);
      const nn::Var loss = bce_multilabel_loss(tape, probs, ex.targets, weights);
      batch_loss += tape.value(loss)[0];
      tape.backward(nn::op::scale(tape, loss, inv_batch));
    }
    if (tc.grad_clip_norm > 0.0) clip_grad_norm(net.parameters(), tc.grad_clip_norm);
    optimizer.step(net.parameters(), lr);
    ledger.batch_losses.push_back(batch_loss * inv_batch);
    ledger.learning_rates.push_back(lr);
    if (batch % tc.validation_every == 0 || batch == tc.max_batches) validate_at(batch);
  }

  if (!tc.run_dir.empty()) write_run_directory(ledger, tc.run_dir);
  return ledger;
}

void write_run_directory(const CheckpointLedger& ledger, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  using nlohmann::json;
  json manifest;
  manifest["macro"] = {{"auc", ledger.macro_best.auc},
                       {"batch", ledger.macro_best.batch},
                       {"bundle", "best_macro.ecgw"}};
  nn::save_bundle_file(ledger.macro_best.bundle, (fs::path(dir) / "best_macro.ecgw").string());
  json per_label = json::array();
  for (std::size_t l = 0; l < ledger.labels.size(); ++l) {
    const auto& best = ledger.label_best[l];
    json entry{{"code", ledger.labels[l].code}};
    if (best) {
      const std::string file = "best_" + ledger.labels[l].code + ".ecgw";
      nn::save_bundle_file(best->bundle, (fs::path(dir) / file).string());
      entry["auc"] = best->auc;
      entry["batch"] = best->batch;
      entry["bundle"] = file;
    } else {
      entry["auc"] = nullptr;
    }
    per_label.push_back(std::move(entry));
  }
  manifest["labels"] = std::move(per_label);
  json history = json::array();
  for (const auto& v : ledger.validations) {
    json aucs = json::array();
    for (const auto& a : v.label_auc) aucs.push_back(a ? json(*a) : json(nullptr));
    history.push_back({{"batch", v.batch},
                       {"macroAuc", v.macro_auc},
                       {"labelAuc", std::move(aucs)},
                       {"learningRate", v.learning_rate}});
  }
  manifest["validations"] = std::move(history);
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw Error("IO_ERROR", "cannot write manifest in " + dir);
  out << manifest.dump(2) << '\n';
}

}  // namespace ecgcloud::train
