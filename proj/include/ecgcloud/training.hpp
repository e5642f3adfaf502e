// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecgcloud/autodiff.hpp"
#include "ecgcloud/bundle.hpp"
#include "ecgcloud/cardionet.hpp"
#include "ecgcloud/synthetic.hpp"

namespace ecgcloud::train {

using model::Label;

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean over labels of weight_i * BCE(p_i, y_i), p clamped to
/// [1e-7, 1 - 1e-7]. Empty weights mean all ones. Throws
/// ValidationError("LENGTH_MISMATCH").
nn::Var bce_multilabel_loss(nn::Tape& tape, nn::Var probabilities, std::span<const double> targets,
                            std::span<const double> weights = {});
double bce_multilabel_loss(std::span<const double> probabilities, std::span<const double> targets,
                           std::span<const double> weights = {});

class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum = 0.9) : momentum_(momentum) {}

  /// velocity = momentum * velocity - lr * grad; value += velocity; then
  /// zeroes every gradient. Throws Error("GRADIENT_NOT_READY") if any
  /// parameter has not been through backward since its last step.
  void step(std::map<std::string, nn::Parameter>& params, double lr);

  double momentum() const noexcept { return momentum_; }

 private:
  double momentum_;
  std::map<std::string, nn::Tensor> velocity_;
};

/// Global L2 norm of every gradient; scales all of them down to `max_norm`
/// when larger. Returns the norm before clipping.
double clip_grad_norm(std::map<std::string, nn::Parameter>& params, double max_norm);

class PlateauScheduler {
 public:
  static constexpr double kMinLearningRate = 1e-6;
  static constexpr double kMinDelta = 1e-6;

  PlateauScheduler(double initial_lr, double factor, std::size_t patience_batches);

  /// Feeds one validation metric (higher is better). `batches_since_last`
  /// is the gap to the previous validation and counts toward patience when
  /// the metric does not improve. Returns the learning rate to use next.
  double update(double metric, std::size_t batches_since_last);

  double learning_rate() const noexcept { return lr_; }
  std::size_t reductions() const noexcept { return reductions_; }
  std::optional<double> best() const noexcept { return best_; }
  std::size_t stagnant_batches() const noexcept { return counter_; }

 private:
  double initial_lr_;
  double factor_;
  std::size_t patience_;
  double lr_;
  std::size_t reductions_ = 0;
  std::size_t counter_ = 0;
  std::optional<double> best_;
};

/// Production plateau patience; desk runs default to 50.
inline constexpr std::size_t kProductionPatienceBatches = 5000;

struct TrainConfig {
  double learning_rate = 1e-3;
  double lr_factor = 0.1;
  std::size_t plateau_patience_batches = 50;
  std::size_t batch_size = 16;
  std::size_t max_batches = 1000;
  std::size_t validation_every = 25;
  std::uint64_t seed = 1;
  double momentum = 0.9;
  /// Rescales the batch gradient to this global L2 norm when it is larger;
  /// 0 disables clipping.
  double grad_clip_norm = 0.0;
  /// Per-label loss weights; empty means uniform.
  std::vector<double> label_weights;
  /// When set, snapshots and manifest.json are written here after fit.
  std::string run_dir;

  /// Throws ValidationError("INVALID_CONFIG").
  void validate() const;
};

struct Example {
  dsp::SegmentBatch batch;      // model-ready segments
  std::vector<double> targets;  // one 0/1 entry per model label
};

struct Dataset {
  std::vector<Label> labels;
  std::vector<Example> examples;
};

/// Preprocesses recordings for `config` and projects their default-
/// vocabulary truth vectors onto config.labels by code. Throws
/// ValidationError("LABEL_MISMATCH") for a model label outside the default
/// vocabulary.
Dataset make_dataset(const model::ModelConfig& config, std::span<const SyntheticRecording> recordings);

struct Snapshot {
  double auc = 0.0;
  std::size_t batch = 0;
  nn::WeightBundle bundle;
};

struct ValidationRecord {
  std::size_t batch = 0;
  /// Empty entry when the validation set has only one class for the label.
  std::vector<std::optional<double>> label_auc;
  double macro_auc = 0.0;
  double learning_rate = 0.0;
};

struct CheckpointLedger {
  std::vector<Label> labels;
  std::vector<std::optional<Snapshot>> label_best;
  Snapshot macro_best;
  std::vector<ValidationRecord> validations;
  std::vector<double> batch_losses;
  std::vector<double> learning_rates;  // lr used for each batch
};

struct EvaluationResult {
  std::vector<std::optional<double>> label_auc;
  double macro_auc = 0.0;
  std::vector<std::vector<double>> probabilities;  // per example
};

/// Throws ValidationError("DEGENERATE_VALIDATION") when no label has both
/// classes present.
EvaluationResult evaluate(const model::CardioNet& net, const Dataset& data);

/// Throws ValidationError("EMPTY_DATASET") or ("LABEL_MISMATCH").
CheckpointLedger fit(model::CardioNet& net, const Dataset& train, const Dataset& validation,
                     const TrainConfig& tc);

/// best_macro.ecgw, best_<CODE>.ecgw and manifest.json.
void write_run_directory(const CheckpointLedger& ledger, const std::string& dir);

}  // namespace ecgcloud::train
