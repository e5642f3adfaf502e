// SPDX-License-Identifier: Apache-2.0
//
// Segment-wise residual CNN -> GRU -> multi-label sigmoid heads.
//
// A recording is cut into fixed-length segments. Every segment runs through
// the same convolutional trunk; the trunk output is averaged over time to
// one embedding per segment, the GRU reads the embeddings in order, and the
// dense heads score each label independently from the final hidden state.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecgcloud/autodiff.hpp"
#include "ecgcloud/bundle.hpp"
#include "ecgcloud/dsp.hpp"
#include "ecgcloud/ecg.hpp"
#include "ecgcloud/model_config.hpp"

namespace ecgcloud::model {

/// Per-label probabilities ordered like the model's label vocabulary.
struct Prediction {
  std::vector<double> probabilities;
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct ConvLayerSpec {
  std::size_t layer;  // 1-based
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t stride;
};

struct ResidualBlockSpec {
  std::size_t index;  // 0-based
  std::size_t first_layer;
  std::size_t last_layer;
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t stride;
  bool projection;
};

std::vector<ConvLayerSpec> conv_plan(const ModelConfig& config);
std::vector<ResidualBlockSpec> block_plan(const ModelConfig& config);

using BoundParams = std::map<std::string, nn::Var>;

class CardioNet {
 public:
  /// Uniform weights and zero biases drawn from a seeded mt19937_64 stream
  /// in parameter-name order: He limits for trunk and hidden-head weights
  /// (they feed ReLUs), Glorot limits for the GRU and output layer.
  static CardioNet build(const ModelConfig& config, std::uint64_t seed);
  /// Throws BundleError("SHAPE_MISMATCH") when the tensors do not match the
  /// embedded config.
  static CardioNet from_bundle(const nn::WeightBundle& bundle);
  nn::WeightBundle to_bundle() const;

  const ModelConfig& config() const noexcept { return config_; }
  std::map<std::string, nn::Parameter>& parameters() noexcept { return params_; }
  const std::map<std::string, nn::Parameter>& parameters() const noexcept { return params_; }
  nn::Parameter& parameter(const std::string& name) { return params_.at(name); }
  const nn::Parameter& parameter(const std::string& name) const { return params_.at(name); }

  /// Puts every parameter on the tape: as gradient-tracked leaves when the
  /// tape records, as non-owning constants otherwise.
  BoundParams bind(nn::Tape& tape);
  BoundParams bind(nn::Tape& tape) const;

  /// [S x C x L] segments -> trunk output [S x F x L'].
  nn::Var trunk(nn::Tape& tape, nn::Var segments, const BoundParams& p) const;
  /// One residual block on its own, exposed for inspection.
  nn::Var block(nn::Tape& tape, nn::Var input, const ResidualBlockSpec& spec,
                const BoundParams& p) const;
  /// [S x C x L] -> [S x F] segment embeddings.
  nn::Var embed(nn::Tape& tape, nn::Var segments, const BoundParams& p) const;
  /// Embeddings -> per-label logits [labels].
  nn::Var head_logits(nn::Tape& tape, nn::Var embeddings, const BoundParams& p) const;
  /// Full pipeline to probabilities [labels].
  nn::Var forward(nn::Tape& tape, nn::Var segments, const BoundParams& p) const;

  Prediction forward_segments(const dsp::SegmentBatch& batch) const;
  nn::Tensor segment_embeddings(const nn::Tensor& segments) const;

 private:
  explicit CardioNet(ModelConfig config) : config_(std::move(config)) {}
  void check_input(const nn::Tensor& segments) const;

  ModelConfig config_;
  std::map<std::string, nn::Parameter> params_;
};

/// Names and shapes of every parameter tensor the config dictates.
std::map<std::string, nn::Shape> parameter_shapes(const ModelConfig& config);

/// Preprocessing shared by inference and training: physical units, lead
/// selection, resampling to the model rate, band-pass, per-channel
/// standardization and segmentation.
struct PreparedInput {
  dsp::SegmentBatch batch;
  std::vector<double> filtered_lead_i;  // at the model rate
  double rate_hz = 0.0;
};

PreparedInput prepare_input(const ModelConfig& config, const ecg::EcgRecording& rec);

/// Subtracts the mean and divides by max(std, 1e-6), per channel.
ecg::PhysicalSignal standardize(const ecg::PhysicalSignal& signal);

struct PredictResult {
  Prediction prediction;
  std::optional<dsp::RrMeasurements> measurements;
};

PredictResult predict(const CardioNet& net, const ecg::EcgRecording& rec);

/// Rate statistics from the filtered lead I; empty when fewer than two
/// beats are found or the lead is under 2 s.
std::optional<dsp::RrMeasurements> measure_rhythm(std::span<const double> filtered_lead,
                                                  double rate_hz);

/// Per-label maximum across chunk predictions.
Prediction aggregate_chunks(std::span<const Prediction> predictions);

}  // namespace ecgcloud::model
