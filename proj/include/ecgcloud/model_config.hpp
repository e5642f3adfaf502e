// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgcloud/ecg.hpp"

namespace ecgcloud::model {

struct Label {
  std::string code;
  std::string name;
  friend bool operator==(const Label&, const Label&) = default;
};

/// NSR plus the six arrhythmia labels the detector is evaluated on.
std::vector<Label> default_vocabulary();

/// Architecture hyperparameters. Layer indices below are 1-based.
struct ModelConfig {
  ecg::LeadConfiguration lead_configuration = ecg::LeadConfiguration::TwelveLead;
  std::size_t input_channels = 12;
  double model_rate_hz = 250.0;
  double segment_seconds = 2.0;
  std::size_t conv_layers = 32;
  std::size_t base_filters = 32;
  std::size_t kernel_size = 9;
  std::size_t downsample_every = 4;
  std::size_t filter_double_every = 8;
  std::size_t shortcut_every = 2;
  std::string rnn_cell = "gru";
  std::size_t rnn_hidden = 64;
  std::size_t head_hidden = 64;  // 0 disables the hidden dense layer
  std::vector<Label> labels = default_vocabulary();

  /// Throws ValidationError("INVALID_CONFIG") on any invariant violation.
  void validate() const;

  std::size_t filters_at(std::size_t layer) const;
  std::size_t stride_at(std::size_t layer) const;
  std::size_t segment_samples() const;
  /// Trunk output length for a segment of `length` samples.
  std::size_t trunk_output_length(std::size_t length) const;
  std::size_t embedding_size() const { return filters_at(conv_layers); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Full-size 32-layer architecture for the given lead configuration.
ModelConfig default_config(ecg::LeadConfiguration leads);
/// Eight-layer configuration small enough to train on a desktop.
ModelConfig toy_config(ecg::LeadConfiguration leads);

void to_json(nlohmann::json& j, const Label& label);
void from_json(const nlohmann::json& j, Label& label);
void to_json(nlohmann::json& j, const ModelConfig& config);
void from_json(const nlohmann::json& j, ModelConfig& config);

}  // namespace ecgcloud::model
