// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/model_config.hpp"

#include <cmath>
#include <set>

namespace ecgcloud::model {

namespace {

[[noreturn]] void invalid(const std::string& why) {
  throw ValidationError("INVALID_CONFIG", "model config: " + why);
}

}  // namespace

std::vector<Label> default_vocabulary() {
  return {{"NSR", "Normal sinus rhythm"},
          {"AF", "Atrial fibrillation"},
          {"AVBI", "First-degree atrioventricular block"},
          {"LBBB", "Left bundle branch block"},
          {"RBBB", "Right bundle branch block"},
          {"PAC", "Premature atrial contraction"},
          {"PVC", "Premature ventricular contraction"}};
}

void ModelConfig::validate() const {
  if (input_channels != ecg::channel_count(lead_configuration)) {
    invalid("input_channels must be 1 for single-lead and 12 for twelve-lead");
  }
  if (!(model_rate_hz >= ecg::kMinSampleRateHz && model_rate_hz <= ecg::kMaxSampleRateHz)) {
    invalid("model_rate_hz must lie in [50, 2000]");
  }
  if (!(segment_seconds > 0.0) || segment_samples() == 0) invalid("segment is empty");
  if (conv_layers == 0 || base_filters == 0 || rnn_hidden == 0) {
    invalid("conv_layers, base_filters and rnn_hidden must be positive");
  }
  if (kernel_size == 0 || kernel_size % 2 == 0) invalid("kernel_size must be odd");
  if (downsample_every == 0 || filter_double_every == 0 || shortcut_every == 0) {
    invalid("layer periods must be positive");
  }
  if (conv_layers % shortcut_every != 0 || conv_layers % downsample_every != 0) {
    invalid("conv_layers must be divisible by shortcut_every and downsample_every");
  }
  if (rnn_cell != "gru") invalid("unsupported rnn_cell '" + rnn_cell + "'");
  if (labels.empty()) invalid("label vocabulary is empty");
  std::set<std::string> codes;
  for (const auto& l : labels) {
    if (l.code.empty() || !codes.insert(l.code).second) invalid("label codes must be unique");
  }
}

std::size_t ModelConfig::filters_at(std::size_t layer) const {
  return base_filters << ((layer - 1) / filter_double_every);
}

std::size_t ModelConfig::stride_at(std::size_t layer) const {
  return layer % downsample_every == 0 ? 2 : 1;
}

std::size_t ModelConfig::segment_samples() const {
  return static_cast<std::size_t>(std::llround(segment_seconds * model_rate_hz));
}

std::size_t ModelConfig::trunk_output_length(std::size_t length) const {
  for (std::size_t layer = 1; layer <= conv_layers; ++layer) {
    const std::size_t s = stride_at(layer);
    length = (length + s - 1) / s;
  }
  return length;
}

ModelConfig default_config(ecg::LeadConfiguration leads) {
  ModelConfig c;
  c.lead_configuration = leads;
  c.input_channels = ecg::channel_count(leads);
  return c;
}

ModelConfig toy_config(ecg::LeadConfiguration leads) {
  ModelConfig c = default_config(leads);
  c.conv_layers = 8;
  c.base_filters = 4;
  c.filter_double_every = 4;
  c.rnn_hidden = 32;
  c.head_hidden = 16;
  return c;
}

void to_json(nlohmann::json& j, const Label& label) {
  j = nlohmann::json{{"code", label.code}, {"name", label.name}};
}

void from_json(const nlohmann::json& j, Label& label) {
  j.at("code").get_to(label.code);
  j.at("name").get_to(label.name);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"lead_configuration", std::string(ecg::to_string(c.lead_configuration))},
                     {"input_channels", c.input_channels},
                     {"model_rate_hz", c.model_rate_hz},
                     {"segment_seconds", c.segment_seconds},
                     {"conv_layers", c.conv_layers},
                     {"base_filters", c.base_filters},
                     {"kernel_size", c.kernel_size},
                     {"downsample_every", c.downsample_every},
                     {"filter_double_every", c.filter_double_every},
                     {"shortcut_every", c.shortcut_every},
                     {"rnn_cell", c.rnn_cell},
                     {"rnn_hidden", c.rnn_hidden},
                     {"head_hidden", c.head_hidden},
                     {"labels", c.labels}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  const std::string leads = j.at("lead_configuration").get<std::string>();
  if (leads == "single_lead") {
    c.lead_configuration = ecg::LeadConfiguration::SingleLead;
  } else if (leads == "twelve_lead") {
    c.lead_configuration = ecg::LeadConfiguration::TwelveLead;
  } else {
    invalid("unknown lead_configuration '" + leads + "'");
  }
  c.input_channels = j.value("input_channels", ecg::channel_count(c.lead_configuration));
  c.model_rate_hz = j.value("model_rate_hz", c.model_rate_hz);
  c.segment_seconds = j.value("segment_seconds", c.segment_seconds);
  c.conv_layers = j.value("conv_layers", c.conv_layers);
  c.base_filters = j.value("base_filters", c.base_filters);
  c.kernel_size = j.value("kernel_size", c.kernel_size);
  c.downsample_every = j.value("downsample_every", c.downsample_every);
  c.filter_double_every = j.value("filter_double_every", c.filter_double_every);
  c.shortcut_every = j.value("shortcut_every", c.shortcut_every);
  c.rnn_cell = j.value("rnn_cell", c.rnn_cell);
  c.rnn_hidden = j.value("rnn_hidden", c.rnn_hidden);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  if (j.contains("labels")) j.at("labels").get_to(c.labels);
}

}  // namespace ecgcloud::model
