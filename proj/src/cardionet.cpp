// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/cardionet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "ecgcloud/ops.hpp"

namespace ecgcloud::model {

namespace {

std::string conv_name(std::size_t layer, const char* what) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "trunk.conv%02zu.%s", layer, what);
  return buf;
}

std::string proj_name(std::size_t block, const char* what) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "trunk.block%02zu.proj.%s", block, what);
  return buf;
}

constexpr const char* kGruGates[] = {"update", "reset", "cand"};

// Uniform [0, 1) from the top 53 bits so the draw does not depend on the
// standard library's distribution implementation.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::pair<double, double> fans(const std::string& name, const nn::Shape& shape) {
  if (shape.size() == 3) {
    return {static_cast<double>(shape[1] * shape[2]), static_cast<double>(shape[0] * shape[2])};
  }
  (void)name;
  return {static_cast<double>(shape[1]), static_cast<double>(shape[0])};
}

bool is_bias(const nn::Shape& shape) { return shape.size() == 1; }

}  // namespace

std::vector<ConvLayerSpec> conv_plan(const ModelConfig& c) {
  std::vector<ConvLayerSpec> plan;
  std::size_t in = c.input_channels;
  for (std::size_t layer = 1; layer <= c.conv_layers; ++layer) {
    plan.push_back({layer, in, c.filters_at(layer), c.stride_at(layer)});
    in = c.filters_at(layer);
  }
  return plan;
}

std::vector<ResidualBlockSpec> block_plan(const ModelConfig& c) {
  const auto layers = conv_plan(c);
  std::vector<ResidualBlockSpec> blocks;
  for (std::size_t b = 0; b * c.shortcut_every < c.conv_layers; ++b) {
    const auto& first = layers[b * c.shortcut_every];
    const auto& last = layers[(b + 1) * c.shortcut_every - 1];
    std::size_t stride = 1;
    for (std::size_t l = first.layer; l <= last.layer; ++l) stride *= layers[l - 1].stride;
    blocks.push_back({b, first.layer, last.layer, first.in_channels, last.out_channels, stride,
                      first.in_channels != last.out_channels || stride != 1});
  }
  return blocks;
}

std::map<std::string, nn::Shape> parameter_shapes(const ModelConfig& c) {
  std::map<std::string, nn::Shape> shapes;
  for (const auto& l : conv_plan(c)) {
    shapes[conv_name(l.layer, "weight")] = {l.out_channels, l.in_channels, c.kernel_size};
    shapes[conv_name(l.layer, "bias")] = {l.out_channels};
  }
  for (const auto& b : block_plan(c)) {
    if (!b.projection) continue;
    shapes[proj_name(b.index, "weight")] = {b.out_channels, b.in_channels, 1};
    shapes[proj_name(b.index, "bias")] = {b.out_channels};
  }
  const std::size_t e = c.embedding_size();
  const std::size_t h = c.rnn_hidden;
  for (const char* gate : kGruGates) {
    shapes[std::string("rnn.w_") + gate] = {h, e};
    shapes[std::string("rnn.u_") + gate] = {h, h};
    shapes[std::string("rnn.b_") + gate] = {h};
  }
  std::size_t head_in = h;
  if (c.head_hidden > 0) {
    shapes["head.hidden.weight"] = {c.head_hidden, h};
    shapes["head.hidden.bias"] = {c.head_hidden};
    head_in = c.head_hidden;
  }
  shapes["head.out.weight"] = {c.labels.size(), head_in};
  shapes["head.out.bias"] = {c.labels.size()};
  return shapes;
}

CardioNet CardioNet::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  CardioNet net(config);
  std::mt19937_64 rng(seed);
  for (const auto& [name, shape] : parameter_shapes(config)) {
    nn::Tensor value(shape);
    if (!is_bias(shape)) {
      const auto [fan_in, fan_out] = fans(name, shape);
      // He-uniform ahead of ReLUs, Glorot-uniform elsewhere.
      const bool relu_fed = name.rfind("trunk.", 0) == 0 || name.rfind("head.hidden.", 0) == 0;
      const double limit = relu_fed ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : value.values()) v = (2.0 * unit_uniform(rng) - 1.0) * limit;
    }
    net.params_.emplace(name, nn::Parameter(std::move(value)));
  }
  return net;
}

CardioNet CardioNet::from_bundle(const nn::WeightBundle& bundle) {
  bundle.config.validate();
  const auto shapes = parameter_shapes(bundle.config);
  if (shapes.size() != bundle.tensors.size()) {
    throw nn::BundleError("SHAPE_MISMATCH", "bundle has " + std::to_string(bundle.tensors.size()) +
                                                " tensors, config needs " +
                                                std::to_string(shapes.size()));
  }
  CardioNet net(bundle.config);
  for (const auto& [name, shape] : shapes) {
    const auto it = bundle.tensors.find(name);
    if (it == bundle.tensors.end()) {
      throw nn::BundleError("SHAPE_MISMATCH", "bundle lacks tensor " + name);
    }
    if (it->second.shape() != shape) {
      throw nn::BundleError("SHAPE_MISMATCH", "tensor " + name + " has shape " +
                                                  nn::shape_string(it->second.shape()) +
                                                  ", expected " + nn::shape_string(shape));
    }
    net.params_.emplace(name, nn::Parameter(it->second));
  }
  return net;
}

nn::WeightBundle CardioNet::to_bundle() const {
  nn::WeightBundle bundle;
  bundle.config = config_;
  for (const auto& [name, p] : params_) bundle.tensors.emplace(name, p.value);
  return bundle;
}

BoundParams CardioNet::bind(nn::Tape& tape) {
  BoundParams bound;
  for (auto& [name, p] : params_) {
    bound.emplace(name, tape.recording() ? tape.parameter(p) : tape.constant_ref(p.value));
  }
  return bound;
}

BoundParams CardioNet::bind(nn::Tape& tape) const {
  BoundParams bound;
  for (const auto& [name, p] : params_) bound.emplace(name, tape.constant_ref(p.value));
  return bound;
}

nn::Var CardioNet::block(nn::Tape& tape, nn::Var input, const ResidualBlockSpec& spec,
                         const BoundParams& p) const {
  nn::Var h = input;
  for (std::size_t layer = spec.first_layer; layer <= spec.last_layer; ++layer) {
    // Pre-activation ordering; the raw input to the first layer is left
    // untouched so negative deflections survive.
    if (layer != 1) h = nn::op::relu(tape, h);
    h = nn::op::conv1d(tape, h, p.at(conv_name(layer, "weight")), p.at(conv_name(layer, "bias")),
                       config_.stride_at(layer));
  }
  nn::Var shortcut = input;
  if (spec.projection) {
    shortcut = nn::op::conv1d(tape, input, p.at(proj_name(spec.index, "weight")),
                              p.at(proj_name(spec.index, "bias")), spec.stride);
  }
  return nn::op::add(tape, h, shortcut);
}

nn::Var CardioNet::trunk(nn::Tape& tape, nn::Var segments, const BoundParams& p) const {
  nn::Var h = segments;
  for (const auto& spec : block_plan(config_)) h = block(tape, h, spec, p);
  return h;
}

nn::Var CardioNet::embed(nn::Tape& tape, nn::Var segments, const BoundParams& p) const {
  return nn::op::mean_last_axis(tape, nn::op::relu(tape, trunk(tape, segments, p)));
}

nn::Var CardioNet::head_logits(nn::Tape& tape, nn::Var embeddings, const BoundParams& p) const {
  const std::size_t steps = tape.value(embeddings).dim(0);
  std::vector<nn::Var> sequence;
  sequence.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) sequence.push_back(nn::op::row(tape, embeddings, s));

  const nn::op::GruVars gru{p.at("rnn.w_update"), p.at("rnn.u_update"), p.at("rnn.b_update"),
                            p.at("rnn.w_reset"),  p.at("rnn.u_reset"),  p.at("rnn.b_reset"),
                            p.at("rnn.w_cand"),   p.at("rnn.u_cand"),   p.at("rnn.b_cand")};
  const nn::Var h0 = tape.constant(nn::Tensor({config_.rnn_hidden}));
  nn::Var h = nn::op::gru_layer(tape, sequence, gru, h0);
  if (config_.head_hidden > 0) {
    h = nn::op::relu(tape, nn::op::dense(tape, h, p.at("head.hidden.weight"),
                                         p.at("head.hidden.bias")));
  }
  return nn::op::dense(tape, h, p.at("head.out.weight"), p.at("head.out.bias"));
}

nn::Var CardioNet::forward(nn::Tape& tape, nn::Var segments, const BoundParams& p) const {
  return nn::op::sigmoid(tape, head_logits(tape, embed(tape, segments, p), p));
}

void CardioNet::check_input(const nn::Tensor& segments) const {
  if (segments.rank() != 3 || segments.dim(1) != config_.input_channels) {
    throw nn::ShapeError("model expects [segments x " + std::to_string(config_.input_channels) +
                         " x samples], got " + nn::shape_string(segments.shape()));
  }
  if (segments.dim(2) != config_.segment_samples()) {
    throw nn::ShapeError("model expects segments of " + std::to_string(config_.segment_samples()) +
                         " samples, got " + std::to_string(segments.dim(2)));
  }
}

Prediction CardioNet::forward_segments(const dsp::SegmentBatch& batch) const {
  check_input(batch.segments);
  nn::Tape tape(false);
  const auto p = bind(tape);
  const nn::Var out = forward(tape, tape.constant_ref(batch.segments), p);
  return {tape.value(out).values()};
}

nn::Tensor CardioNet::segment_embeddings(const nn::Tensor& segments) const {
  check_input(segments);
  nn::Tape tape(false);
  const auto p = bind(tape);
  return tape.value(embed(tape, tape.constant_ref(segments), p));
}

ecg::PhysicalSignal standardize(const ecg::PhysicalSignal& signal) {
  std::vector<ecg::Channel> channels;
  for (const auto& c : signal.channels()) {
    const auto n = static_cast<double>(c.samples.size());
    double mean = 0.0;
    for (double v : c.samples) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : c.samples) var += (v - mean) * (v - mean);
    const double scale = std::max(std::sqrt(var / n), 1e-6);
    ecg::Channel out{c.lead, c.samples};
    for (double& v : out.samples) v = (v - mean) / scale;
    channels.push_back(std::move(out));
  }
  return ecg::PhysicalSignal(signal.sample_rate_hz(), std::move(channels));
}

PreparedInput prepare_input(const ModelConfig& config, const ecg::EcgRecording& rec) {
  const ecg::PhysicalSignal physical = ecg::to_physical(rec);
  ecg::PhysicalSignal selected =
      config.lead_configuration == ecg::LeadConfiguration::SingleLead
          ? ecg::PhysicalSignal(physical.sample_rate_hz(), {physical.at(ecg::LeadId::I)})
          : ecg::complete_leads(physical);
  const auto filtered = dsp::bandpass(dsp::resample(selected, config.model_rate_hz));

  PreparedInput out;
  out.rate_hz = filtered.sample_rate_hz();
  out.filtered_lead_i = filtered.at(ecg::LeadId::I).samples;
  out.batch = dsp::segment(standardize(filtered), config.segment_seconds);
  return out;
}

std::optional<dsp::RrMeasurements> measure_rhythm(std::span<const double> filtered_lead,
                                                  double rate_hz) {
  if (static_cast<double>(filtered_lead.size()) < 2.0 * rate_hz || rate_hz < 100.0) {
    return std::nullopt;
  }
  const auto peaks = dsp::detect_r_peaks(filtered_lead, rate_hz);
  if (peaks.size() < 2) return std::nullopt;
  return dsp::rr_measurements(peaks, rate_hz);
}

PredictResult predict(const CardioNet& net, const ecg::EcgRecording& rec) {
  const PreparedInput input = prepare_input(net.config(), rec);
  PredictResult result;
  result.prediction = net.forward_segments(input.batch);
  result.measurements = measure_rhythm(input.filtered_lead_i, input.rate_hz);
  return result;
}

Prediction aggregate_chunks(std::span<const Prediction> predictions) {
  if (predictions.empty()) throw ValidationError("EMPTY_INPUT", "no chunk predictions to aggregate");
  Prediction out = predictions.front();
  for (const auto& p : predictions.subspan(1)) {
    if (p.probabilities.size() != out.probabilities.size()) {
      throw ValidationError("LABEL_MISMATCH", "chunk predictions use different vocabularies");
    }
    for (std::size_t i = 0; i < out.probabilities.size(); ++i) {
      out.probabilities[i] = std::max(out.probabilities[i], p.probabilities[i]);
    }
  }
  return out;
}

}  // namespace ecgcloud::model
