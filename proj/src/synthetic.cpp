// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ecgcloud/model_config.hpp"

namespace ecgcloud::train {

namespace {

struct BeatTrain {
  std::vector<double> clean;  // noise-free lead waveform, mV
  std::vector<std::size_t> r_peaks;
};

double gauss(double t_ms, double center_ms, double width_ms) {
  const double z = (t_ms - center_ms) / width_ms;
  return std::exp(-0.5 * z * z);
}

BeatTrain beat_train(const SyntheticBeatSpec& spec, double duration_s, double rate_hz,
                     std::mt19937_64& rng) {
  spec.validate();
  if (!(duration_s >= 2.0)) throw ValidationError("INVALID_SPEC", "duration must be at least 2 s");
  if (!(rate_hz >= ecg::kMinSampleRateHz && rate_hz <= ecg::kMaxSampleRateHz)) {
    throw ValidationError("INVALID_SPEC", "rate must lie in [50, 2000] Hz");
  }
  const auto n = static_cast<std::size_t>(std::llround(duration_s * rate_hz));
  const double duration_ms = static_cast<double>(n) * 1000.0 / rate_hz;
  std::uniform_real_distribution<double> phase(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> beats_ms;
  double t = phase(rng) * spec.mean_rr_ms;
  while (t < duration_ms) {
    beats_ms.push_back(t);
    const double z = std::clamp(normal(rng), -3.0, 3.0);
    t += std::max(250.0, spec.mean_rr_ms * (1.0 + spec.rr_jitter * z));
  }

  BeatTrain out;
  out.clean.assign(n, 0.0);
  const double reach_ms = 4.0 * std::max({spec.p_width_ms, spec.qrs_width_ms, spec.t_width_ms});
  for (double r_ms : beats_ms) {
    const auto r_index = static_cast<std::size_t>(std::llround(r_ms * rate_hz / 1000.0));
    if (r_index >= n) continue;
    out.r_peaks.push_back(r_index);
    const double lo_ms = r_ms + kPOffsetMs - reach_ms;
    const double hi_ms = r_ms + kTOffsetMs + reach_ms;
    const auto lo = static_cast<std::size_t>(std::max(0.0, std::floor(lo_ms * rate_hz / 1000.0)));
    const auto hi = std::min(n, static_cast<std::size_t>(std::ceil(hi_ms * rate_hz / 1000.0)) + 1);
    for (std::size_t i = lo; i < hi; ++i) {
      const double ti = static_cast<double>(i) * 1000.0 / rate_hz;
      double v = spec.qrs_amp_mv * gauss(ti, r_ms, spec.qrs_width_ms) +
                 spec.t_amp_mv * gauss(ti, r_ms + kTOffsetMs, spec.t_width_ms);
      if (spec.p_amp_mv != 0.0) v += spec.p_amp_mv * gauss(ti, r_ms + kPOffsetMs, spec.p_width_ms);
      out.clean[i] += v;
    }
  }
  return out;
}

std::vector<double> truth_labels(Rhythm rhythm) {
  const auto vocab = model::default_vocabulary();
  std::vector<double> labels(vocab.size(), 0.0);
  const std::string code = rhythm == Rhythm::Sinus ? "NSR" : "AF";
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (vocab[i].code == code) labels[i] = 1.0;
  }
  return labels;
}

std::vector<double> to_adc(const std::vector<double>& mv, double gain, double noise_std,
                           std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(mv.size());
  for (std::size_t i = 0; i < mv.size(); ++i) {
    const double noise = noise_std > 0.0 ? noise_std * normal(rng) : 0.0;
    out[i] = gain * (mv[i] + noise);
  }
  return out;
}

}  // namespace

void SyntheticBeatSpec::validate() const {
  auto fail = [](const char* why) { throw ValidationError("INVALID_SPEC", why); };
  if (!(mean_rr_ms > 0.0)) fail("mean RR must be positive");
  if (!(rr_jitter >= 0.0)) fail("RR jitter must be non-negative");
  if (!(p_width_ms > 0.0 && qrs_width_ms > 0.0 && t_width_ms > 0.0)) fail("widths must be positive");
  if (!(noise_std_mv >= 0.0)) fail("noise must be non-negative");
  if (rhythm == Rhythm::Sinus && !(p_amp_mv > 0.0)) fail("sinus rhythm needs a P wave");
  if (rhythm == Rhythm::AfLike && (p_amp_mv != 0.0 || rr_jitter < 0.2)) {
    fail("AF-like rhythm needs no P wave and RR jitter >= 0.2");
  }
}

SyntheticBeatSpec SyntheticBeatSpec::sinus(double bpm, double jitter) {
  SyntheticBeatSpec s;
  s.mean_rr_ms = 60000.0 / bpm;
  s.rr_jitter = jitter;
  return s;
}

SyntheticBeatSpec SyntheticBeatSpec::af_like(double bpm, double jitter) {
  SyntheticBeatSpec s;
  s.rhythm = Rhythm::AfLike;
  s.mean_rr_ms = 60000.0 / bpm;
  s.rr_jitter = jitter;
  s.p_amp_mv = 0.0;
  return s;
}

SyntheticRecording generate_recording(const SyntheticBeatSpec& spec, double duration_s,
                                      double rate_hz, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BeatTrain train = beat_train(spec, duration_s, rate_hz, rng);
  ecg::LeadMap leads;
  leads.emplace(ecg::LeadId::I, to_adc(train.clean, kSyntheticAdcGain, spec.noise_std_mv, rng));
  return {ecg::EcgRecording({rate_hz, kSyntheticAdcGain, 0.0}, std::move(leads)),
          truth_labels(spec.rhythm), std::move(train.r_peaks)};
}

SyntheticRecording generate_twelve_lead(const SyntheticBeatSpec& spec, double duration_s,
                                        double rate_hz, std::uint64_t seed) {
  using ecg::LeadId;
  std::mt19937_64 rng(seed);
  BeatTrain train = beat_train(spec, duration_s, rate_hz, rng);
  const std::pair<LeadId, double> projections[] = {
      {LeadId::I, 0.7},  {LeadId::II, 1.0},  {LeadId::V1, -0.6}, {LeadId::V2, -0.3},
      {LeadId::V3, 0.5}, {LeadId::V4, 1.2},  {LeadId::V5, 1.1},  {LeadId::V6, 0.9}};

  std::normal_distribution<double> normal(0.0, 1.0);
  std::map<LeadId, std::vector<double>> mv;
  for (const auto& [lead, gain] : projections) {
    std::vector<double> x(train.clean.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = gain * train.clean[i] + (spec.noise_std_mv > 0.0 ? spec.noise_std_mv * normal(rng) : 0.0);
    }
    mv.emplace(lead, std::move(x));
  }
  ecg::LeadMap leads;
  for (const auto& [lead, x] : mv) leads.emplace(lead, to_adc(x, kSyntheticAdcGain, 0.0, rng));
  const auto& lead_i = leads.at(LeadId::I);
  const auto& lead_ii = leads.at(LeadId::II);
  const std::size_t n = lead_i.size();
  std::vector<double> iii(n), avr(n), avl(n), avf(n);
  for (std::size_t t = 0; t < n; ++t) {
    iii[t] = lead_ii[t] - lead_i[t];
    avr[t] = -(lead_i[t] + lead_ii[t]) / 2.0;
    avl[t] = lead_i[t] - lead_ii[t] / 2.0;
    avf[t] = lead_ii[t] - lead_i[t] / 2.0;
  }
  leads.emplace(LeadId::III, std::move(iii));
  leads.emplace(LeadId::aVR, std::move(avr));
  leads.emplace(LeadId::aVL, std::move(avl));
  leads.emplace(LeadId::aVF, std::move(avf));
  return {ecg::EcgRecording({rate_hz, kSyntheticAdcGain, 0.0}, std::move(leads)),
          truth_labels(spec.rhythm), std::move(train.r_peaks)};
}

std::vector<SyntheticRecording> synthetic_af_corpus(std::size_t count, double duration_s,
                                                    double rate_hz, std::uint64_t seed,
                                                    ecg::LeadConfiguration leads) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  };
  std::vector<SyntheticRecording> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SyntheticBeatSpec spec = i % 2 == 0 ? SyntheticBeatSpec::sinus(uniform(55.0, 100.0), uniform(0.0, 0.05))
                                        : SyntheticBeatSpec::af_like(uniform(60.0, 130.0), uniform(0.2, 0.35));
    if (spec.rhythm == Rhythm::Sinus) spec.p_amp_mv = uniform(0.12, 0.25);
    spec.qrs_amp_mv = uniform(0.8, 1.3);
    spec.t_amp_mv = uniform(0.15, 0.3);
    spec.noise_std_mv = uniform(0.01, 0.03);
    const std::uint64_t rec_seed = rng();
    out.push_back(leads == ecg::LeadConfiguration::SingleLead
                      ? generate_recording(spec, duration_s, rate_hz, rec_seed)
                      : generate_twelve_lead(spec, duration_s, rate_hz, rec_seed));
  }
  return out;
}

}  // namespace ecgcloud::train
