// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/dsp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace ecgcloud::dsp {

namespace {

void check_cutoff(int order, double cutoff_hz, double rate_hz) {
  if (order < 1 || order > 12) throw DspError("INVALID_FILTER", "filter order must be in [1, 12]");
  if (!(cutoff_hz > 0.0) || cutoff_hz >= rate_hz / 2.0) {
    throw DspError("INVALID_FILTER", "cutoff must lie strictly between 0 and Nyquist");
  }
}

// Butterworth pole-pair quality factors; odd orders add one first-order
// section handled separately.
std::vector<double> butterworth_qs(int order) {
  std::vector<double> qs;
  for (int k = 0; k < order / 2; ++k) {
    qs.push_back(1.0 / (2.0 * std::sin((2.0 * k + 1.0) * std::numbers::pi / (2.0 * order))));
  }
  return qs;
}

Biquad normalized(double b0, double b1, double b2, double a0, double a1, double a2) {
  return {b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0};
}

void run_sections(std::span<const Biquad> sections, std::vector<double>& x,
                  std::vector<std::array<double, 2>> state) {
  for (std::size_t s = 0; s < sections.size(); ++s) {
    const Biquad& q = sections[s];
    double z1 = state[s][0];
    double z2 = state[s][1];
    for (double& v : x) {
      const double in = v;
      const double out = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * out + z2;
      z2 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
}

// Per-section state that yields steady-state output for a unit step applied
// to the whole cascade.
std::vector<std::array<double, 2>> step_state(std::span<const Biquad> sections) {
  std::vector<std::array<double, 2>> zi(sections.size());
  double gain_in = 1.0;
  for (std::size_t s = 0; s < sections.size(); ++s) {
    const Biquad& q = sections[s];
    const double dc = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double y = dc * gain_in;
    const double z2 = q.b2 * gain_in - q.a2 * y;
    const double z1 = q.b1 * gain_in - q.a1 * y + z2;
    zi[s] = {z1, z2};
    gain_in = y;
  }
  return zi;
}

std::vector<std::array<double, 2>> scaled(std::vector<std::array<double, 2>> zi, double k) {
  for (auto& z : zi) {
    z[0] *= k;
    z[1] *= k;
  }
  return zi;
}

std::vector<double> bandpass_checked(std::span<const double> samples, double rate_hz,
                                     const FilterSpec& spec) {
  check_cutoff(spec.highpass_order, spec.highpass_cutoff_hz, rate_hz);
  check_cutoff(spec.lowpass_order, spec.lowpass_cutoff_hz, rate_hz);
  if (spec.highpass_cutoff_hz >= spec.lowpass_cutoff_hz) {
    throw DspError("INVALID_FILTER", "high-pass cutoff must be below low-pass cutoff");
  }
  auto sections = butterworth_highpass(spec.highpass_order, spec.highpass_cutoff_hz, rate_hz);
  const auto lp = butterworth_lowpass(spec.lowpass_order, spec.lowpass_cutoff_hz, rate_hz);
  sections.insert(sections.end(), lp.begin(), lp.end());
  return sosfiltfilt(sections, samples);
}

}  // namespace

std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double rate_hz) {
  check_cutoff(order, cutoff_hz, rate_hz);
  std::vector<Biquad> out;
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / rate_hz;
  const double cw = std::cos(w0);
  const double sw = std::sin(w0);
  for (double q : butterworth_qs(order)) {
    const double alpha = sw / (2.0 * q);
    out.push_back(normalized((1 - cw) / 2, 1 - cw, (1 - cw) / 2, 1 + alpha, -2 * cw, 1 - alpha));
  }
  if (order % 2 == 1) {
    const double k = std::tan(std::numbers::pi * cutoff_hz / rate_hz);
    out.push_back({k / (k + 1), k / (k + 1), 0.0, (k - 1) / (k + 1), 0.0});
  }
  return out;
}

std::vector<Biquad> butterworth_highpass(int order, double cutoff_hz, double rate_hz) {
  check_cutoff(order, cutoff_hz, rate_hz);
  std::vector<Biquad> out;
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / rate_hz;
  const double cw = std::cos(w0);
  const double sw = std::sin(w0);
  for (double q : butterworth_qs(order)) {
    const double alpha = sw / (2.0 * q);
    out.push_back(
        normalized((1 + cw) / 2, -(1 + cw), (1 + cw) / 2, 1 + alpha, -2 * cw, 1 - alpha));
  }
  if (order % 2 == 1) {
    const double k = std::tan(std::numbers::pi * cutoff_hz / rate_hz);
    out.push_back({1 / (k + 1), -1 / (k + 1), 0.0, (k - 1) / (k + 1), 0.0});
  }
  return out;
}

std::vector<double> sosfilt(std::span<const Biquad> sections, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  run_sections(sections, y, std::vector<std::array<double, 2>>(sections.size(), {0.0, 0.0}));
  return y;
}

std::vector<double> sosfiltfilt(std::span<const Biquad> sections, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  std::size_t taps = 2 * sections.size() + 1;
  const auto first_order = static_cast<std::size_t>(std::count_if(
      sections.begin(), sections.end(), [](const Biquad& q) { return q.b2 == 0.0 && q.a2 == 0.0; }));
  taps -= first_order;
  const std::size_t pad = std::min(3 * taps, n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi = step_state(sections);
  run_sections(sections, ext, scaled(zi, ext.front()));
  std::reverse(ext.begin(), ext.end());
  run_sections(sections, ext, scaled(zi, ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> resample(std::span<const double> samples, double source_hz,
                             double target_hz) {
  const std::size_t n = samples.size();
  if (n < 2) throw DspError("SIGNAL_TOO_SHORT", "resampling needs at least 2 samples");
  if (!(target_hz >= ecg::kMinSampleRateHz && target_hz <= ecg::kMaxSampleRateHz)) {
    throw DspError("INVALID_PARAM", "target rate must lie in [50, 2000] Hz");
  }
  if (target_hz == source_hz) return {samples.begin(), samples.end()};
  const auto out_len = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * target_hz / source_hz)));
  const double step = source_hz / target_hz;
  std::vector<double> out(out_len);
  for (std::size_t j = 0; j < out_len; ++j) {
    const double pos = static_cast<double>(j) * step;
    const auto i0 = static_cast<std::size_t>(pos);
    if (i0 >= n - 1) {
      out[j] = samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    out[j] = samples[i0] + frac * (samples[i0 + 1] - samples[i0]);
  }
  return out;
}

PhysicalSignal resample(const PhysicalSignal& signal, double target_hz) {
  std::vector<ecg::Channel> channels;
  for (const auto& c : signal.channels()) {
    channels.push_back({c.lead, resample(c.samples, signal.sample_rate_hz(), target_hz)});
  }
  return PhysicalSignal(target_hz, std::move(channels));
}

std::vector<double> bandpass(std::span<const double> samples, double rate_hz,
                             const FilterSpec& spec) {
  return bandpass_checked(samples, rate_hz, spec);
}

PhysicalSignal bandpass(const PhysicalSignal& signal, const FilterSpec& spec) {
  std::vector<ecg::Channel> channels;
  for (const auto& c : signal.channels()) {
    channels.push_back({c.lead, bandpass_checked(c.samples, signal.sample_rate_hz(), spec)});
  }
  return PhysicalSignal(signal.sample_rate_hz(), std::move(channels));
}

SegmentBatch segment(const PhysicalSignal& signal, double segment_seconds) {
  const double window_d = std::round(segment_seconds * signal.sample_rate_hz());
  if (!(window_d >= 1.0)) throw DspError("INVALID_SEGMENT", "segment window is 0 samples");
  const auto window = static_cast<std::size_t>(window_d);
  const std::size_t n = signal.length();
  if (n == 0) throw DspError("SIGNAL_TOO_SHORT", "cannot segment an empty signal");
  const std::size_t count = (n + window - 1) / window;
  const std::size_t channels = signal.channels().size();

  SegmentBatch batch;
  batch.segments = nn::Tensor({count, channels, window});
  batch.sample_rate_hz = signal.sample_rate_hz();
  batch.source_length = n;
  for (std::size_t c = 0; c < channels; ++c) {
    const auto& ch = signal.channels()[c];
    batch.leads.push_back(ch.lead);
    for (std::size_t t = 0; t < n; ++t) {
      batch.segments.at(t / window, c, t % window) = ch.samples[t];
    }
  }
  return batch;
}

PhysicalSignal concatenate(const SegmentBatch& batch) {
  const std::size_t window = batch.segment_length();
  std::vector<ecg::Channel> channels;
  for (std::size_t c = 0; c < batch.channels(); ++c) {
    ecg::Channel ch{batch.leads.at(c), std::vector<double>(batch.source_length)};
    for (std::size_t t = 0; t < batch.source_length; ++t) {
      ch.samples[t] = batch.segments.at(t / window, c, t % window);
    }
    channels.push_back(std::move(ch));
  }
  return PhysicalSignal(batch.sample_rate_hz, std::move(channels));
}

std::vector<std::size_t> detect_r_peaks(std::span<const double> lead, double rate_hz) {
  if (rate_hz < 100.0) throw DspError("INVALID_PARAM", "QRS detection needs at least 100 Hz");
  const std::size_t n = lead.size();
  if (static_cast<double>(n) < 2.0 * rate_hz) {
    throw DspError("SIGNAL_TOO_SHORT", "QRS detection needs at least 2 s of signal");
  }

  const auto filtered = bandpass_checked(lead, rate_hz, {5.0, 15.0, 2, 2});

  // Five-point derivative, then squaring.
  std::vector<double> energy(n);
  auto at = [&](std::ptrdiff_t i) {
    return filtered[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1))];
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::ptrdiff_t>(i);
    const double d = (-at(k - 2) - 2.0 * at(k - 1) + 2.0 * at(k + 1) + at(k + 2)) / 8.0;
    energy[i] = d * d;
  }

  // Centered 150 ms moving-window integration.
  const auto window = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.150 * rate_hz)));
  std::vector<double> prefix(n + 1, 0.0);
  std::partial_sum(energy.begin(), energy.end(), prefix.begin() + 1);
  std::vector<double> mwi(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= window / 2 ? i - window / 2 : 0;
    const std::size_t hi = std::min(n, lo + window);
    mwi[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }

  const auto refractory = static_cast<std::size_t>(std::lround(0.200 * rate_hz));
  const auto learn = std::min(n, static_cast<std::size_t>(2.0 * rate_hz));
  double peak_estimate = *std::max_element(mwi.begin(), mwi.begin() + static_cast<std::ptrdiff_t>(learn));
  if (!(peak_estimate > 0.0)) return {};

  std::vector<std::size_t> hits;
  // Outside the signal counts as -inf so beats cut by either edge still peak.
  const double floor = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double left = i > 0 ? mwi[i - 1] : floor;
    const double right = i + 1 < n ? mwi[i + 1] : floor;
    if (!(mwi[i] > left && mwi[i] >= right)) continue;
    if (mwi[i] < 0.5 * peak_estimate) continue;
    if (!hits.empty() && i - hits.back() < refractory) {
      if (mwi[i] <= mwi[hits.back()]) continue;
      hits.back() = i;
    } else {
      hits.push_back(i);
    }
    peak_estimate = 0.875 * peak_estimate + 0.125 * mwi[i];
  }

  // Map each integration peak to the largest deflection of the input lead.
  const auto search = static_cast<std::size_t>(std::lround(0.100 * rate_hz));
  std::vector<std::size_t> peaks;
  for (std::size_t h : hits) {
    const std::size_t lo = h >= search ? h - search : 0;
    const std::size_t hi = std::min(n - 1, h + search);
    std::size_t best = lo;
    for (std::size_t i = lo; i <= hi; ++i) {
      if (std::abs(lead[i]) > std::abs(lead[best])) best = i;
    }
    if (!peaks.empty() && best < peaks.back() + refractory) {
      if (std::abs(lead[best]) > std::abs(lead[peaks.back()])) peaks.back() = best;
      continue;
    }
    peaks.push_back(best);
  }
  return peaks;
}

RrMeasurements rr_measurements(std::span<const std::size_t> peaks, double rate_hz) {
  if (peaks.size() < 2) throw DspError("NOT_ENOUGH_BEATS", "RR statistics need at least 2 beats");
  if (!(rate_hz > 0.0)) throw DspError("INVALID_PARAM", "sample rate must be positive");
  std::vector<double> rr;
  rr.reserve(peaks.size() - 1);
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    if (peaks[i] <= peaks[i - 1]) {
      throw DspError("INVALID_PEAKS", "peak indices must be strictly increasing");
    }
    rr.push_back(static_cast<double>(peaks[i] - peaks[i - 1]) * 1000.0 / rate_hz);
  }
  const double mean = std::accumulate(rr.begin(), rr.end(), 0.0) / static_cast<double>(rr.size());
  double var = 0.0;
  for (double v : rr) var += (v - mean) * (v - mean);
  var /= static_cast<double>(rr.size());

  RrMeasurements m;
  m.rr_mean_ms = mean;
  m.rr_std_ms = std::sqrt(var);
  m.heart_rate_bpm = 60000.0 / mean;
  m.r_peak_indices.assign(peaks.begin(), peaks.end());
  return m;
}

}  // namespace ecgcloud::dsp
