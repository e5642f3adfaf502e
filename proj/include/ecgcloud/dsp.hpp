// SPDX-License-Identifier: Apache-2.0
//
// Signal conditioning for the analysis pipeline: resampling, zero-phase
// Butterworth band-pass filtering, fixed-length segmentation and QRS
// detection with RR statistics.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ecgcloud/ecg.hpp"
#include "ecgcloud/tensor.hpp"

namespace ecgcloud::dsp {

using ecg::PhysicalSignal;

struct FilterSpec {
  double highpass_cutoff_hz = 0.5;
  double lowpass_cutoff_hz = 40.0;
  int highpass_order = 2;
  int lowpass_order = 4;
};

/// One second-order section in direct form II transposed, a0 normalized
/// to 1. First-order sections use b2 = a2 = 0.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double rate_hz);
std::vector<Biquad> butterworth_highpass(int order, double cutoff_hz, double rate_hz);

/// Causal cascade application from zero initial state.
std::vector<double> sosfilt(std::span<const Biquad> sections, std::span<const double> x);
/// Forward-backward application with odd-extension padding and steady-state
/// initial conditions. Output length equals input length.
std::vector<double> sosfiltfilt(std::span<const Biquad> sections, std::span<const double> x);

PhysicalSignal resample(const PhysicalSignal& signal, double target_hz);
std::vector<double> resample(std::span<const double> samples, double source_hz,
                             double target_hz);

PhysicalSignal bandpass(const PhysicalSignal& signal, const FilterSpec& spec = {});
std::vector<double> bandpass(std::span<const double> samples, double rate_hz,
                             const FilterSpec& spec = {});

/// Segments laid out as a [num_segments x channels x segment_length] tensor.
struct SegmentBatch {
  nn::Tensor segments;
  double sample_rate_hz = 0.0;
  std::vector<ecg::LeadId> leads;
  std::size_t source_length = 0;  // samples before zero padding

  std::size_t num_segments() const { return segments.dim(0); }
  std::size_t channels() const { return segments.dim(1); }
  std::size_t segment_length() const { return segments.dim(2); }
};

inline constexpr double kDefaultSegmentSeconds = 2.0;

SegmentBatch segment(const PhysicalSignal& signal, double segment_seconds);
/// Inverse of segment(): concatenates the windows and drops the padding.
PhysicalSignal concatenate(const SegmentBatch& batch);

class DspError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Pan-Tompkins style QRS detection. Requires at least 2 s at >= 100 Hz.
std::vector<std::size_t> detect_r_peaks(std::span<const double> lead, double rate_hz);

struct RrMeasurements {
  double heart_rate_bpm = 0.0;
  double rr_mean_ms = 0.0;
  double rr_std_ms = 0.0;
  std::vector<std::size_t> r_peak_indices;
};

RrMeasurements rr_measurements(std::span<const std::size_t> peaks, double rate_hz);

}  // namespace ecgcloud::dsp
