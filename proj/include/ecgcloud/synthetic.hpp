// SPDX-License-Identifier: Apache-2.0
//
// Synthetic ECG generator: beat trains built from Gaussian P/QRS/T bumps
// with controllable rhythm irregularity. Stands in for clinical data in
// training, tests and load generation.
#pragma once

#include <cstdint>
#include <vector>

#include "ecgcloud/ecg.hpp"

namespace ecgcloud::train {

enum class Rhythm { Sinus, AfLike };

struct SyntheticBeatSpec {
  Rhythm rhythm = Rhythm::Sinus;
  double mean_rr_ms = 800.0;
  double rr_jitter = 0.0;  // coefficient of variation of RR
  double p_amp_mv = 0.15;
  double p_width_ms = 25.0;
  double qrs_amp_mv = 1.0;
  double qrs_width_ms = 10.0;
  double t_amp_mv = 0.3;
  double t_width_ms = 40.0;
  double noise_std_mv = 0.0;

  /// Throws ValidationError("INVALID_SPEC").
  void validate() const;

  static SyntheticBeatSpec sinus(double bpm, double jitter = 0.0);
  static SyntheticBeatSpec af_like(double bpm, double jitter = 0.25);
};

/// Center of each wave relative to the R peak.
inline constexpr double kPOffsetMs = -160.0;
inline constexpr double kTOffsetMs = 260.0;
/// ADC scaling used for generated recordings.
inline constexpr double kSyntheticAdcGain = 1000.0;

struct SyntheticRecording {
  ecg::EcgRecording recording;
  /// 0/1 per entry of model::default_vocabulary().
  std::vector<double> labels;
  std::vector<std::size_t> r_peaks;
};

/// Single-lead (lead I) recording.
SyntheticRecording generate_recording(const SyntheticBeatSpec& spec, double duration_s,
                                      double rate_hz, std::uint64_t seed);

/// Same beat train projected onto the eight independent leads with fixed
/// gains; III, aVR, aVL and aVF follow exactly from I and II.
SyntheticRecording generate_twelve_lead(const SyntheticBeatSpec& spec, double duration_s,
                                        double rate_hz, std::uint64_t seed);

/// Balanced NSR / AF corpus with randomized rate, irregularity, amplitudes
/// and noise. Even indices are sinus, odd indices AF-like.
std::vector<SyntheticRecording> synthetic_af_corpus(std::size_t count, double duration_s,
                                                    double rate_hz, std::uint64_t seed,
                                                    ecg::LeadConfiguration leads);

}  // namespace ecgcloud::train
