// SPDX-License-Identifier: Apache-2.0
//
// ECG data model: lead identifiers, raw ADC recordings, physical-unit
// signals, CSV ingestion and limb-lead redundancy checks.
#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecgcloud/error.hpp"

namespace ecgcloud::ecg {

enum class LeadId { I, II, III, aVR, aVL, aVF, V1, V2, V3, V4, V5, V6 };

inline constexpr std::size_t kLeadCount = 12;

inline constexpr std::array<LeadId, kLeadCount> kAllLeads = {
    LeadId::I,   LeadId::II,  LeadId::III, LeadId::aVR, LeadId::aVL, LeadId::aVF,
    LeadId::V1,  LeadId::V2,  LeadId::V3,  LeadId::V4,  LeadId::V5,  LeadId::V6};

/// Canonical spelling ("I", "aVR", "V6", ...).
std::string_view lead_name(LeadId lead);
std::optional<LeadId> parse_lead_name(std::string_view name);
inline std::size_t lead_index(LeadId lead) { return static_cast<std::size_t>(lead); }

/// Ordered by canonical lead order because LeadId's underlying values are.
using LeadMap = std::map<LeadId, std::vector<double>>;

enum class LeadConfiguration { SingleLead, TwelveLead };

inline std::size_t channel_count(LeadConfiguration c) {
  return c == LeadConfiguration::SingleLead ? 1 : 12;
}
std::string_view to_string(LeadConfiguration c);

/// Errors raised while reading CSV input. Position is 1-based; row 1 is the
/// header.
class CsvError : public ValidationError {
 public:
  CsvError(std::string code, const std::string& message, std::size_t row,
           std::size_t column)
      : ValidationError(std::move(code), message), row_(row), column_(column) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

struct AcquisitionParams {
  double sample_rate_hz = 0.0;
  double adc_gain = 0.0;  // ADC units per millivolt
  double baseline = 0.0;  // ADC units at 0 mV
  friend bool operator==(const AcquisitionParams&, const AcquisitionParams&) = default;
};

inline constexpr double kMinSampleRateHz = 50.0;
inline constexpr double kMaxSampleRateHz = 2000.0;

/// Raw multi-lead recording in ADC units. Validated on construction and
/// immutable afterwards.
class EcgRecording {
 public:
  /// Throws ValidationError (codes INVALID_PARAM, MISSING_LEAD,
  /// LENGTH_MISMATCH, EMPTY_LEAD, INVALID_DATA) when an invariant fails.
  EcgRecording(AcquisitionParams params, LeadMap leads);

  const AcquisitionParams& params() const noexcept { return params_; }
  double sample_rate_hz() const noexcept { return params_.sample_rate_hz; }
  const LeadMap& leads() const noexcept { return leads_; }
  std::size_t length() const noexcept { return leads_.begin()->second.size(); }
  double duration_s() const noexcept {
    return static_cast<double>(length()) / params_.sample_rate_hz;
  }
  bool has(LeadId lead) const { return leads_.count(lead) != 0; }

  friend bool operator==(const EcgRecording&, const EcgRecording&) = default;

 private:
  AcquisitionParams params_;
  LeadMap leads_;
};

struct Channel {
  LeadId lead;
  std::vector<double> samples;  // millivolts
};

/// Post-conversion representation in millivolts, channels in canonical
/// lead order.
class PhysicalSignal {
 public:
  PhysicalSignal(double sample_rate_hz, std::vector<Channel> channels);

  double sample_rate_hz() const noexcept { return sample_rate_hz_; }
  const std::vector<Channel>& channels() const noexcept { return channels_; }
  std::size_t length() const noexcept {
    return channels_.empty() ? 0 : channels_.front().samples.size();
  }
  const Channel* find(LeadId lead) const;
  const Channel& at(LeadId lead) const;

 private:
  double sample_rate_hz_;
  std::vector<Channel> channels_;
};

LeadMap parse_csv(std::string_view text);
std::string to_csv(const LeadMap& leads);

PhysicalSignal to_physical(const EcgRecording& rec);

struct LeadDeviation {
  LeadId lead;
  double max_abs_deviation_mv;
  bool pass;
};

struct ConsistencyReport {
  std::vector<LeadDeviation> derived;
  bool pass = true;
};

/// Einthoven/Goldberger relations: III = II - I, aVR = -(I+II)/2,
/// aVL = I - II/2, aVF = II - I/2.
ConsistencyReport check_lead_consistency(const PhysicalSignal& sig,
                                         double tolerance_mv);

/// Fills III/aVR/aVL/aVF from I and II. Requires I, II and V1..V6.
PhysicalSignal complete_leads(const PhysicalSignal& sig);

/// True when the lead set is exactly {I}.
bool is_single_lead(const LeadMap& leads);
/// True when I, II and V1..V6 are all present.
bool is_completable(const LeadMap& leads);

}  // namespace ecgcloud::ecg
