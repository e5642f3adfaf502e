// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/ecg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

namespace ecgcloud::ecg {

namespace {

constexpr std::array<std::string_view, kLeadCount> kLeadNames = {
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

std::string pos_suffix(std::size_t row, std::size_t col) {
  return " (row " + std::to_string(row) + ", column " + std::to_string(col) + ")";
}

const std::vector<double>& lead_or_throw(const PhysicalSignal& sig, LeadId lead) {
  const Channel* c = sig.find(lead);
  if (c == nullptr) {
    throw ValidationError("INSUFFICIENT_LEADS",
                          "lead " + std::string(lead_name(lead)) + " is required");
  }
  return c->samples;
}

// Value of a derived limb lead at sample t, computed from I and II.
double derived_value(LeadId lead, double lead_i, double lead_ii) {
  switch (lead) {
    case LeadId::III: return lead_ii - lead_i;
    case LeadId::aVR: return -(lead_i + lead_ii) / 2.0;
    case LeadId::aVL: return lead_i - lead_ii / 2.0;
    case LeadId::aVF: return lead_ii - lead_i / 2.0;
    default: return 0.0;
  }
}

constexpr std::array<LeadId, 4> kDerivedLeads = {LeadId::III, LeadId::aVR,
                                                 LeadId::aVL, LeadId::aVF};
constexpr std::array<LeadId, 8> kIndependentLeads = {
    LeadId::I,  LeadId::II, LeadId::V1, LeadId::V2,
    LeadId::V3, LeadId::V4, LeadId::V5, LeadId::V6};

}  // namespace

std::string_view lead_name(LeadId lead) { return kLeadNames[lead_index(lead)]; }

std::optional<LeadId> parse_lead_name(std::string_view name) {
  for (std::size_t i = 0; i < kLeadCount; ++i) {
    if (kLeadNames[i] == name) return kAllLeads[i];
  }
  return std::nullopt;
}

std::string_view to_string(LeadConfiguration c) {
  return c == LeadConfiguration::SingleLead ? "single_lead" : "twelve_lead";
}

EcgRecording::EcgRecording(AcquisitionParams params, LeadMap leads)
    : params_(params), leads_(std::move(leads)) {
  if (!std::isfinite(params_.sample_rate_hz) || params_.sample_rate_hz < kMinSampleRateHz ||
      params_.sample_rate_hz > kMaxSampleRateHz) {
    throw ValidationError("INVALID_PARAM", "sample rate must lie in [50, 2000] Hz");
  }
  if (!std::isfinite(params_.adc_gain) || params_.adc_gain <= 0.0) {
    throw ValidationError("INVALID_PARAM", "ADC gain must be positive");
  }
  if (!std::isfinite(params_.baseline)) {
    throw ValidationError("INVALID_PARAM", "baseline must be finite");
  }
  if (!has(LeadId::I)) throw ValidationError("MISSING_LEAD", "lead I is required");
  const std::size_t n = leads_.at(LeadId::I).size();
  if (n == 0) throw ValidationError("EMPTY_LEAD", "lead I has no samples");
  for (const auto& [lead, samples] : leads_) {
    if (samples.size() != n) {
      throw ValidationError("LENGTH_MISMATCH", "lead " + std::string(lead_name(lead)) +
                                                   " length differs from lead I");
    }
    if (!std::all_of(samples.begin(), samples.end(),
                     [](double v) { return std::isfinite(v); })) {
      throw ValidationError("INVALID_DATA",
                            "lead " + std::string(lead_name(lead)) + " has non-finite samples");
    }
  }
}

PhysicalSignal::PhysicalSignal(double sample_rate_hz, std::vector<Channel> channels)
    : sample_rate_hz_(sample_rate_hz), channels_(std::move(channels)) {
  if (!(sample_rate_hz_ > 0.0) || !std::isfinite(sample_rate_hz_)) {
    throw ValidationError("INVALID_PARAM", "sample rate must be positive");
  }
  if (channels_.empty()) throw ValidationError("MISSING_LEAD", "signal has no channels");
  const std::size_t n = channels_.front().samples.size();
  std::set<LeadId> seen;
  for (const auto& c : channels_) {
    if (!seen.insert(c.lead).second) {
      throw ValidationError("DUPLICATE_LEAD", "lead appears twice: " + std::string(lead_name(c.lead)));
    }
    if (c.samples.size() != n) {
      throw ValidationError("LENGTH_MISMATCH", "channels differ in length");
    }
    for (double v : c.samples) {
      if (!std::isfinite(v)) throw ValidationError("INVALID_DATA", "non-finite sample");
    }
  }
}

const Channel* PhysicalSignal::find(LeadId lead) const {
  for (const auto& c : channels_) {
    if (c.lead == lead) return &c;
  }
  return nullptr;
}

const Channel& PhysicalSignal::at(LeadId lead) const {
  const Channel* c = find(lead);
  if (c == nullptr) {
    throw ValidationError("MISSING_LEAD", "lead " + std::string(lead_name(lead)) + " absent");
  }
  return *c;
}

LeadMap parse_csv(std::string_view text) {
  std::vector<std::string_view> lines = split(text, '\n');
  for (auto& line : lines) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);  // CRLF input
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw CsvError("EMPTY_INPUT", "CSV input is empty", 0, 0);

  const auto header = split(lines.front(), ',');
  std::vector<LeadId> columns;
  for (std::size_t c = 0; c < header.size(); ++c) {
    auto lead = parse_lead_name(header[c]);
    if (!lead) {
      throw CsvError("UNKNOWN_LEAD",
                     "UnknownLead(\"" + std::string(header[c]) + "\", column " +
                         std::to_string(c + 1) + ")",
                     1, c + 1);
    }
    if (std::find(columns.begin(), columns.end(), *lead) != columns.end()) {
      throw CsvError("DUPLICATE_LEAD",
                     "duplicate lead " + std::string(header[c]) + pos_suffix(1, c + 1), 1, c + 1);
    }
    columns.push_back(*lead);
  }
  if (lines.size() < 2) throw CsvError("NO_SAMPLES", "CSV has a header but no samples", 1, 0);

  std::vector<std::vector<double>> data(columns.size());
  for (auto& d : data) d.reserve(lines.size() - 1);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = split(lines[r], ',');
    if (cells.size() != columns.size()) {
      throw CsvError("RAGGED_ROW",
                     "expected " + std::to_string(columns.size()) + " cells, found " +
                         std::to_string(cells.size()) + pos_suffix(r + 1, cells.size()),
                     r + 1, cells.size());
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      const auto cell = cells[c];
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() ||
          !std::isfinite(v)) {
        throw CsvError("NON_NUMERIC",
                       "non-numeric cell '" + std::string(cell) + "'" + pos_suffix(r + 1, c + 1),
                       r + 1, c + 1);
      }
      data[c].push_back(v);
    }
  }

  LeadMap out;
  for (std::size_t c = 0; c < columns.size(); ++c) out.emplace(columns[c], std::move(data[c]));
  return out;
}

std::string to_csv(const LeadMap& leads) {
  std::string out;
  bool first = true;
  for (const auto& entry : leads) {
    if (!first) out += ',';
    out += lead_name(entry.first);
    first = false;
  }
  out += '\n';
  const std::size_t n = leads.empty() ? 0 : leads.begin()->second.size();
  char buf[32];
  for (std::size_t t = 0; t < n; ++t) {
    first = true;
    for (const auto& entry : leads) {
      if (!first) out += ',';
      const auto res = std::to_chars(buf, buf + sizeof(buf), entry.second.at(t));
      out.append(buf, res.ptr);
      first = false;
    }
    out += '\n';
  }
  return out;
}

PhysicalSignal to_physical(const EcgRecording& rec) {
  const auto& p = rec.params();
  std::vector<Channel> channels;
  channels.reserve(rec.leads().size());
  for (const auto& [lead, raw] : rec.leads()) {
    Channel c{lead, {}};
    c.samples.resize(raw.size());
    std::transform(raw.begin(), raw.end(), c.samples.begin(),
                   [&](double x) { return (x - p.baseline) / p.adc_gain; });
    channels.push_back(std::move(c));
  }
  return PhysicalSignal(p.sample_rate_hz, std::move(channels));
}

ConsistencyReport check_lead_consistency(const PhysicalSignal& sig, double tolerance_mv) {
  ConsistencyReport report;
  const bool any_derived = std::any_of(kDerivedLeads.begin(), kDerivedLeads.end(),
                                       [&](LeadId l) { return sig.find(l) != nullptr; });
  if (!any_derived) return report;
  const auto& lead_i = lead_or_throw(sig, LeadId::I);
  const auto& lead_ii = lead_or_throw(sig, LeadId::II);

  for (LeadId lead : kDerivedLeads) {
    const Channel* c = sig.find(lead);
    if (c == nullptr) continue;
    double worst = 0.0;
    for (std::size_t t = 0; t < c->samples.size(); ++t) {
      worst = std::max(worst, std::abs(c->samples[t] - derived_value(lead, lead_i[t], lead_ii[t])));
    }
    const bool pass = worst <= tolerance_mv;
    report.derived.push_back({lead, worst, pass});
    report.pass = report.pass && pass;
  }
  return report;
}

PhysicalSignal complete_leads(const PhysicalSignal& sig) {
  for (LeadId lead : kIndependentLeads) {
    if (sig.find(lead) == nullptr) {
      throw ValidationError("INSUFFICIENT_LEADS",
                            "twelve-lead analysis needs I, II and V1..V6; missing " +
                                std::string(lead_name(lead)));
    }
  }
  const auto& lead_i = sig.at(LeadId::I).samples;
  const auto& lead_ii = sig.at(LeadId::II).samples;
  std::vector<Channel> channels;
  channels.reserve(kLeadCount);
  for (LeadId lead : kAllLeads) {
    if (const Channel* c = sig.find(lead)) {
      channels.push_back(*c);
      continue;
    }
    Channel c{lead, std::vector<double>(lead_i.size())};
    for (std::size_t t = 0; t < lead_i.size(); ++t) {
      c.samples[t] = derived_value(lead, lead_i[t], lead_ii[t]);
    }
    channels.push_back(std::move(c));
  }
  return PhysicalSignal(sig.sample_rate_hz(), std::move(channels));
}

bool is_single_lead(const LeadMap& leads) {
  return leads.size() == 1 && leads.count(LeadId::I) == 1;
}

bool is_completable(const LeadMap& leads) {
  return std::all_of(kIndependentLeads.begin(), kIndependentLeads.end(),
                     [&](LeadId l) { return leads.count(l) != 0; });
}

}  // namespace ecgcloud::ecg
