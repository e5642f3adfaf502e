// SPDX-License-Identifier: Apache-2.0
//
// Fixtures shared by the unit suites and the acceptance binary.
#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ecgcloud/autodiff.hpp"
#include "ecgcloud/cardionet.hpp"
#include "ecgcloud/engine.hpp"
#include "ecgcloud/synthetic.hpp"
#include "ecgcloud/wire.hpp"

namespace support {

using namespace ecgcloud;

/// Central-difference check of every gradient entry of `params` against
/// `loss`, which must evaluate the same scalar the tape produced. Returns
/// the worst relative error max|a - n| / max(|a|, |n|), with pairs whose
/// absolute difference is under `abs_floor` counted as exact. `stats`, when
/// given, accumulates the entry count and the worst absolute difference.
struct GradientCheckStats {
  std::size_t entries = 0;
  double worst_abs = 0.0;
};

inline double worst_gradient_error(std::map<std::string, nn::Parameter>& params,
                                   const std::function<double()>& loss, double eps = 1e-4,
                                   double abs_floor = 1e-9, std::size_t max_entries_per_tensor = 0,
                                   GradientCheckStats* stats = nullptr) {
  double worst = 0.0;
  for (auto& [name, p] : params) {
    const std::size_t n = p.value.size();
    const std::size_t step = max_entries_per_tensor == 0 ? 1 : std::max<std::size_t>(1, n / max_entries_per_tensor);
    for (std::size_t i = 0; i < n; i += step) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double up = loss();
      p.value[i] = orig - eps;
      const double down = loss();
      p.value[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p.grad[i];
      const double diff = std::abs(numeric - analytic);
      if (stats) {
        ++stats->entries;
        stats->worst_abs = std::max(stats->worst_abs, diff);
      }
      if (diff < abs_floor) continue;
      worst = std::max(worst, diff / std::max(std::abs(numeric), std::abs(analytic)));
    }
  }
  return worst;
}

inline std::shared_ptr<const model::CardioNet> toy_model(ecg::LeadConfiguration leads, std::uint64_t seed = 1) {
  return std::make_shared<const model::CardioNet>(model::CardioNet::build(model::toy_config(leads), seed));
}

inline serve::ModelSet toy_models() {
  return {toy_model(ecg::LeadConfiguration::SingleLead, 1), toy_model(ecg::LeadConfiguration::TwelveLead, 2)};
}

inline ecg::EcgRecording sinus_recording(double seconds, double rate = 250.0, std::uint64_t seed = 1) {
  return train::generate_recording(train::SyntheticBeatSpec::sinus(72.0), seconds, rate, seed).recording;
}

inline ecg::EcgRecording twelve_lead_recording(double seconds, double rate = 250.0, std::uint64_t seed = 1) {
  return train::generate_twelve_lead(train::SyntheticBeatSpec::sinus(72.0), seconds, rate, seed).recording;
}

inline api::WireRequest wire_request(const ecg::EcgRecording& rec) {
  api::WireRequest r;
  r.sample_rate = rec.params().sample_rate_hz;
  r.adc_gain = rec.params().adc_gain;
  r.baseline = rec.params().baseline;
  r.leads = rec.leads();
  return r;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("ecgcloud-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace support
