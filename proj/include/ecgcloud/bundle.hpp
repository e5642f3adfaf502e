// SPDX-License-Identifier: Apache-2.0
//
// Weight bundle file format (all integers little-endian):
//
//   magic            4 bytes  "ECGW"
//   format_version   u32
//   config_length    u32, followed by the model config as UTF-8 JSON
//   tensor_count     u32
//   tensor records   tensor_count times:
//                      name_length u32, name bytes,
//                      rank u32, rank x u64 dimensions,
//                      product(dimensions) x f64 (IEEE-754 bit patterns)
//   checksum         u32 CRC-32 of every preceding byte
//
// Records are written in ascending name order, so equal bundles serialize
// to identical bytes.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

#include "ecgcloud/model_config.hpp"
#include "ecgcloud/tensor.hpp"

namespace ecgcloud::nn {

inline constexpr std::uint32_t kBundleFormatVersion = 1;

struct WeightBundle {
  std::uint32_t format_version = kBundleFormatVersion;
  model::ModelConfig config;
  std::map<std::string, Tensor> tensors;

  friend bool operator==(const WeightBundle&, const WeightBundle&) = default;
};

class BundleError : public Error {
 public:
  using Error::Error;
};

std::string serialize_bundle(const WeightBundle& bundle);
WeightBundle deserialize_bundle(const std::string& bytes);

/// Returns the number of bytes written.
std::size_t save_bundle(const WeightBundle& bundle, std::ostream& sink);
WeightBundle load_bundle(std::istream& source);

void save_bundle_file(const WeightBundle& bundle, const std::string& path);
WeightBundle load_bundle_file(const std::string& path);

}  // namespace ecgcloud::nn
