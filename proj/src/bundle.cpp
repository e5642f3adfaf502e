// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/bundle.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

namespace ecgcloud::nn {

namespace {

constexpr char kMagic[4] = {'E', 'C', 'G', 'W'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { out_ += s; }
  std::string& buffer() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw BundleError("TRUNCATED", "weight bundle is truncated");
  }

  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string serialize_bundle(const WeightBundle& bundle) {
  Writer w;
  w.bytes(std::string(kMagic, 4));
  w.u32(bundle.format_version);
  const std::string config = nlohmann::json(bundle.config).dump();
  w.u32(static_cast<std::uint32_t>(config.size()));
  w.bytes(config);
  w.u32(static_cast<std::uint32_t>(bundle.tensors.size()));
  for (const auto& [name, tensor] : bundle.tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) w.u64(d);
    for (double v : tensor.data()) w.f64(v);
  }
  std::string& out = w.buffer();
  w.u32(crc32_of(out.data(), out.size()));
  return std::move(out);
}

WeightBundle deserialize_bundle(const std::string& bytes) {
  if (bytes.size() < 12) throw BundleError("TRUNCATED", "weight bundle is truncated");
  if (bytes.compare(0, 4, kMagic, 4) != 0) {
    throw BundleError("BAD_MAGIC", "not a weight bundle (bad magic)");
  }
  const std::size_t body_end = bytes.size() - 4;
  Reader r(bytes, body_end);
  r.bytes(4);
  WeightBundle bundle;
  bundle.format_version = r.u32();
  if (bundle.format_version != kBundleFormatVersion) {
    throw BundleError("VERSION_MISMATCH", "unsupported weight bundle version " +
                                              std::to_string(bundle.format_version));
  }
  const std::string config = r.bytes(r.u32());
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw BundleError("CORRUPT", "tensor rank out of range");
    Shape shape;
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(r.u64()));
      if (shape.back() == 0) throw BundleError("CORRUPT", "zero tensor dimension");
      n *= shape.back();
      if (n > (body_end - r.position()) / 8 + 1) {
        throw BundleError("TRUNCATED", "weight bundle is truncated");
      }
    }
    std::vector<double> data(n);
    for (double& v : data) v = r.f64();
    if (!bundle.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data))).second) {
      throw BundleError("CORRUPT", "duplicate tensor name");
    }
  }
  if (r.position() != body_end) throw BundleError("CORRUPT", "trailing bytes in weight bundle");

  Reader tail(bytes, bytes.size());
  tail.bytes(body_end);
  if (tail.u32() != crc32_of(bytes.data(), body_end)) {
    throw BundleError("CHECKSUM_MISMATCH", "weight bundle checksum does not match");
  }
  try {
    bundle.config = nlohmann::json::parse(config).get<model::ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw BundleError("CORRUPT", std::string("embedded config: ") + e.what());
  }
  return bundle;
}

std::size_t save_bundle(const WeightBundle& bundle, std::ostream& sink) {
  const std::string bytes = serialize_bundle(bundle);
  sink.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw BundleError("IO_ERROR", "failed to write weight bundle");
  return bytes.size();
}

WeightBundle load_bundle(std::istream& source) {
  std::string bytes((std::istreambuf_iterator<char>(source)), std::istreambuf_iterator<char>());
  return deserialize_bundle(bytes);
}

void save_bundle_file(const WeightBundle& bundle, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw BundleError("IO_ERROR", "cannot open " + path + " for writing");
  save_bundle(bundle, out);
}

WeightBundle load_bundle_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BundleError("IO_ERROR", "cannot open " + path);
  return load_bundle(in);
}

}  // namespace ecgcloud::nn
