#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "hyperstab/data.hpp"
#include "hyperstab/diagnostics.hpp"
#include "hyperstab/errors.hpp"
#include "hyperstab/normalization.hpp"
#include "hyperstab/optim.hpp"

namespace hyperstab {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[4] = {'H', 'P', 'N', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// One named array. Layout on disk, all little-endian:
///   u32 name length, name bytes, u32 rank, u64 dims[rank], u64 count, f64 values[count]
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;

  friend bool operator==(const CheckpointEntry&, const CheckpointEntry&) = default;
};

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& b, std::string path) : b_(b), path_(std::move(path)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void get_bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, b_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) {
    if (n > remaining()) {
      throw FormatError("corrupt checkpoint '" + path_ + "': needs " + std::to_string(pos_ + n) + " bytes, file has " +
                        std::to_string(b_.size()));
    }
  }

  const std::vector<std::uint8_t>& b_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Header, entry count, entries, then an FNV-1a checksum of everything before it.
inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (numel_of(e.shape) != e.values.size()) {
      throw DimensionError("checkpoint entry '" + e.name + "' has shape " + shape_str(e.shape) + " but " +
                           std::to_string(e.values.size()) + " values");
    }
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) detail::put_le<std::uint64_t>(out, d);
    detail::put_le<std::uint64_t>(out, e.values.size());
    const auto* p = reinterpret_cast<const std::uint8_t*>(e.values.data());
    out.insert(out.end(), p, p + e.values.size() * sizeof(double));
  }
  const std::uint64_t sum = detail::fnv1a(0xCBF29CE484222325ULL, out.data(), out.size());
  detail::put_le<std::uint64_t>(out, sum);
  return out;
}

inline std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                                                      const std::string& path = "<memory>") {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("not a checkpoint '" + path + "': bad magic " + detail::hex_bytes(bytes, 4));
  }
  if (bytes.size() < 8 + 4 + 8) throw FormatError("corrupt checkpoint '" + path + "': file too short");
  detail::ByteReader r(bytes, path);
  r.get<std::uint32_t>();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint '" + path + "' has version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (detail::fnv1a(0xCBF29CE484222325ULL, bytes.data(), bytes.size() - 8) != stored) {
    throw FormatError("corrupt checkpoint '" + path + "': checksum mismatch");
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<CheckpointEntry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name.resize(r.get<std::uint32_t>());
    r.get_bytes(e.name.data(), e.name.size());
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(r.get<std::uint64_t>());
    const auto n = r.get<std::uint64_t>();
    if (n != numel_of(e.shape) || n * sizeof(double) > r.remaining()) {
      throw FormatError("corrupt checkpoint '" + path + "': entry '" + e.name + "' declares " + std::to_string(n) +
                        " values");
    }
    e.values.resize(n);
    r.get_bytes(e.values.data(), n * sizeof(double));
    entries.push_back(std::move(e));
  }
  if (r.remaining() != 8) throw FormatError("corrupt checkpoint '" + path + "': trailing bytes");
  return entries;
}

/// Everything needed to continue training: model parameters, BatchNorm
/// running statistics, optimizer slots, and a step counter.
inline std::vector<CheckpointEntry> checkpoint_entries(const InstrumentedModel& m, const Optimizer& opt,
                                                       std::uint64_t step = 0) {
  std::vector<CheckpointEntry> out;
  auto add_set = [&out](const std::string& prefix, const ParamSet& ps) {
    for (const auto& [name, t] : ps) out.push_back({prefix + name, t.shape(), t.values()});
  };
  add_set("omega.", m.hypernet.omega);
  if (m.hypernet.theta0) add_set("theta0.", *m.hypernet.theta0);
  add_set("", m.norm_params);
  for (const auto& [k, s] : m.bn_stats) {
    out.push_back({"bn." + std::to_string(k) + ".mean", {s.running_mean.size()}, s.running_mean});
    out.push_back({"bn." + std::to_string(k) + ".var", {s.running_var.size()}, s.running_var});
  }
  for (auto& [name, values] : opt.export_state()) out.push_back({name, {values.size()}, values});
  out.push_back({"meta.step", {1}, {static_cast<double>(step)}});
  return out;
}

inline void checkpoint_save(const InstrumentedModel& m, const Optimizer& opt, const std::string& path,
                            std::uint64_t step = 0) {
  detail::write_file(path, encode_checkpoint(checkpoint_entries(m, opt, step)));
}

/// Restore into an already-constructed model of the same architecture.
/// Returns the stored step counter.
inline std::uint64_t checkpoint_load(InstrumentedModel& m, Optimizer& opt, const std::string& path) {
  const auto entries = decode_checkpoint(detail::read_file(path), path);
  std::size_t i = 0;
  auto next = [&](const std::string& name, const Shape& shape) -> const CheckpointEntry& {
    if (i >= entries.size()) throw DimensionError("checkpoint '" + path + "' ends before entry '" + name + "'");
    const auto& e = entries[i++];
    if (e.name != name || e.shape != shape) {
      throw DimensionError("checkpoint '" + path + "' does not match the model: first mismatch at entry " +
                           std::to_string(i - 1) + ", model has '" + name + "' " + shape_str(shape) +
                           ", checkpoint has '" + e.name + "' " + shape_str(e.shape));
    }
    return e;
  };
  auto load_set = [&](const std::string& prefix, ParamSet& ps) {
    for (auto& [name, t] : ps) {
      const auto& e = next(prefix + name, t.shape());
      auto dst = t.mutable_data();
      std::copy(e.values.begin(), e.values.end(), dst.begin());
    }
  };
  load_set("omega.", m.hypernet.omega);
  if (m.hypernet.theta0) load_set("theta0.", *m.hypernet.theta0);
  load_set("", m.norm_params);
  for (auto& [k, s] : m.bn_stats) {
    s.running_mean = next("bn." + std::to_string(k) + ".mean", {s.running_mean.size()}).values;
    s.running_var = next("bn." + std::to_string(k) + ".var", {s.running_var.size()}).values;
  }
  std::vector<std::pair<std::string, std::vector<double>>> opt_arrays;
  while (i < entries.size() && entries[i].name.rfind("opt.", 0) == 0) {
    opt_arrays.emplace_back(entries[i].name, entries[i].values);
    ++i;
  }
  opt.import_state(opt_arrays);
  const auto& meta = next("meta.step", {1});
  if (i != entries.size()) throw DimensionError("checkpoint '" + path + "' has unexpected entry '" + entries[i].name + "'");
  return static_cast<std::uint64_t>(meta.values[0]);
}

}  // namespace hyperstab
