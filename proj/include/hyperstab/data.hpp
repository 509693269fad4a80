#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hyperstab/errors.hpp"
#include "hyperstab/rng.hpp"
#include "hyperstab/tensor.hpp"

namespace hyperstab {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline bool is_gzip(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B;
}

inline std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& bytes, const std::string& path) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw FormatError("zlib init failed for '" + path + "'");
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof(chunk);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("corrupt gzip stream in '" + path + "'");
    }
    out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw FormatError("truncated gzip stream in '" + path + "'");
    }
  }
  inflateEnd(&zs);
  return out;
}

inline std::vector<std::uint8_t> gzip(const std::vector<std::uint8_t>& bytes) {
  z_stream zs{};
  // Fixed header (no timestamp/name) so fixtures are byte-reproducible.
  if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw FormatError("zlib deflate init failed");
  }
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(bytes.size())) + 32);
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw FormatError("zlib deflate failed");
  out.resize(zs.total_out);
  return out;
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t offset) {
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) | (std::uint32_t{b[offset + 2]} << 8) |
         std::uint32_t{b[offset + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

inline std::string hex_bytes(const std::vector<std::uint8_t>& b, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < std::min(n, b.size()); ++i) {
    s += digits[b[i] >> 4];
    s += digits[b[i] & 0xF];
    if (i + 1 < std::min(n, b.size())) s += ' ';
  }
  return s;
}

// Raw file contents, inflated when the gzip magic is present.
inline std::vector<std::uint8_t> read_maybe_gzip(const std::string& path) {
  auto bytes = read_file(path);
  return is_gzip(bytes) ? gunzip(bytes, path) : bytes;
}

inline void require_size(const std::vector<std::uint8_t>& b, std::size_t expected, const std::string& path) {
  if (b.size() < expected) {
    throw FormatError("truncated IDX file '" + path + "': expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(b.size()));
  }
}

}  // namespace detail

enum class Split { Train, Val, Test };

struct IdxDataset {
  Tensor images;  // N×784, values in [0,1]
  std::vector<int> labels;
  Split split = Split::Train;
  std::size_t rows = 28;
  std::size_t cols = 28;

  std::size_t size() const { return labels.size(); }
};

struct IdxImages {
  std::size_t count, rows, cols;
  std::vector<std::uint8_t> pixels;
};

inline IdxImages read_idx_images(const std::string& path) {
  const auto b = detail::read_maybe_gzip(path);
  detail::require_size(b, 16, path);
  const auto magic = detail::read_be32(b, 0);
  if (magic != kIdxImageMagic) {
    throw FormatError("bad IDX image magic in '" + path + "': " + detail::hex_bytes(b, 4));
  }
  IdxImages img{detail::read_be32(b, 4), detail::read_be32(b, 8), detail::read_be32(b, 12), {}};
  const std::size_t n = img.count * img.rows * img.cols;
  detail::require_size(b, 16 + n, path);
  img.pixels.assign(b.begin() + 16, b.begin() + 16 + static_cast<std::ptrdiff_t>(n));
  return img;
}

inline std::vector<int> read_idx_labels(const std::string& path) {
  const auto b = detail::read_maybe_gzip(path);
  detail::require_size(b, 8, path);
  const auto magic = detail::read_be32(b, 0);
  if (magic != kIdxLabelMagic) {
    throw FormatError("bad IDX label magic in '" + path + "': " + detail::hex_bytes(b, 4));
  }
  const std::size_t n = detail::read_be32(b, 4);
  detail::require_size(b, 8 + n, path);
  return {b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(n)};
}

/// Parse an IDX image/label pair (raw or gzip), keeping the first `limit`
/// examples. Pixels are scaled by 1/255.
inline IdxDataset load_idx(const std::string& images_path, const std::string& labels_path,
                           std::optional<std::size_t> limit = std::nullopt, Split split = Split::Train) {
  auto img = read_idx_images(images_path);
  auto labels = read_idx_labels(labels_path);
  if (labels.size() != img.count) {
    throw FormatError("IDX count mismatch: " + std::to_string(img.count) + " images vs " +
                      std::to_string(labels.size()) + " labels");
  }
  std::size_t n = img.count;
  if (limit) n = std::min(n, *limit);
  if (n == 0) throw FormatError("IDX dataset '" + images_path + "' is empty");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] > 9) throw FormatError("IDX label out of range at index " + std::to_string(i));
  }
  const std::size_t dim = img.rows * img.cols;
  std::vector<double> pixels(n * dim);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<double>(img.pixels[i]) / 255.0;
  labels.resize(n);
  return {Tensor::from({n, dim}, std::move(pixels)), std::move(labels), split, img.rows, img.cols};
}

inline std::vector<std::uint8_t> encode_idx_images(std::size_t count, std::size_t rows, std::size_t cols,
                                                   const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> b;
  detail::put_be32(b, kIdxImageMagic);
  detail::put_be32(b, static_cast<std::uint32_t>(count));
  detail::put_be32(b, static_cast<std::uint32_t>(rows));
  detail::put_be32(b, static_cast<std::uint32_t>(cols));
  b.insert(b.end(), pixels.begin(), pixels.end());
  return b;
}

inline std::vector<std::uint8_t> encode_idx_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> b;
  detail::put_be32(b, kIdxLabelMagic);
  detail::put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

/// Write `dataset` back out as an IDX pair (pixels rounded to bytes).
inline void write_idx(const IdxDataset& dataset, const std::string& images_path, const std::string& labels_path,
                      bool compress = false) {
  std::vector<std::uint8_t> pixels(dataset.images.numel());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(dataset.images[i] * 255.0), 0L, 255L));
  }
  std::vector<std::uint8_t> labels(dataset.labels.begin(), dataset.labels.end());
  auto img = encode_idx_images(dataset.size(), dataset.rows, dataset.cols, pixels);
  auto lab = encode_idx_labels(labels);
  detail::write_file(images_path, compress ? detail::gzip(img) : img);
  detail::write_file(labels_path, compress ? detail::gzip(lab) : lab);
}

/// Rows `indices` of a 2-D tensor as a new constant tensor.
inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& indices) {
  const std::size_t cols = x.size(1);
  std::vector<double> out;
  out.reserve(indices.size() * cols);
  for (auto i : indices) {
    const auto begin = x.values().begin() + static_cast<std::ptrdiff_t>(i * cols);
    out.insert(out.end(), begin, begin + static_cast<std::ptrdiff_t>(cols));
  }
  return Tensor::from({indices.size(), cols}, std::move(out));
}

inline IdxDataset subset(const IdxDataset& d, const std::vector<std::size_t>& indices, Split split) {
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (auto i : indices) labels.push_back(d.labels[i]);
  return {gather_rows(d.images, indices), std::move(labels), split, d.rows, d.cols};
}

/// First ⌈fraction·N⌉ examples for training, the rest for validation.
inline std::pair<IdxDataset, IdxDataset> split_train_val(const IdxDataset& d, double fraction = 0.8) {
  const auto n_train = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(d.size())));
  if (n_train == 0 || n_train >= d.size()) throw ConfigError("split_train_val: split leaves an empty side");
  std::vector<std::size_t> train(n_train), val(d.size() - n_train);
  for (std::size_t i = 0; i < n_train; ++i) train[i] = i;
  for (std::size_t i = n_train; i < d.size(); ++i) val[i - n_train] = i;
  return {subset(d, train, Split::Train), subset(d, val, Split::Val)};
}

/// Piecewise-constant signals plus Gaussian noise.
struct SyntheticDenoise {
  Tensor clean;  // N×d
  Tensor noisy;
  std::size_t segments = 1;
  double noise_std = 0.0;
  std::uint64_t seed = 0;

  std::size_t size() const { return clean.size(0); }
};

inline SyntheticDenoise gen_synthetic_denoise(std::size_t n, std::size_t d, std::size_t segments, double noise_std,
                                              Rng& rng) {
  if (d < 4) throw ConfigError("gen_synthetic_denoise: d must be at least 4");
  if (segments < 1 || segments > d / 2) {
    throw ConfigError("gen_synthetic_denoise: segments must lie in [1, d/2], got " + std::to_string(segments));
  }
  if (n == 0) throw ConfigError("gen_synthetic_denoise: n must be positive");
  if (noise_std < 0.0) throw ConfigError("gen_synthetic_denoise: noise stdev must be non-negative");
  std::vector<double> clean(n * d), noisy(n * d);
  for (std::size_t s = 0; s < n; ++s) {
    // Segment boundaries: sorted distinct cut points in 1..d-1.
    auto perm = rng.permutation(d - 1);
    std::vector<std::size_t> cuts(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(segments - 1));
    for (auto& c : cuts) c += 1;
    std::sort(cuts.begin(), cuts.end());
    cuts.push_back(d);
    std::size_t start = 0;
    for (auto end : cuts) {
      const double level = rng.uniform(-1.0, 1.0);
      for (std::size_t i = start; i < end; ++i) clean[s * d + i] = level;
      start = end;
    }
  }
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] = clean[i] + (noise_std > 0.0 ? noise_std * rng.normal() : 0.0);
  return {Tensor::from({n, d}, std::move(clean)), Tensor::from({n, d}, std::move(noisy)), segments, noise_std, 0};
}

/// Seeded shuffle split into minibatches. The last batch may be short; a
/// trailing single example joins the previous batch so batch statistics
/// are always defined.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  const auto perm = rng.permutation(n);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  if (batch_size > 1 && out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back()[0]);
    out.pop_back();
  }
  return out;
}

}  // namespace hyperstab
