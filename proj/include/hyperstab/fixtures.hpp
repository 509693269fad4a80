#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hyperstab/checkpoint.hpp"
#include "hyperstab/data.hpp"

namespace hyperstab {

/// Small byte-exact IDX and checkpoint files for parser tests.
struct FixtureSet {
  std::string images, labels;              // 2 images of 28×28, labels [7, 3]
  std::string images_gz, labels_gz;        // same content, gzip-compressed
  std::string bad_magic;                   // image header with magic 0x00000899
  std::string truncated;                   // header claims 1568 pixels, holds 1000
  std::string checkpoint;                  // two small arrays
};

inline std::vector<std::uint8_t> fixture_pixels() {
  std::vector<std::uint8_t> px(2 * 28 * 28);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>((i * 7) % 256);
  return px;
}

inline FixtureSet write_fixtures(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create fixture directory '" + dir + "'");
  const std::filesystem::path d(dir);
  FixtureSet f{(d / "images.idx").string(),        (d / "labels.idx").string(),
               (d / "images.idx.gz").string(),     (d / "labels.idx.gz").string(),
               (d / "bad_magic.idx").string(),     (d / "truncated.idx").string(),
               (d / "fixture.hpnc").string()};

  const auto images = encode_idx_images(2, 28, 28, fixture_pixels());
  const auto labels = encode_idx_labels({7, 3});
  detail::write_file(f.images, images);
  detail::write_file(f.labels, labels);
  detail::write_file(f.images_gz, detail::gzip(images));
  detail::write_file(f.labels_gz, detail::gzip(labels));

  auto bad = images;
  bad[2] = 0x08;
  bad[3] = 0x99;
  detail::write_file(f.bad_magic, bad);
  detail::write_file(f.truncated, std::vector<std::uint8_t>(images.begin(), images.begin() + 16 + 1000));

  detail::write_file(f.checkpoint, encode_checkpoint({{"a", {2, 2}, {1.0, -2.0, 0.5, 3.25}}, {"b", {1}, {42.0}}}));
  return f;
}

}  // namespace hyperstab
