#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "hyperstab/fixtures.hpp"
#include "hyperstab/losses.hpp"

using namespace hyperstab;

namespace {

std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("hyperstab_test_data_" + name);
  std::filesystem::remove_all(dir);
  return dir.string();
}

}  // namespace

TEST(Idx, ValidFixture) {
  const auto f = write_fixtures(temp_dir("valid"));
  const auto d = load_idx(f.images, f.labels);
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.images.shape(), (Shape{2, 784}));
  EXPECT_EQ(d.labels, (std::vector<int>{7, 3}));
  EXPECT_DOUBLE_EQ(d.images[1], 7.0 / 255.0);
  EXPECT_DOUBLE_EQ(d.images[40], (40 * 7 % 256) / 255.0);
}

TEST(Idx, GzipMatchesRaw) {
  const auto f = write_fixtures(temp_dir("gzip"));
  const auto raw = load_idx(f.images, f.labels);
  const auto gz = load_idx(f.images_gz, f.labels_gz);
  EXPECT_EQ(raw.images.values(), gz.images.values());
  EXPECT_EQ(raw.labels, gz.labels);
  EXPECT_EQ(load_idx(f.images_gz, f.labels, 1).size(), 1u);
}

TEST(Idx, BadMagicNamesTheBytes) {
  const auto f = write_fixtures(temp_dir("magic"));
  try {
    read_idx_images(f.bad_magic);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("00 00 08 99"), std::string::npos) << e.what();
  }
}

TEST(Idx, TruncatedReportsExpectedAndActual) {
  const auto f = write_fixtures(temp_dir("truncated"));
  try {
    read_idx_images(f.truncated);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("1584"), std::string::npos) << msg;
    EXPECT_NE(msg.find("1016"), std::string::npos) << msg;
  }
}

TEST(Idx, MissingFileIsIoError) {
  EXPECT_THROW(read_idx_images("/nonexistent/hyperstab/images.idx"), IoError);
}

TEST(Idx, CountMismatchRejected) {
  const auto dir = temp_dir("mismatch");
  const auto f = write_fixtures(dir);
  const auto one_label = (std::filesystem::path(dir) / "one.idx").string();
  detail::write_file(one_label, encode_idx_labels({4}));
  EXPECT_THROW(load_idx(f.images, one_label), FormatError);
}

TEST(Idx, WriteReadRoundTrip) {
  const auto dir = temp_dir("roundtrip");
  const auto f = write_fixtures(dir);
  const auto d = load_idx(f.images, f.labels);
  for (bool compress : {false, true}) {
    const auto img = (std::filesystem::path(dir) / (compress ? "rt_img.gz" : "rt_img")).string();
    const auto lab = (std::filesystem::path(dir) / (compress ? "rt_lab.gz" : "rt_lab")).string();
    write_idx(d, img, lab, compress);
    const auto back = load_idx(img, lab);
    EXPECT_EQ(back.images.values(), d.images.values());
    EXPECT_EQ(back.labels, d.labels);
    EXPECT_EQ(detail::is_gzip(detail::read_file(img)), compress);
  }
}

TEST(Split, CeilFraction) {
  const auto f = write_fixtures(temp_dir("split"));
  const auto d = load_idx(f.images, f.labels);
  const auto [train, val] = split_train_val(d, 0.5);
  EXPECT_EQ(train.size(), 1u);
  EXPECT_EQ(val.size(), 1u);
  EXPECT_EQ(val.labels[0], 3);
  EXPECT_EQ(val.split, Split::Val);
  EXPECT_THROW(split_train_val(d, 0.9), ConfigError);
}

TEST(Synthetic, SingleSegmentHasZeroVariation) {
  Rng rng(1);
  const auto s = gen_synthetic_denoise(20, 16, 1, 0.1, rng);
  EXPECT_EQ(total_variation(s.clean).item(), 0.0);
}

TEST(Synthetic, ZeroNoiseCopiesClean) {
  Rng rng(2);
  const auto s = gen_synthetic_denoise(10, 8, 3, 0.0, rng);
  EXPECT_EQ(s.clean.values(), s.noisy.values());
}

TEST(Synthetic, SegmentCountAndNoiseLevel) {
  Rng rng(3);
  const auto s = gen_synthetic_denoise(1000, 32, 4, 0.1, rng);
  const double m = mse(s.noisy, s.clean).item();
  EXPECT_GE(m, 0.009);
  EXPECT_LE(m, 0.011);
  for (std::size_t r = 0; r < 50; ++r) {
    std::set<double> levels;
    for (std::size_t i = 0; i < 32; ++i) levels.insert(s.clean[r * 32 + i]);
    EXPECT_LE(levels.size(), 4u);
    for (double v : levels) EXPECT_TRUE(v >= -1.0 && v <= 1.0);
  }
}

TEST(Synthetic, InvalidArguments) {
  Rng rng(4);
  EXPECT_THROW(gen_synthetic_denoise(10, 8, 0, 0.1, rng), ConfigError);
  EXPECT_THROW(gen_synthetic_denoise(10, 8, 5, 0.1, rng), ConfigError);
  EXPECT_THROW(gen_synthetic_denoise(10, 8, 2, -1.0, rng), ConfigError);
}

TEST(Losses, UniformCrossEntropyIsLogTen) {
  const auto logits = Tensor::zeros({3, 10});
  EXPECT_NEAR(cross_entropy(logits, {0, 4, 9}).item(), std::log(10.0), 1e-12);
  EXPECT_THROW(cross_entropy(logits, {0, 10, 1}), DimensionError);
}

TEST(Losses, AccuracyTiesGoToLowestIndex) {
  const auto logits = Tensor::from({2, 3}, {1.0, 1.0, 0.0, 0.0, 2.0, 2.0});
  EXPECT_DOUBLE_EQ(accuracy(logits, {0, 2}), 0.5);
}

TEST(Losses, DenoiseLossEndpoints) {
  const auto constant = Tensor::full({2, 6}, 0.3);
  const auto clean = Tensor::from({2, 6}, {0, 0, 0, 1, 1, 1, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3});
  EXPECT_EQ(loss_task2(constant, clean, 1.0).item(), 0.0);
  EXPECT_NEAR(loss_task2(constant, clean, 0.0).item(), mse(constant, clean).item(), 1e-15);
  EXPECT_NEAR(total_variation(clean).item(), 0.5, 1e-15);
  EXPECT_THROW(loss_task2(constant, clean, 1.5), ConfigError);
}

TEST(Batches, CoverEveryIndexOnce) {
  Rng rng(5);
  const auto batches = epoch_batches(65, 32, rng);
  ASSERT_EQ(batches.size(), 2u);  // 32, 33 after folding the singleton
  EXPECT_EQ(batches[1].size(), 33u);
  std::set<std::size_t> seen;
  for (const auto& b : batches) seen.insert(b.begin(), b.end());
  EXPECT_EQ(seen.size(), 65u);
  Rng a(9), b(9);
  EXPECT_EQ(epoch_batches(100, 7, a), epoch_batches(100, 7, b));
  EXPECT_THROW(epoch_batches(10, 0, rng), ConfigError);
}
