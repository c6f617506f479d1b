#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "irbm/datasets.hpp"
#include "temp_dir.hpp"

namespace irbm {
namespace {

using test::TempDir;

void put_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 3; k >= 0; --k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::vector<std::uint8_t> idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                                     const std::vector<std::uint8_t>& pixels,
                                     std::uint32_t magic = 2051) {
  std::vector<std::uint8_t> out;
  put_be(out, magic);
  put_be(out, count);
  put_be(out, rows);
  put_be(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> out;
  put_be(out, 2049);
  put_be(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

TEST(Idx, ParsesImagesAndLabels) {
  TempDir dir;
  const std::vector<std::uint8_t> px{0, 255, 128, 0, 0, 0, 0, 0, 10, 20, 30, 40};
  test::write_bytes(dir.file("img"), idx_images(3, 2, 2, px));
  test::write_bytes(dir.file("lab"), idx_labels({7, 0, 3}));
  const RawImages raw = load_mnist_idx(dir.file("img"), dir.file("lab"));
  ASSERT_EQ(raw.size(), 3u);
  EXPECT_EQ(raw.dim(), 4u);
  EXPECT_EQ(raw.labels, (std::vector<std::size_t>{7, 0, 3}));
  EXPECT_DOUBLE_EQ(raw.intensities(0)[1], 1.0);
  EXPECT_DOUBLE_EQ(raw.intensities(0)[2], 128.0 / 255.0);
  for (double x : raw.intensities(1)) EXPECT_EQ(x, 0.0);
}

TEST(Idx, ReadsGzipSubset) {
  const std::string dir = IRBM_TEST_DATA "/mnist_subset/";
  const RawImages raw =
      load_mnist_idx(dir + "train-images-idx3-ubyte.gz", dir + "train-labels-idx1-ubyte.gz");
  EXPECT_EQ(raw.rows, 28u);
  EXPECT_EQ(raw.cols, 28u);
  EXPECT_EQ(raw.size(), 1000u);
  std::set<std::size_t> classes(raw.labels.begin(), raw.labels.end());
  EXPECT_EQ(classes.size(), 10u);
}

TEST(Idx, RejectsBadMagic) {
  TempDir dir;
  test::write_bytes(dir.file("img"), idx_images(1, 1, 1, {0}, 2049));
  try {
    load_mnist_idx(dir.file("img"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 0"), std::string::npos);
  }
}

TEST(Idx, TruncationNamesTheOffset) {
  TempDir dir;
  test::write_bytes(dir.file("img"), idx_images(2, 2, 2, {1, 2, 3, 4, 5}));
  try {
    load_mnist_idx(dir.file("img"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 16"), std::string::npos) << e.what();
  }
}

TEST(Idx, CountMismatchIsAnError) {
  TempDir dir;
  test::write_bytes(dir.file("img"), idx_images(2, 1, 1, {0, 0}));
  test::write_bytes(dir.file("lab"), idx_labels({1}));
  EXPECT_THROW(load_mnist_idx(dir.file("img"), dir.file("lab")), FormatError);
}

TEST(Binarize, ExtremesAreDeterministic) {
  RawImages raw;
  raw.rows = 1;
  raw.cols = 2;
  raw.pixels.assign(500, {0, 255});
  const Dataset d = binarize_stochastic(raw, 3);
  for (const auto& v : d.examples) EXPECT_EQ(v, (VisibleVector{0, 1}));
  EXPECT_EQ(d.num_classes, 0u);
}

TEST(Binarize, HalfIntensityIsAFairCoin) {
  RawImages raw;
  raw.rows = 1;
  raw.cols = 1000;
  raw.pixels.assign(100, std::vector<std::uint8_t>(1000, 0));
  // 127.5/255 is not a byte; use the closest pair and average.
  for (auto& img : raw.pixels)
    for (std::size_t j = 0; j < img.size(); ++j) img[j] = j % 2 ? 127 : 128;
  const Dataset d = binarize_stochastic(raw, 4);
  double mean = 0.0;
  for (const auto& v : d.examples)
    for (auto b : v) mean += b;
  EXPECT_NEAR(mean / 1e5, 0.5, 0.005);
}

TEST(Binarize, SameSeedSameData) {
  RawImages raw;
  raw.rows = 2;
  raw.cols = 3;
  raw.pixels.assign(20, {10, 50, 100, 150, 200, 250});
  raw.labels.assign(20, 4);
  EXPECT_EQ(binarize_stochastic(raw, 5), binarize_stochastic(raw, 5));
  EXPECT_NE(binarize_stochastic(raw, 5), binarize_stochastic(raw, 6));
  EXPECT_EQ(binarize_stochastic(raw, 5).num_classes, 10u);
}

DatasetSplits sample_splits(std::size_t d, std::size_t c, std::array<std::size_t, 3> sizes) {
  DatasetSplits s;
  Dataset* parts[3] = {&s.train, &s.valid, &s.test};
  const Split names[3] = {Split::kTrain, Split::kValid, Split::kTest};
  RngStream rng(7, StreamPurpose::kCheck);
  for (int k = 0; k < 3; ++k) {
    parts[k]->split = names[k];
    parts[k]->num_visible = d;
    parts[k]->num_classes = c;
    for (std::size_t n = 0; n < sizes[k]; ++n) {
      VisibleVector v(d);
      for (auto& b : v) b = rng.bernoulli(0.3) ? 1 : 0;
      parts[k]->examples.push_back(std::move(v));
      if (c) parts[k]->labels.push_back(rng.below(c));
    }
  }
  return s;
}

TEST(Ibmp, RoundTripIsExact) {
  TempDir dir;
  for (std::size_t d : {1, 7, 8, 9, 784}) {
    for (std::size_t c : {0, 3, 300}) {
      const DatasetSplits s = sample_splits(d, c, {13, 2, 5});
      write_ibmp(dir.file("x.ibmp"), s);
      EXPECT_EQ(read_ibmp(dir.file("x.ibmp")), s) << "d=" << d << " c=" << c;
      const auto bytes = test::read_bytes(dir.file("x.ibmp"));
      EXPECT_EQ(bytes.size(), 28 + (c ? 2 * 20 : 0) + 20 * ((d + 7) / 8));
    }
  }
}

TEST(Ibmp, RejectsCorruption) {
  TempDir dir;
  write_ibmp(dir.file("x.ibmp"), sample_splits(10, 2, {4, 0, 1}));
  auto bytes = test::read_bytes(dir.file("x.ibmp"));
  auto bad = bytes;
  bad[0] = 'X';
  test::write_bytes(dir.file("bad"), bad);
  EXPECT_THROW(read_ibmp(dir.file("bad")), FormatError);
  bad = bytes;
  bad.pop_back();
  test::write_bytes(dir.file("bad"), bad);
  EXPECT_THROW(read_ibmp(dir.file("bad")), FormatError);
  bad = bytes;
  bad.push_back(0);
  test::write_bytes(dir.file("bad"), bad);
  EXPECT_THROW(read_ibmp(dir.file("bad")), FormatError);
  bad = bytes;
  bad[28] = 9;  // first label, C = 2
  test::write_bytes(dir.file("bad"), bad);
  EXPECT_THROW(read_ibmp(dir.file("bad")), FormatError);
}

TEST(Silhouettes, ChecksPublishedShape) {
  TempDir dir;
  const DatasetSplits s = sample_splits(784, 101, {4100, 2264, 2307});
  write_ibmp(dir.file("sil.ibmp"), s);
  const DatasetSplits loaded = load_silhouettes(dir.file("sil.ibmp"));
  EXPECT_EQ(loaded.train.size(), 4100u);
  for (const Dataset* p : {&loaded.train, &loaded.valid, &loaded.test})
    for (std::size_t y : p->labels) EXPECT_LT(y, 101u);
  write_ibmp(dir.file("small.ibmp"), sample_splits(784, 101, {4099, 2264, 2307}));
  EXPECT_THROW(load_silhouettes(dir.file("small.ibmp")), FormatError);
}

TEST(BarsAndStripes, DistinctPatternCount) {
  // Blank and full images are both a bar and a stripe pattern, so they
  // are counted once.
  EXPECT_EQ(bars_and_stripes_patterns(2).size(), 6u);
  EXPECT_EQ(bars_and_stripes_patterns(3).size(), 14u);
  EXPECT_EQ(bars_and_stripes_patterns(4).size(), 30u);
}

TEST(BarsAndStripes, UniformGenerator) {
  const auto patterns = bars_and_stripes_patterns(2);
  const Dataset d = synth_bars_and_stripes(2, 60000, 8);
  EXPECT_EQ(d.num_visible, 4u);
  std::map<VisibleVector, double> freq;
  for (const auto& v : d.examples) freq[v] += 1.0;
  ASSERT_EQ(freq.size(), patterns.size());
  const double p = 1.0 / 6.0;
  const double sigma = std::sqrt(p * (1 - p) / 60000);
  double entropy = 0.0;
  for (const auto& [v, c] : freq) {
    EXPECT_NEAR(c / 60000, p, 3 * sigma);
    entropy -= (c / 60000) * std::log(c / 60000);
  }
  EXPECT_NEAR(entropy, std::log(6.0), 1e-3);
}

TEST(BarsAndStripes, DeskScaleShape) {
  const Dataset d = synth_bars_and_stripes(4, 500, 9);
  EXPECT_EQ(d.size(), 500u);
  EXPECT_EQ(d.num_visible, 16u);
  EXPECT_NO_THROW(d.validate());
  EXPECT_EQ(d, synth_bars_and_stripes(4, 500, 9));
}

TEST(ShiftedPatterns, LabelsAndNoise) {
  const Dataset clean = synth_shifted_patterns(3, 12, 300, 0.0, 10);
  EXPECT_NO_THROW(clean.validate());
  // Without noise every example is a rotation of its class prototype, so
  // examples of one class share their bit count.
  std::map<std::size_t, std::set<int>> ones;
  for (std::size_t n = 0; n < clean.size(); ++n) {
    int c = 0;
    for (auto b : clean.examples[n]) c += b;
    ones[clean.labels[n]].insert(c);
  }
  for (const auto& [y, counts] : ones) EXPECT_EQ(counts.size(), 1u);
  EXPECT_THROW(synth_shifted_patterns(0, 4, 1, 0.1, 1), std::invalid_argument);
}

TEST(Splits, ValidFractionIsDeterministic) {
  const Dataset d = synth_shifted_patterns(2, 8, 100, 0.1, 11);
  const DatasetSplits a = split_train_valid(d, 0.2, 3);
  EXPECT_EQ(a.valid.size(), 20u);
  EXPECT_EQ(a.train.size(), 80u);
  EXPECT_EQ(a.valid.labels.size(), 20u);
  EXPECT_EQ(a, split_train_valid(d, 0.2, 3));
  EXPECT_EQ(split_train_valid(d, 0.0, 3).train.size(), 100u);
}

TEST(Dataset, ValidateRejectsBadShapes) {
  Dataset d;
  d.num_visible = 2;
  d.examples = {{0, 1}, {1}};
  EXPECT_THROW(d.validate(), std::invalid_argument);
  d.examples = {{0, 2}};
  EXPECT_THROW(d.validate(), std::invalid_argument);
  d.examples = {{0, 1}};
  d.num_classes = 2;
  d.labels = {2};
  EXPECT_THROW(d.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace irbm
