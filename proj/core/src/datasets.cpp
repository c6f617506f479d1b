#include "irbm/datasets.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <cmath>
#include <numeric>

#include "irbm/rng.hpp"

namespace irbm {

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValid:
      return "valid";
    case Split::kTest:
      return "test";
  }
  return "?";
}

void Dataset::validate() const {
  if (!labels.empty() && labels.size() != examples.size())
    throw std::invalid_argument("dataset has " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(examples.size()) + " examples");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].size() != num_visible)
      throw std::invalid_argument("example " + std::to_string(i) + " has dimension " +
                                  std::to_string(examples[i].size()) + ", expected " +
                                  std::to_string(num_visible));
    for (std::uint8_t b : examples[i])
      if (b > 1) throw std::invalid_argument("example " + std::to_string(i) + " is not binary");
  }
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= num_classes)
      throw std::invalid_argument("label " + std::to_string(labels[i]) + " of example " +
                                  std::to_string(i) + " is out of range");
}

Vector RawImages::intensities(std::size_t index) const {
  const auto& px = pixels.at(index);
  Vector out(px.size());
  for (std::size_t j = 0; j < px.size(); ++j) out[j] = static_cast<double>(px[j]) / 255.0;
  return out;
}

namespace {

/// Whole file, inflated when it carries a gzip header.
std::vector<std::uint8_t> read_all(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> buf;
  int got = 0;
  while ((got = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0)
    out.insert(out.end(), buf.begin(), buf.begin() + got);
  int err = Z_OK;
  const char* msg = gzerror(f, &err);
  const std::string detail = msg ? msg : "";
  gzclose(f);
  if (got < 0 || (err != Z_OK && err != Z_STREAM_END))
    throw FormatError("'" + path + "': decompression failed after " + std::to_string(out.size()) +
                      " bytes: " + detail);
  return out;
}

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& data, std::string name)
      : data_(data), name_(std::move(name)) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t n, const std::string& what) const {
    if (data_.size() - pos_ < n)
      throw FormatError(name_ + ": truncated " + what + " at byte offset " + std::to_string(pos_) +
                        ": need " + std::to_string(n) + " bytes, " +
                        std::to_string(data_.size() - pos_) + " available");
  }

  std::uint32_t u32_be(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v = (v << 8) | data_[pos_ + k];
    pos_ += 4;
    return v;
  }

  std::uint32_t u32_le(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | data_[pos_ + k];
    pos_ += 4;
    return v;
  }

  std::uint16_t u16_le(const std::string& what) {
    need(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }

  const std::uint8_t* bytes(std::size_t n, const std::string& what) {
    need(n, what);
    const std::uint8_t* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool at_end() const { return pos_ == data_.size(); }

 private:
  const std::vector<std::uint8_t>& data_;
  std::string name_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

constexpr char kIbmpMagic[4] = {'I', 'B', 'M', 'P'};
constexpr std::uint32_t kIbmpVersion = 1;

}  // namespace

RawImages load_mnist_idx(const std::string& images_path,
                         const std::optional<std::string>& labels_path) {
  const auto data = read_all(images_path);
  ByteReader in(data, "'" + images_path + "'");
  const std::uint32_t magic = in.u32_be("IDX magic");
  if (magic != kIdxImages)
    throw FormatError("'" + images_path + "': bad IDX image magic " + std::to_string(magic) +
                      " at byte offset 0, expected 2051");
  const std::size_t count = in.u32_be("image count");
  RawImages raw;
  raw.rows = in.u32_be("row count");
  raw.cols = in.u32_be("column count");
  const std::size_t dim = raw.rows * raw.cols;
  in.need(count * dim, "pixel data");
  raw.pixels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* p = in.bytes(dim, "pixel data");
    raw.pixels[i].assign(p, p + dim);
  }

  if (labels_path) {
    const auto ldata = read_all(*labels_path);
    ByteReader lin(ldata, "'" + *labels_path + "'");
    const std::uint32_t lmagic = lin.u32_be("IDX magic");
    if (lmagic != kIdxLabels)
      throw FormatError("'" + *labels_path + "': bad IDX label magic " + std::to_string(lmagic) +
                        " at byte offset 0, expected 2049");
    const std::size_t lcount = lin.u32_be("label count");
    if (lcount != count)
      throw FormatError("label file has " + std::to_string(lcount) + " entries but image file has " +
                        std::to_string(count));
    const std::uint8_t* p = lin.bytes(lcount, "label data");
    raw.labels.assign(p, p + lcount);
  }
  return raw;
}

Dataset binarize_stochastic(const RawImages& raw, std::uint64_t seed, Split split,
                            std::size_t num_classes) {
  Dataset out;
  out.split = split;
  out.num_visible = raw.dim();
  out.num_classes = raw.labels.empty() ? 0 : num_classes;
  out.labels = raw.labels;
  out.examples.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    RngStream rng(seed, StreamPurpose::kBinarize, 0, i);
    auto& v = out.examples[i];
    v.resize(raw.dim());
    for (std::size_t j = 0; j < raw.dim(); ++j)
      v[j] = rng.bernoulli(static_cast<double>(raw.pixels[i][j]) / 255.0) ? 1 : 0;
  }
  out.validate();
  return out;
}

void write_ibmp(const std::string& path, const DatasetSplits& splits) {
  const Dataset* parts[3] = {&splits.train, &splits.valid, &splits.test};
  const std::size_t d = splits.train.num_visible;
  const std::size_t c = splits.train.num_classes;
  if (c > 0xFFFF) throw std::invalid_argument("IBMP stores labels as u16");
  for (const Dataset* p : parts) {
    p->validate();
    if (p->size() > 0 && (p->num_visible != d || p->num_classes != c))
      throw std::invalid_argument("splits disagree on D or C");
    if (c > 0 && p->labels.size() != p->size())
      throw std::invalid_argument("labelled container needs labels for every split");
  }
  std::vector<std::uint8_t> out(kIbmpMagic, kIbmpMagic + 4);
  put_u32_le(out, kIbmpVersion);
  put_u32_le(out, static_cast<std::uint32_t>(d));
  put_u32_le(out, static_cast<std::uint32_t>(c));
  for (const Dataset* p : parts) put_u32_le(out, static_cast<std::uint32_t>(p->size()));
  if (c > 0)
    for (const Dataset* p : parts)
      for (std::size_t y : p->labels) {
        out.push_back(static_cast<std::uint8_t>(y & 0xFF));
        out.push_back(static_cast<std::uint8_t>(y >> 8));
      }
  const std::size_t row_bytes = (d + 7) / 8;
  for (const Dataset* p : parts)
    for (const auto& v : p->examples) {
      const std::size_t base = out.size();
      out.resize(base + row_bytes, 0);
      for (std::size_t j = 0; j < d; ++j)
        if (v[j]) out[base + j / 8] |= static_cast<std::uint8_t>(1u << (j % 8));
    }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

DatasetSplits read_ibmp(const std::string& path) {
  const auto data = read_all(path);
  ByteReader in(data, "'" + path + "'");
  const std::uint8_t* magic = in.bytes(4, "magic");
  if (std::memcmp(magic, kIbmpMagic, 4) != 0)
    throw FormatError("'" + path + "': bad magic at byte offset 0, expected IBMP");
  const std::uint32_t version = in.u32_le("version");
  if (version != kIbmpVersion)
    throw FormatError("'" + path + "': unsupported IBMP version " + std::to_string(version) +
                      " at byte offset 4");
  const std::size_t d = in.u32_le("D");
  const std::size_t c = in.u32_le("C");
  std::size_t counts[3];
  for (auto& n : counts) n = in.u32_le("split count");

  DatasetSplits out;
  Dataset* parts[3] = {&out.train, &out.valid, &out.test};
  const Split names[3] = {Split::kTrain, Split::kValid, Split::kTest};
  for (int s = 0; s < 3; ++s) {
    parts[s]->split = names[s];
    parts[s]->num_visible = d;
    parts[s]->num_classes = c;
  }
  if (c > 0) {
    for (int s = 0; s < 3; ++s) {
      parts[s]->labels.resize(counts[s]);
      for (auto& y : parts[s]->labels) {
        const std::size_t at = in.offset();
        y = in.u16_le("labels");
        if (y >= c)
          throw FormatError("'" + path + "': label " + std::to_string(y) + " at byte offset " +
                            std::to_string(at) + " is not below C=" + std::to_string(c));
      }
    }
  }
  const std::size_t row_bytes = (d + 7) / 8;
  for (int s = 0; s < 3; ++s) {
    parts[s]->examples.resize(counts[s]);
    for (auto& v : parts[s]->examples) {
      const std::uint8_t* row = in.bytes(row_bytes, to_string(names[s]) + " rows");
      v.resize(d);
      for (std::size_t j = 0; j < d; ++j) v[j] = (row[j / 8] >> (j % 8)) & 1u;
    }
  }
  if (!in.at_end())
    throw FormatError("'" + path + "': " + std::to_string(data.size() - in.offset()) +
                      " trailing bytes at byte offset " + std::to_string(in.offset()) +
                      " beyond the declared split counts");
  return out;
}

DatasetSplits load_silhouettes(const std::string& path) {
  DatasetSplits s = read_ibmp(path);
  auto check = [&path](const char* what, std::size_t got, std::size_t want) {
    if (got != want)
      throw FormatError("'" + path + "': " + what + " is " + std::to_string(got) + ", expected " +
                        std::to_string(want));
  };
  check("D", s.train.num_visible, 784);
  check("class count", s.train.num_classes, 101);
  check("train split size", s.train.size(), 4100);
  check("valid split size", s.valid.size(), 2264);
  check("test split size", s.test.size(), 2307);
  return s;
}

std::vector<VisibleVector> bars_and_stripes_patterns(std::size_t side) {
  if (side == 0 || side > 16) throw std::invalid_argument("side must be in [1, 16]");
  const std::size_t d = side * side;
  std::vector<VisibleVector> out;
  for (int orient = 0; orient < 2; ++orient) {
    for (std::size_t mask = 0; mask < (std::size_t{1} << side); ++mask) {
      VisibleVector v(d);
      for (std::size_t r = 0; r < side; ++r)
        for (std::size_t col = 0; col < side; ++col) {
          const std::size_t line = orient == 0 ? r : col;
          v[r * side + col] = (mask >> line) & 1u;
        }
      if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(std::move(v));
    }
  }
  return out;
}

Dataset synth_bars_and_stripes(std::size_t side, std::size_t n, std::uint64_t seed) {
  const auto patterns = bars_and_stripes_patterns(side);
  Dataset out;
  out.num_visible = side * side;
  RngStream rng(seed, StreamPurpose::kSynthetic, 0, 0);
  out.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.examples.push_back(patterns[rng.below(patterns.size())]);
  return out;
}

Dataset synth_shifted_patterns(std::size_t num_classes, std::size_t num_visible, std::size_t n,
                               double noise, std::uint64_t seed) {
  if (num_classes == 0 || num_visible == 0)
    throw std::invalid_argument("need at least one class and one visible unit");
  if (!(noise >= 0.0 && noise <= 1.0)) throw std::invalid_argument("noise must be in [0, 1]");
  std::vector<VisibleVector> protos(num_classes, VisibleVector(num_visible));
  for (std::size_t c = 0; c < num_classes; ++c) {
    RngStream rng(seed, StreamPurpose::kSynthetic, 1, c);
    for (auto& b : protos[c]) b = rng.bernoulli(0.5) ? 1 : 0;
  }
  Dataset out;
  out.num_visible = num_visible;
  out.num_classes = num_classes;
  RngStream rng(seed, StreamPurpose::kSynthetic, 2, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = rng.below(num_classes);
    const std::size_t shift = rng.below(num_visible);
    VisibleVector v(num_visible);
    for (std::size_t j = 0; j < num_visible; ++j) {
      v[j] = protos[y][(j + shift) % num_visible];
      if (rng.bernoulli(noise)) v[j] ^= 1u;
    }
    out.examples.push_back(std::move(v));
    out.labels.push_back(y);
  }
  return out;
}

DatasetSplits split_train_valid(const Dataset& data, double valid_fraction, std::uint64_t seed) {
  if (!(valid_fraction >= 0.0 && valid_fraction < 1.0))
    throw std::invalid_argument("valid_fraction must be in [0, 1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream rng(seed, StreamPurpose::kShuffle, ~std::uint64_t{0});
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
  const std::size_t n_valid =
      static_cast<std::size_t>(std::floor(valid_fraction * static_cast<double>(data.size())));
  DatasetSplits out;
  for (Dataset* p : {&out.train, &out.valid, &out.test}) {
    p->num_visible = data.num_visible;
    p->num_classes = data.num_classes;
  }
  out.train.split = Split::kTrain;
  out.valid.split = Split::kValid;
  out.test.split = Split::kTest;
  for (std::size_t k = 0; k < order.size(); ++k) {
    Dataset& dst = k < n_valid ? out.valid : out.train;
    dst.examples.push_back(data.examples[order[k]]);
    if (data.has_labels()) dst.labels.push_back(data.labels[order[k]]);
  }
  return out;
}

}  // namespace irbm
