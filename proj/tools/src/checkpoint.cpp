#include "checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "irbm/datasets.hpp"

namespace irbm::cli {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    u64(s.size());
    buf_ += s;
  }
  void doubles(std::span<const double> xs) {
    u64(xs.size());
    for (double x : xs) f64(x);
  }
  void matrix(const Matrix& m) {
    u64(m.rows());
    u64(m.cols());
    for (double x : m.flat()) f64(x);
  }
  void arrays(const ParamArrays& a) {
    matrix(a.weights);
    matrix(a.label_weights);
    doubles(a.hidden_bias);
    doubles(a.visible_bias);
    doubles(a.label_bias);
  }
  std::string& bytes() { return buf_; }

 private:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& data, std::size_t end, std::string origin)
      : data_(data), end_(end), origin_(std::move(origin)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(origin_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }
  void need(std::size_t n) const {
    if (end_ - pos_ < n) fail("truncated checkpoint");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
  std::size_t count(std::size_t max_elems, std::size_t elem_bytes) {
    const std::uint64_t n = u64();
    if (n > max_elems || n * elem_bytes > end_ - pos_) fail("implausible length " + std::to_string(n));
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    const std::size_t n = count(1 << 20, 1);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Vector doubles() {
    Vector out(count(std::size_t{1} << 32, 8));
    for (double& x : out) x = f64();
    return out;
  }
  Matrix matrix() {
    const std::uint64_t rows = u64();
    const std::uint64_t cols = u64();
    if (cols != 0 && rows > (end_ - pos_) / 8 / cols) fail("implausible matrix shape");
    Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    for (double& x : m.flat()) x = f64();
    return m;
  }
  ParamArrays arrays() {
    ParamArrays a;
    a.weights = matrix();
    a.label_weights = matrix();
    a.hidden_bias = doubles();
    a.visible_bias = doubles();
    a.label_bias = doubles();
    return a;
  }
  bool at_end() const { return pos_ == end_; }

 private:
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  const std::string& data_;
  std::size_t end_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::string& bytes, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

bool same_shape(const ParamArrays& a, const ParamArrays& b) {
  return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
         a.label_weights.rows() == b.label_weights.rows() &&
         a.label_weights.cols() == b.label_weights.cols() &&
         a.hidden_bias.size() == b.hidden_bias.size() &&
         a.visible_bias.size() == b.visible_bias.size() &&
         a.label_bias.size() == b.label_bias.size();
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const TrainingState& s = ckpt.state;
  Writer w;
  w.bytes().append("IRBM", 4);
  w.u32(kCheckpointVersion);
  const auto items = ckpt.config.items();
  w.u64(items.size());
  for (const auto& [k, v] : items) {
    w.str(k);
    w.str(v);
  }
  w.u64(s.params.num_visible());
  w.u64(s.params.num_hidden());
  w.u64(s.params.num_classes());
  w.u32(s.params.penalty.mode == PenaltyMode::kConstant ? 0 : 1);
  w.f64(s.params.penalty.beta);
  w.arrays(s.params);

  w.arrays(s.optimizer.velocity);
  w.arrays(s.optimizer.grad_sq);
  w.u64(s.optimizer.unit_age.size());
  for (auto a : s.optimizer.unit_age) w.u64(a);
  w.u64(s.optimizer.step);

  w.u64(s.chains.size());
  for (const auto& p : s.chains.particles()) {
    w.u64(p.size());
    for (auto b : p) w.u8(b);
  }

  w.u64(s.regroup.regroup_length);
  w.u8(s.regroup.adaptive_phase ? 1 : 0);
  w.u64(s.regroup.adaptive_length);
  w.doubles(s.regroup.mz_history);
  w.f64(s.regroup.mz_epoch_sum);
  w.u64(s.regroup.mz_epoch_count);

  w.u64(s.epoch);
  const std::uint32_t crc = crc_of(w.bytes(), w.bytes().size());
  w.u32(crc);
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 12) throw FormatError(origin + ": file too short to be a checkpoint");
  if (bytes.compare(0, 4, "IRBM") != 0)
    throw FormatError(origin + ": bad magic at byte offset 0, expected IRBM");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kCheckpointVersion)
    throw FormatError(origin + ": unsupported checkpoint version " + std::to_string(version));
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != crc_of(bytes, body))
    throw FormatError(origin + ": checksum mismatch, the file is corrupted");

  Reader r(bytes, body, origin);
  r.u32();
  r.u32();
  Checkpoint ck;
  const std::size_t n_items = r.count(1024, 16);
  for (std::size_t k = 0; k < n_items; ++k) {
    const std::string key = r.str();
    const std::string value = r.str();
    try {
      ck.config.set(key, value);
    } catch (const std::invalid_argument& e) {
      r.fail(e.what());
    }
  }
  TrainingState& s = ck.state;
  const std::uint64_t d = r.u64();
  const std::uint64_t l = r.u64();
  const std::uint64_t c = r.u64();
  const std::uint32_t mode = r.u32();
  if (mode > 1) r.fail("unknown penalty mode");
  s.params.penalty.mode = mode == 0 ? PenaltyMode::kConstant : PenaltyMode::kDynamic;
  s.params.penalty.beta = r.f64();
  static_cast<ParamArrays&>(s.params) = r.arrays();
  if (s.params.num_visible() != d || s.params.num_hidden() != l || s.params.num_classes() != c)
    r.fail("parameter shapes disagree with the header");
  try {
    s.params.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }

  s.optimizer.velocity = r.arrays();
  s.optimizer.grad_sq = r.arrays();
  if (!same_shape(s.optimizer.velocity, s.params) || !same_shape(s.optimizer.grad_sq, s.params))
    r.fail("optimizer buffers do not match the parameters");
  s.optimizer.unit_age.resize(r.count(l, 8));
  if (s.optimizer.unit_age.size() != l) r.fail("unit age count does not match l");
  for (auto& a : s.optimizer.unit_age) a = r.u64();
  s.optimizer.step = r.u64();

  auto& particles = s.chains.particles();
  particles.resize(r.count(std::size_t{1} << 24, 8));
  for (auto& p : particles) {
    p.resize(r.count(d, 1));
    if (p.size() != d) r.fail("chain particle has wrong dimension");
    for (auto& b : p) {
      b = r.u8();
      if (b > 1) r.fail("chain particle is not binary");
    }
  }

  s.regroup.regroup_length = r.u64();
  s.regroup.adaptive_phase = r.u8() != 0;
  s.regroup.adaptive_length = r.u64();
  s.regroup.mz_history = r.doubles();
  s.regroup.mz_epoch_sum = r.f64();
  s.regroup.mz_epoch_count = r.u64();
  s.epoch = r.u64();
  if (!r.at_end()) r.fail("trailing bytes");
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + tmp + "'");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot open checkpoint '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str(), "'" + path + "'");
}

}  // namespace irbm::cli
