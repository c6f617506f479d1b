#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "irbm/model.hpp"

namespace irbm {

enum class Split { kTrain, kValid, kTest };

std::string to_string(Split split);

struct Dataset {
  std::vector<VisibleVector> examples;
  std::vector<std::size_t> labels;  ///< empty when unlabelled
  Split split = Split::kTrain;
  std::size_t num_visible = 0;
  std::size_t num_classes = 0;

  std::size_t size() const { return examples.size(); }
  bool has_labels() const { return !labels.empty(); }
  /// Shapes agree, entries binary, labels in range. Throws std::invalid_argument.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

struct DatasetSplits {
  Dataset train;
  Dataset valid;
  Dataset test;

  bool operator==(const DatasetSplits&) const = default;
};

/// 8-bit grayscale images as stored in IDX files.
struct RawImages {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::vector<std::uint8_t>> pixels;  ///< row-major, one vector per image
  std::vector<std::size_t> labels;                ///< empty when no label file was given

  std::size_t size() const { return pixels.size(); }
  std::size_t dim() const { return rows * cols; }
  /// Intensities pixel/255 in [0, 1].
  Vector intensities(std::size_t index) const;
};

/// Thrown for malformed input files; the message names the byte offset.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads IDX image (magic 2051) and optional label (magic 2049) files.
/// Gzip-compressed files are detected and inflated transparently.
RawImages load_mnist_idx(const std::string& images_path,
                         const std::optional<std::string>& labels_path = {});

/// Each pixel becomes 1 with probability equal to its intensity. Image i
/// draws from stream (seed, binarize, 0, i), so the result is fixed by seed.
Dataset binarize_stochastic(const RawImages& raw, std::uint64_t seed, Split split = Split::kTrain,
                            std::size_t num_classes = 10);

/// Packed-bitmap container: "IBMP", u32 version, D, C, three split counts,
/// u16 labels (when C > 0), then rows packed LSB-first and padded to bytes.
void write_ibmp(const std::string& path, const DatasetSplits& splits);
DatasetSplits read_ibmp(const std::string& path);

/// Reads the silhouettes container and checks its published shape
/// (784 pixels, 101 classes, 4100/2264/2307 examples).
DatasetSplits load_silhouettes(const std::string& path);

/// Every distinct bars-or-stripes image on a side x side grid; there are
/// 2^(side+1) - 2 of them.
std::vector<VisibleVector> bars_and_stripes_patterns(std::size_t side);

/// n draws, uniform over the distinct patterns. Unlabelled.
Dataset synth_bars_and_stripes(std::size_t side, std::size_t n, std::uint64_t seed);

/// C random prototypes of length D; each example is a random circular
/// shift of its class prototype with every bit flipped with probability noise.
Dataset synth_shifted_patterns(std::size_t num_classes, std::size_t num_visible, std::size_t n,
                               double noise, std::uint64_t seed);

/// Moves a seeded random fraction of `data` into a validation split.
DatasetSplits split_train_valid(const Dataset& data, double valid_fraction, std::uint64_t seed);

}  // namespace irbm
