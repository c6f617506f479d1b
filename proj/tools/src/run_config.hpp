#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "irbm/training.hpp"

namespace irbm::cli {

/// Everything a training run needs. Training keys are forwarded to
/// TrainConfig; the rest live here.
struct RunConfig {
  TrainConfig train;

  // Data sources: a packed-bitmap file, IDX files, or a synthetic family.
  std::string data;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::size_t num_classes = 10;
  std::uint64_t data_seed = 0;  ///< binarization and synthetic data; 0: use seed
  std::string synthetic = "none";   ///< none, bars_and_stripes, shifted_patterns
  std::size_t synth_side = 4;
  std::size_t synth_train_n = 500;
  std::size_t synth_test_n = 500;
  std::size_t synth_classes = 3;
  std::size_t synth_dim = 16;
  double synth_noise = 0.05;
  std::size_t max_train_examples = 0;  ///< 0: all
  double valid_fraction = 0.0;

  std::string output_dir = ".";
  std::string resume;
  std::size_t epochs = 1;
  std::size_t eval_every = 50;
  std::size_t checkpoint_every = 0;  ///< 0: only the latest and final checkpoints
  std::size_t eval_perms = 1;
  std::size_t exact_cap = 14;
  std::size_t ais_temps = 1000;
  std::size_t ais_chains = 100;

  /// Unknown keys throw std::invalid_argument.
  void set(const std::string& key, const std::string& value);
  /// Field ranges; at most one data source.
  void validate() const;
  int num_data_sources() const;
  std::uint64_t effective_data_seed() const { return data_seed ? data_seed : train.seed; }

  static std::vector<std::string> keys();
};

/// Flat key=value lines; '#' starts a comment, blank lines are skipped.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                  const std::string& origin);
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

}  // namespace irbm::cli
