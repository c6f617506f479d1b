#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "irbm/datasets.hpp"
#include "run_config.hpp"

namespace irbm::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitRuntime = 2,
  kExitInvariant = 3,
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Defaults, then the training config stored in the resume checkpoint (if
/// any), then the config file, then flags. Later sources win.
RunConfig assemble_run_config(const KeyValues& file_items, const KeyValues& flag_items);

/// Builds the splits described by the data keys. Throws if none is set.
DatasetSplits load_run_data(const RunConfig& config);

int cmd_train(const RunConfig& config, std::ostream& log);

struct EvalArgs {
  std::string checkpoint;
  std::string split = "test";
  std::size_t perms = 5;
  bool converted_rbm = false;
  std::string output;  ///< empty: stdout
};
int cmd_eval(const RunConfig& config, const EvalArgs& args, std::ostream& out, std::ostream& log);

struct SampleArgs {
  std::string checkpoint;
  std::size_t steps = 10000;
  std::size_t samples = 16;
  std::size_t image_width = 0;  ///< 0: square images when D is a square
  std::string output_dir = ".";
  std::uint64_t seed = 1;
};
int cmd_sample(const SampleArgs& args, std::ostream& log);

struct CheckArgs {
  std::string checkpoint;
  std::size_t perms = 10;
  std::uint64_t seed = 1;
};
/// Prints one PASS/FAIL/SKIP line per check; kExitInvariant on any failure.
int cmd_check(const RunConfig& config, const CheckArgs& args, std::ostream& out);

struct ConvertArgs {
  std::string output;
};
int cmd_convert_dataset(const RunConfig& config, const ConvertArgs& args, std::ostream& log);

}  // namespace irbm::cli
