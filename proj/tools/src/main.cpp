#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "irbm/datasets.hpp"
#include "irbm/training.hpp"

namespace {

using irbm::cli::KeyValues;

/// Registers --<key> for every config key and --config for a file.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  CLI::App* app = nullptr;

  void attach(CLI::App* sub) {
    app = sub;
    sub->add_option("--config", config_path, "flat key=value config file");
    for (const auto& key : irbm::cli::RunConfig::keys())
      sub->add_option("--" + key, values[key], "config key " + key);
  }

  KeyValues flag_items() const {
    KeyValues out;
    for (const auto& [key, value] : values)
      if (app->count("--" + key)) out.emplace_back(key, value);
    return out;
  }

  irbm::cli::RunConfig build() const {
    const KeyValues file =
        config_path.empty() ? KeyValues{} : irbm::cli::read_config_file(config_path);
    return irbm::cli::assemble_run_config(file, flag_items());
  }
};

}  // namespace

int main(int argc, char** argv) {
  using namespace irbm::cli;
  CLI::App app{"Infinite RBM training and evaluation"};
  app.require_subcommand(1);

  ConfigFlags train_flags, eval_flags, check_flags, convert_flags;
  auto* train = app.add_subcommand("train", "train a model; writes metrics.csv and checkpoints");
  train_flags.attach(train);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint; prints an EvalReport as JSON");
  eval_flags.attach(eval);
  eval->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval->add_option("--split", eval_args.split, "train, valid or test");
  eval->add_option("--perms", eval_args.perms, "orderings averaged over");
  eval->add_flag("--converted-rbm", eval_args.converted_rbm, "also score the model clamped at N_h");
  eval->add_option("--output", eval_args.output, "JSON file (default stdout)");

  SampleArgs sample_args;
  auto* sample = app.add_subcommand("sample", "run Gibbs chains and export PGM grids");
  sample->add_option("--checkpoint", sample_args.checkpoint)->required();
  sample->add_option("--steps", sample_args.steps, "Gibbs steps per chain");
  sample->add_option("--samples", sample_args.samples, "number of chains");
  sample->add_option("--image-width", sample_args.image_width);
  sample->add_option("--output-dir", sample_args.output_dir);
  sample->add_option("--seed", sample_args.seed);

  CheckArgs check_args;
  auto* check = app.add_subcommand("check", "verify a checkpoint and the model invariants");
  check_flags.attach(check);
  check->add_option("--checkpoint", check_args.checkpoint)->required();
  check->add_option("--perms", check_args.perms, "orderings for the invariance report");

  ConvertArgs convert_args;
  auto* convert = app.add_subcommand("convert-dataset", "write data sources to a packed-bitmap file");
  convert_flags.attach(convert);
  convert->add_option("--output", convert_args.output)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*train) return cmd_train(train_flags.build(), std::cerr);
    if (*eval) return cmd_eval(eval_flags.build(), eval_args, std::cout, std::cerr);
    if (*sample) return cmd_sample(sample_args, std::cerr);
    if (*check) {
      const RunConfig config = check_flags.build();
      check_args.seed = config.train.seed;
      return cmd_check(config, check_args, std::cout);
    }
    if (*convert) return cmd_convert_dataset(convert_flags.build(), convert_args, std::cerr);
  } catch (const irbm::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}
