#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace irbm::cli {

namespace {

std::uint64_t to_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw std::invalid_argument(key + ": '" + s + "' is not a non-negative integer");
  return v;
}

double to_double(const std::string& key, const std::string& s) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw std::invalid_argument(key + ": '" + s + "' is not a number");
  return v;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

Setter str(std::string RunConfig::*m) {
  return [m](RunConfig& c, const std::string&, const std::string& v) { c.*m = v; };
}
Setter size(std::size_t RunConfig::*m) {
  return [m](RunConfig& c, const std::string& k, const std::string& v) {
    c.*m = static_cast<std::size_t>(to_u64(k, v));
  };
}
Setter u64(std::uint64_t RunConfig::*m) {
  return [m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = to_u64(k, v); };
}
Setter dbl(double RunConfig::*m) {
  return [m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = to_double(k, v); };
}

const std::map<std::string, Setter>& run_fields() {
  static const std::map<std::string, Setter> table = {
      {"data", str(&RunConfig::data)},
      {"train_images", str(&RunConfig::train_images)},
      {"train_labels", str(&RunConfig::train_labels)},
      {"test_images", str(&RunConfig::test_images)},
      {"test_labels", str(&RunConfig::test_labels)},
      {"num_classes", size(&RunConfig::num_classes)},
      {"data_seed", u64(&RunConfig::data_seed)},
      {"synthetic", str(&RunConfig::synthetic)},
      {"synth_side", size(&RunConfig::synth_side)},
      {"synth_train_n", size(&RunConfig::synth_train_n)},
      {"synth_test_n", size(&RunConfig::synth_test_n)},
      {"synth_classes", size(&RunConfig::synth_classes)},
      {"synth_dim", size(&RunConfig::synth_dim)},
      {"synth_noise", dbl(&RunConfig::synth_noise)},
      {"max_train_examples", size(&RunConfig::max_train_examples)},
      {"valid_fraction", dbl(&RunConfig::valid_fraction)},
      {"output_dir", str(&RunConfig::output_dir)},
      {"resume", str(&RunConfig::resume)},
      {"epochs", size(&RunConfig::epochs)},
      {"eval_every", size(&RunConfig::eval_every)},
      {"checkpoint_every", size(&RunConfig::checkpoint_every)},
      {"eval_perms", size(&RunConfig::eval_perms)},
      {"exact_cap", size(&RunConfig::exact_cap)},
      {"ais_temps", size(&RunConfig::ais_temps)},
      {"ais_chains", size(&RunConfig::ais_chains)},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (const auto it = run_fields().find(key); it != run_fields().end()) {
    it->second(*this, key, value);
    return;
  }
  if (TrainConfig::is_key(key)) {
    train.set(key, value);
    return;
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  train.validate();
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("invalid run config: " + what);
  };
  if (num_data_sources() > 1) fail("set at most one of data, train_images, synthetic");
  if (synthetic != "none" && synthetic != "bars_and_stripes" && synthetic != "shifted_patterns")
    fail("synthetic must be none, bars_and_stripes or shifted_patterns");
  if (!train_labels.empty() && train_images.empty()) fail("train_labels needs train_images");
  if (!test_images.empty() && train_images.empty()) fail("test_images needs train_images");
  if (!(valid_fraction >= 0.0 && valid_fraction < 1.0)) fail("valid_fraction must be in [0, 1)");
  if (!(synth_noise >= 0.0 && synth_noise <= 1.0)) fail("synth_noise must be in [0, 1]");
  if (epochs == 0) fail("epochs must be >= 1");
  if (eval_perms == 0) fail("eval_perms must be >= 1");
  if (ais_temps < 2) fail("ais_temps must be >= 2");
  if (ais_chains == 0) fail("ais_chains must be >= 1");
  if (exact_cap > 24) fail("exact_cap must be <= 24");
  if (output_dir.empty()) fail("output_dir must not be empty");
}

int RunConfig::num_data_sources() const {
  return (!data.empty()) + (!train_images.empty()) + (synthetic != "none");
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, v] : run_fields()) out.push_back(k);
  for (const auto& [k, v] : TrainConfig{}.items()) out.push_back(k);
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                  const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_key_values(ss.str(), path);
}

}  // namespace irbm::cli
