#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "checkpoint.hpp"
#include "images.hpp"
#include "irbm/evaluation.hpp"
#include "irbm/inference.hpp"
#include "report.hpp"

namespace irbm::cli {

namespace fs = std::filesystem;

RunConfig assemble_run_config(const KeyValues& file_items, const KeyValues& flag_items) {
  RunConfig config;
  std::string resume;
  for (const auto* items : {&file_items, &flag_items})
    for (const auto& [k, v] : *items)
      if (k == "resume") resume = v;
  if (!resume.empty()) config.train = load_checkpoint(resume).config;
  for (const auto* items : {&file_items, &flag_items})
    for (const auto& [k, v] : *items) config.set(k, v);
  config.validate();
  return config;
}

namespace {

/// Splits the first n_train examples off a generated dataset.
DatasetSplits split_generated(Dataset all, std::size_t n_train) {
  DatasetSplits out;
  for (Dataset* p : {&out.train, &out.valid, &out.test}) {
    p->num_visible = all.num_visible;
    p->num_classes = all.num_classes;
  }
  out.train.split = Split::kTrain;
  out.valid.split = Split::kValid;
  out.test.split = Split::kTest;
  for (std::size_t i = 0; i < all.size(); ++i) {
    Dataset& dst = i < n_train ? out.train : out.test;
    dst.examples.push_back(std::move(all.examples[i]));
    if (all.has_labels()) dst.labels.push_back(all.labels[i]);
  }
  return out;
}

const Dataset& pick_split(const DatasetSplits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "valid") return s.valid;
  if (name == "test") return s.test;
  throw std::invalid_argument("split must be train, valid or test, got '" + name + "'");
}

const Dataset& default_eval_split(const DatasetSplits& s) {
  if (s.test.size()) return s.test;
  if (s.valid.size()) return s.valid;
  return s.train;
}

AisOptions ais_options(const RunConfig& config, const Dataset& train) {
  AisOptions o;
  o.num_temps = config.ais_temps;
  o.num_chains = config.ais_chains;
  o.seed = config.train.seed;
  if (train.size()) o.base_visible_bias = base_rate_bias(train.examples);
  return o;
}

double max_log_mass(const ModelParams& params, const Dataset& data, std::size_t m) {
  double best = kNegInf;
  for (const auto& v : data.examples)
    best = std::max(best, z_posterior(params, v).log_prob_at_most(m));
  return best;
}

std::size_t clamp_regroup(std::size_t m, const ModelParams& params) {
  return std::min(m, params.num_hidden());
}

}  // namespace

DatasetSplits load_run_data(const RunConfig& config) {
  if (config.num_data_sources() != 1)
    throw std::invalid_argument("set exactly one of data, train_images, synthetic");
  const std::uint64_t seed = config.effective_data_seed();
  DatasetSplits out;
  if (!config.data.empty()) {
    out = read_ibmp(config.data);
  } else if (!config.train_images.empty()) {
    const auto labels = [](const std::string& p) {
      return p.empty() ? std::optional<std::string>{} : std::optional<std::string>{p};
    };
    out.train = binarize_stochastic(load_mnist_idx(config.train_images, labels(config.train_labels)),
                                    seed, Split::kTrain, config.num_classes);
    if (!config.test_images.empty())
      out.test = binarize_stochastic(load_mnist_idx(config.test_images, labels(config.test_labels)),
                                     seed + 1, Split::kTest, config.num_classes);
    out.valid.num_visible = out.test.num_visible = out.train.num_visible;
    out.valid.num_classes = out.test.num_classes = out.train.num_classes;
    out.valid.split = Split::kValid;
    out.test.split = Split::kTest;
  } else if (config.synthetic == "bars_and_stripes") {
    out = split_generated(
        synth_bars_and_stripes(config.synth_side, config.synth_train_n + config.synth_test_n, seed),
        config.synth_train_n);
  } else {
    out = split_generated(synth_shifted_patterns(config.synth_classes, config.synth_dim,
                                                 config.synth_train_n + config.synth_test_n,
                                                 config.synth_noise, seed),
                          config.synth_train_n);
  }
  if (config.max_train_examples && out.train.size() > config.max_train_examples) {
    out.train.examples.resize(config.max_train_examples);
    if (out.train.has_labels()) out.train.labels.resize(config.max_train_examples);
  }
  if (config.valid_fraction > 0.0) {
    if (out.valid.size())
      throw std::invalid_argument("valid_fraction set but the data already has a validation split");
    DatasetSplits tv = split_train_valid(out.train, config.valid_fraction, seed);
    out.train = std::move(tv.train);
    out.valid = std::move(tv.valid);
  }
  for (const Dataset* p : {&out.train, &out.valid, &out.test}) p->validate();
  return out;
}

int cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  const DatasetSplits splits = load_run_data(config);
  const Dataset& train = splits.train;
  if (train.size() == 0) throw std::invalid_argument("training split is empty");
  const Dataset& eval_set = default_eval_split(splits);
  const std::size_t d = train.num_visible;
  const std::size_t c = train.has_labels() ? train.num_classes : 0;
  if (config.train.objective != Objective::kGenerative && c == 0)
    throw std::invalid_argument("objective '" + to_string(config.train.objective) +
                                "' needs labelled training data");

  const TrainConfig tc = resolve_defaults(config.train, train.size());
  Checkpoint ck;
  if (!config.resume.empty()) {
    ck = load_checkpoint(config.resume);
    if (ck.state.params.num_visible() != d || ck.state.params.num_classes() != c)
      throw std::invalid_argument("checkpoint dimensions do not match the training data");
    if (ck.state.params.penalty != tc.penalty())
      throw std::invalid_argument("penalty settings cannot change on resume");
    if (tc.use_pcd && ck.state.chains.size() == 0)
      throw std::invalid_argument("cannot switch to PCD on resume");
  } else {
    ck.state = init_training(d, c, tc);
  }
  ck.config = tc;

  fs::create_directories(config.output_dir);
  const fs::path out_dir(config.output_dir);
  const fs::path metrics_path = out_dir / "metrics.csv";
  const bool append = !config.resume.empty() && fs::exists(metrics_path);
  std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + metrics_path.string());
  if (!append) metrics << metrics_header();

  const AisOptions ais = ais_options(config, train);
  const bool exact = d <= config.exact_cap;
  auto log_partition = [&](const ModelParams& p) {
    return exact ? exact_log_partition(p, config.exact_cap) : ais_log_partition(p, ais).log_z;
  };

  while (ck.state.epoch < config.epochs) {
    EpochReport rep;
    try {
      rep = train_epoch(ck.state, train.examples, train.labels, tc);
    } catch (const NonFiniteGradient& e) {
      const fs::path dump = out_dir / "nonfinite_dump.irbm";
      save_checkpoint(dump.string(), ck);
      throw std::runtime_error(std::string(e.what()) + " at update " +
                               std::to_string(ck.state.optimizer.step) + "; state dumped to " +
                               dump.string());
    }
    const ModelParams& params = ck.state.params;
    const std::size_t epoch = static_cast<std::size_t>(ck.state.epoch);
    const std::size_t m = clamp_regroup(rep.regroup_length, params);
    MetricsRow row;
    row.epoch = epoch;
    row.num_hidden = params.num_hidden();
    row.regroup_length = rep.regroup_length;
    row.effective_hidden = effective_hidden_size(params, train.examples, tc.minibatch_size);
    const bool evaluate =
        config.eval_every > 0 && (epoch % config.eval_every == 0 || epoch == config.epochs);
    if (evaluate && eval_set.size()) {
      row.avg_loglik = permutation_averaged_loglik(params, eval_set.examples, m, config.eval_perms,
                                                   tc.seed, log_partition);
      if (eval_set.has_labels() && params.has_labels())
        row.error = classification_metrics(params, eval_set.examples, eval_set.labels, m,
                                           config.eval_perms, tc.seed)
                        .error;
      if (m > 0) row.max_log_mass = max_log_mass(params, eval_set, m);
    }
    metrics << format_metrics_row(row) << std::flush;

    save_checkpoint((out_dir / "checkpoint_latest.irbm").string(), ck);
    if (config.checkpoint_every && epoch % config.checkpoint_every == 0)
      save_checkpoint((out_dir / ("checkpoint_epoch_" + std::to_string(epoch) + ".irbm")).string(),
                      ck);
    log << "epoch " << epoch << " l_t=" << row.num_hidden << " M_t=" << row.regroup_length
        << " N_h=" << row.effective_hidden << " M_z=" << std::setprecision(4) << rep.mean_mode_z;
    if (row.avg_loglik) log << " loglik=" << std::setprecision(6) << *row.avg_loglik;
    if (row.error) log << " error=" << *row.error;
    log << "\n";
  }
  save_checkpoint((out_dir / "model.irbm").string(), ck);
  return kExitOk;
}

int cmd_eval(const RunConfig& config, const EvalArgs& args, std::ostream& out, std::ostream& log) {
  if (args.perms == 0) throw std::invalid_argument("--perms must be >= 1");
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  const ModelParams& params = ck.state.params;
  const DatasetSplits splits = load_run_data(config);
  const Dataset& data = pick_split(splits, args.split);
  if (data.size() == 0) throw std::invalid_argument("split '" + args.split + "' is empty");
  if (data.num_visible != params.num_visible())
    throw std::invalid_argument("data dimension does not match the model");
  const Dataset& train = splits.train.size() ? splits.train : data;
  const std::size_t m = clamp_regroup(ck.state.regroup.regroup_length, params);
  const std::uint64_t seed = config.train.seed;

  EvalReport report;
  report.num_hidden = params.num_hidden();
  report.num_examples = data.size();
  report.num_perms = args.perms;
  const bool exact = params.num_visible() <= config.exact_cap;
  report.partition_method = exact ? "exact" : "ais";
  const AisOptions ais = ais_options(config, train);
  auto log_partition = [&](const ModelParams& p) {
    return exact ? exact_log_partition(p, config.exact_cap) : ais_log_partition(p, ais).log_z;
  };
  if (exact) {
    report.log_partition = exact_log_partition(params, config.exact_cap);
  } else {
    const AisResult r = ais_log_partition(params, ais);
    report.log_partition = r.log_z;
    report.log_partition_std_err = r.std_err;
    if (r.num_nonfinite) log << "warning: " << r.num_nonfinite << " non-finite AIS weights\n";
  }
  report.avg_loglik_single_order = exact_loglik(params, data.examples, report.log_partition);
  report.avg_loglik = args.perms == 1 ? *report.avg_loglik_single_order
                                      : permutation_averaged_loglik(params, data.examples, m,
                                                                    args.perms, seed, log_partition);
  report.effective_hidden = effective_hidden_size(params, train.examples, ck.config.minibatch_size);
  const auto orderings = averaging_orderings(m, args.perms, seed);
  const auto modes = averaged_z_modes(params, data.examples, orderings);
  report.z_histogram = histogram(modes);

  if (args.converted_rbm) {
    const std::size_t n = std::max<std::size_t>(1, report.effective_hidden);
    std::optional<double> lz;
    if (!exact) {
      AisOptions clamped = ais;
      clamped.clamp_z = n;
      lz = ais_log_partition(params, clamped).log_z;
    }
    report.converted_rbm_loglik =
        converted_rbm_loglik(params, data.examples, n, lz, config.exact_cap);
  }
  if (params.has_labels() && data.has_labels()) {
    report.classification_error =
        classification_metrics(params, data.examples, data.labels, m, args.perms, seed).error;
    report.avg_condlik =
        permutation_averaged_condlik(params, data.examples, data.labels, m, args.perms, seed);
  }

  const std::string text = to_json(report).dump(2) + "\n";
  if (args.output.empty()) {
    out << text;
  } else {
    std::ofstream f(args.output);
    if (!f) throw std::runtime_error("cannot write '" + args.output + "'");
    f << text;
    log << "wrote " << args.output << "\n";
  }
  return kExitOk;
}

int cmd_sample(const SampleArgs& args, std::ostream& log) {
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  if (args.samples == 0) return kExitOk;
  const ModelParams& params = ck.state.params;
  const std::size_t d = params.num_visible();
  const std::size_t width = args.image_width ? args.image_width : default_image_width(d);
  if (d % width != 0) throw std::invalid_argument("image_width must divide D");
  const std::size_t height = d / width;

  std::vector<Vector> images;
  for (std::size_t s = 0; s < args.samples; ++s) {
    RngStream rng(args.seed, StreamPurpose::kSampling, 0, s);
    GibbsChainState chain{VisibleVector(d), 1, s};
    for (auto& b : chain.v) b = rng.bernoulli(0.5) ? 1 : 0;
    for (std::size_t t = 0; t < args.steps; ++t) chain = gibbs_step_generative(params, chain, rng);
    images.emplace_back(chain.v.begin(), chain.v.end());
  }
  fs::create_directories(args.output_dir);
  const std::size_t cols = static_cast<std::size_t>(std::ceil(std::sqrt(images.size())));
  const fs::path samples_path = fs::path(args.output_dir) / "samples.pgm";
  write_image_grid(samples_path.string(), images, width, height, cols);

  std::vector<Vector> filters;
  for (std::size_t i = 0; i < params.num_hidden(); ++i)
    filters.push_back(normalize_filter(params.weights.row(i)));
  const fs::path filters_path = fs::path(args.output_dir) / "filters.pgm";
  write_image_grid(filters_path.string(), filters, width, height,
                   static_cast<std::size_t>(std::ceil(std::sqrt(filters.size()))));
  log << "wrote " << samples_path.string() << " and " << filters_path.string() << "\n";
  return kExitOk;
}

namespace {

struct CheckLog {
  std::ostream& out;
  bool failed = false;

  void pass(const std::string& name, const std::string& detail) {
    out << "PASS " << name << ": " << detail << "\n";
  }
  void fail(const std::string& name, const std::string& detail) {
    out << "FAIL " << name << ": " << detail << "\n";
    failed = true;
  }
  void skip(const std::string& name, const std::string& detail) {
    out << "SKIP " << name << ": " << detail << "\n";
  }
  void expect(bool ok, const std::string& name, const std::string& detail) {
    ok ? pass(name, detail) : fail(name, detail);
  }
};

std::string num(double x) {
  std::ostringstream s;
  s << std::setprecision(6) << x;
  return s.str();
}

double max_row_norm(const Matrix& m) {
  double best = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double x : m.row(i)) s += x * x;
    best = std::max(best, std::sqrt(s));
  }
  return best;
}

std::vector<double*> param_pointers(ParamArrays& a) {
  std::vector<double*> out;
  for (double& x : a.weights.flat()) out.push_back(&x);
  for (double& x : a.label_weights.flat()) out.push_back(&x);
  for (double& x : a.hidden_bias) out.push_back(&x);
  for (double& x : a.visible_bias) out.push_back(&x);
  for (double& x : a.label_bias) out.push_back(&x);
  return out;
}

/// Largest relative error between an analytic gradient and central
/// differences over up to `limit` evenly spaced parameters.
double fd_check(const ModelParams& params, const ParamArrays& analytic,
                const std::function<double(const ModelParams&)>& loss, std::size_t limit) {
  ModelParams work = params;
  ParamArrays grad = analytic;
  const auto ptrs = param_pointers(work);
  const auto gptrs = param_pointers(grad);
  const std::size_t stride = std::max<std::size_t>(1, ptrs.size() / limit);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < ptrs.size(); k += stride) {
    const double saved = *ptrs[k];
    *ptrs[k] = saved + h;
    const double up = loss(work);
    *ptrs[k] = saved - h;
    const double down = loss(work);
    *ptrs[k] = saved;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(*gptrs[k]), 1e-3});
    worst = std::max(worst, std::abs(numeric - *gptrs[k]) / denom);
  }
  return worst;
}

std::vector<VisibleVector> probe_inputs(const ModelParams& params, const Dataset* data,
                                        std::size_t count, std::uint64_t seed) {
  std::vector<VisibleVector> out;
  if (data)
    for (std::size_t i = 0; i < std::min(count, data->size()); ++i)
      out.push_back(data->examples[i]);
  RngStream rng(seed, StreamPurpose::kCheck);
  while (out.size() < count) {
    VisibleVector v(params.num_visible());
    for (auto& b : v) b = rng.bernoulli(0.5) ? 1 : 0;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace

int cmd_check(const RunConfig& config, const CheckArgs& args, std::ostream& out) {
  CheckLog log{out};
  Checkpoint ck;
  try {
    ck = load_checkpoint(args.checkpoint);
  } catch (const std::exception& e) {
    log.fail("checkpoint", e.what());
    return kExitInvariant;
  }
  log.pass("checkpoint", "magic, version and checksum verified");
  const ModelParams& params = ck.state.params;
  const std::size_t d = params.num_visible();
  const std::size_t l = params.num_hidden();

  try {
    params.validate();
    log.pass("structure", "D=" + std::to_string(d) + " l=" + std::to_string(l) +
                              " C=" + std::to_string(params.num_classes()));
  } catch (const std::exception& e) {
    log.fail("structure", e.what());
  }

  const double wmax = max_row_norm(params.weights);
  const double umax = max_row_norm(params.label_weights);
  log.expect(wmax <= ck.config.w_bound && umax <= ck.config.u_bound, "max_norm",
             "max |W_i| = " + num(wmax) + ", max |U_i| = " + num(umax));

  DatasetSplits splits;
  const Dataset* data = nullptr;
  if (config.num_data_sources() == 1) {
    splits = load_run_data(config);
    data = &default_eval_split(splits);
    if (data->num_visible != d) throw std::invalid_argument("data dimension does not match the model");
  }
  const auto probes = probe_inputs(params, data, 20, args.seed);

  if (d <= config.exact_cap) {
    const double log_z = exact_log_partition(params, config.exact_cap);
    double total = 0.0;
    VisibleVector v(d);
    for (std::size_t code = 0; code < (std::size_t{1} << d); ++code) {
      for (std::size_t j = 0; j < d; ++j) v[j] = (code >> j) & 1u;
      total += std::exp(log_unnormalized_marginal(params, v) - log_z);
    }
    log.expect(std::abs(total - 1.0) < 1e-9, "normalization", "sum_v p(v) - 1 = " + num(total - 1.0));
  } else {
    log.skip("normalization", "D above exact_cap");
  }

  if (params.has_labels()) {
    double worst = 0.0;
    for (const auto& v : probes) {
      double s = 0.0;
      for (double p : cond_y_given_v(params, v)) s += p;
      worst = std::max(worst, std::abs(s - 1.0));
    }
    log.expect(worst < 1e-12, "label_normalization", "max |sum_y p(y|v) - 1| = " + num(worst));
  }

  {
    double worst = 0.0;
    for (const auto& v : probes) {
      const ZPosterior post = z_posterior(params, v);
      Vector terms;
      for (std::size_t z = 1; z <= l + 1; ++z) terms.push_back(-free_energy(params, v, z));
      const double step = params.penalty.log_tail_ratio();
      double last = terms.back();
      for (std::size_t k = 0; k < 10000; ++k) terms.push_back(last += step);
      worst = std::max(worst, std::abs(log_sum_exp(terms) - post.log_norm));
    }
    log.expect(worst < 1e-10, "tail", "closed-form vs truncated z sum, max diff " + num(worst));
  }

  if (d <= std::min<std::size_t>(config.exact_cap, 10) && l <= 16) {
    std::vector<VisibleView> views(probes.begin(), probes.end());
    views.resize(std::min<std::size_t>(views.size(), 5));
    const ParamArrays g = grad_generative_exact(params, views, config.exact_cap);
    const double err = fd_check(params, g,
                                [&](const ModelParams& p) {
                                  const double lz = exact_log_partition(p, config.exact_cap);
                                  double s = 0.0;
                                  for (const auto& v : views) s -= log_unnormalized_marginal(p, v) - lz;
                                  return s / static_cast<double>(views.size());
                                },
                                40);
    log.expect(err < 1e-5, "gradient", "max relative error vs central differences " + num(err));
  } else {
    log.skip("gradient", "model too large for enumeration");
  }

  if (data) {
    std::vector<VisibleVector> subset(data->examples.begin(),
                                      data->examples.begin() +
                                          static_cast<std::ptrdiff_t>(std::min<std::size_t>(500, data->size())));
    const std::size_t m = clamp_regroup(ck.state.regroup.regroup_length, params);
    const InvarianceReport r =
        check_order_invariance(params, subset, m, args.perms, args.seed, config.exact_cap);
    out << "INFO invariance: " << to_json(r).dump() << "\n";
    const bool violated = r.spread_computed && r.max_log_mass < -30.0 && r.loglik_spread >= 1e-9;
    log.expect(!violated, "order_invariance",
               "max ln p(z<=M|v) = " + num(r.max_log_mass) +
                   (r.spread_computed ? ", spread = " + num(r.loglik_spread) : ""));
  } else {
    log.skip("order_invariance", "no data given");
  }
  return log.failed ? kExitInvariant : kExitOk;
}

int cmd_convert_dataset(const RunConfig& config, const ConvertArgs& args, std::ostream& log) {
  if (args.output.empty()) throw std::invalid_argument("--output is required");
  const DatasetSplits splits = load_run_data(config);
  write_ibmp(args.output, splits);
  log << "wrote " << args.output << ": D=" << splits.train.num_visible
      << " C=" << splits.train.num_classes << " train=" << splits.train.size()
      << " valid=" << splits.valid.size() << " test=" << splits.test.size() << "\n";
  return kExitOk;
}

}  // namespace irbm::cli
