#include "irbm/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

namespace irbm {

namespace {

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<Objective> kObjectiveNames[] = {{Objective::kGenerative, "generative"},
                                                   {Objective::kDiscriminative, "discriminative"},
                                                   {Objective::kHybrid, "hybrid"}};
constexpr EnumName<LrMode> kLrModeNames[] = {{LrMode::kDecay, "decay"},
                                             {LrMode::kAdagrad, "adagrad"}};
constexpr EnumName<RegroupMode> kRegroupNames[] = {{RegroupMode::kOff, "off"},
                                                   {RegroupMode::kFixedFraction, "fixed_fraction"},
                                                   {RegroupMode::kAdaptive, "adaptive"}};
constexpr EnumName<HybridConvention> kConventionNames[] = {
    {HybridConvention::kPaper, "paper"}, {HybridConvention::kLarochelle, "larochelle"}};
constexpr EnumName<DisGradient> kDisGradientNames[] = {{DisGradient::kExact, "exact"},
                                                       {DisGradient::kSampled, "sampled"}};

template <typename E, std::size_t N>
std::string enum_name(const EnumName<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <typename E, std::size_t N>
E enum_parse(const EnumName<E> (&table)[N], const std::string& key, const std::string& s) {
  for (const auto& e : table)
    if (s == e.name) return e.value;
  std::string allowed;
  for (const auto& e : table) allowed += std::string(allowed.empty() ? "" : ", ") + e.name;
  throw std::invalid_argument(key + ": '" + s + "' is not one of {" + allowed + "}");
}

double parse_double(const std::string& key, const std::string& s) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw std::invalid_argument(key + ": '" + s + "' is not a number");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw std::invalid_argument(key + ": '" + s + "' is not a non-negative integer");
  return out;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw std::invalid_argument(key + ": '" + s + "' is not a boolean");
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const TrainConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

template <typename M>
Field double_field(M TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_double(k, v);
          },
          [member](const TrainConfig& c) { return format_double(c.*member); }};
}

template <typename M>
Field integer_field(M TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<M>(parse_u64(k, v));
          },
          [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

template <typename E, std::size_t N>
Field enum_field(E TrainConfig::*member, const EnumName<E> (&table)[N]) {
  return {[member, &table](TrainConfig& c, const std::string& k, const std::string& v) {
            c.*member = enum_parse(table, k, v);
          },
          [member, &table](const TrainConfig& c) { return enum_name(table, c.*member); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"objective", enum_field(&TrainConfig::objective, kObjectiveNames)},
      {"alpha", double_field(&TrainConfig::alpha)},
      {"hybrid_convention", enum_field(&TrainConfig::hybrid_convention, kConventionNames)},
      {"dis_gradient", enum_field(&TrainConfig::dis_gradient, kDisGradientNames)},
      {"lr_mode", enum_field(&TrainConfig::lr_mode, kLrModeNames)},
      {"global_lr", double_field(&TrainConfig::global_lr)},
      {"lr_t_half", double_field(&TrainConfig::lr_t_half)},
      {"adagrad_eps", double_field(&TrainConfig::adagrad_eps)},
      {"cd_steps", integer_field(&TrainConfig::cd_steps)},
      {"use_pcd",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.use_pcd = parse_bool(k, v);
        },
        [](const TrainConfig& c) { return std::string(c.use_pcd ? "true" : "false"); }}},
      {"pcd_chains", integer_field(&TrainConfig::pcd_chains)},
      {"l1_weight", double_field(&TrainConfig::l1_weight)},
      {"l2_weight", double_field(&TrainConfig::l2_weight)},
      {"w_bound", double_field(&TrainConfig::w_bound)},
      {"u_bound", double_field(&TrainConfig::u_bound)},
      {"minibatch_size", integer_field(&TrainConfig::minibatch_size)},
      {"regroup_mode", enum_field(&TrainConfig::regroup_mode, kRegroupNames)},
      {"regroup_rho", double_field(&TrainConfig::regroup_rho)},
      {"adaptive_start_epoch", integer_field(&TrainConfig::adaptive_start_epoch)},
      {"momentum_start", double_field(&TrainConfig::momentum_start)},
      {"momentum_end", double_field(&TrainConfig::momentum_end)},
      {"momentum_ramp_updates", integer_field(&TrainConfig::momentum_ramp_updates)},
      {"beta", double_field(&TrainConfig::beta)},
      {"penalty_mode",
       {[](TrainConfig& c, const std::string&, const std::string& v) {
          c.penalty_mode = penalty_mode_from_string(v);
        },
        [](const TrainConfig& c) { return to_string(c.penalty_mode); }}},
      {"seed", integer_field(&TrainConfig::seed)},
  };
  return table;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("invalid training config: " + what);
}

}  // namespace

std::string to_string(Objective v) { return enum_name(kObjectiveNames, v); }
std::string to_string(LrMode v) { return enum_name(kLrModeNames, v); }
std::string to_string(RegroupMode v) { return enum_name(kRegroupNames, v); }
std::string to_string(HybridConvention v) { return enum_name(kConventionNames, v); }
std::string to_string(DisGradient v) { return enum_name(kDisGradientNames, v); }

void TrainConfig::validate() const {
  require(std::isfinite(alpha) && alpha >= 0.0, "alpha must be >= 0");
  require(std::isfinite(global_lr) && global_lr > 0.0, "global_lr must be > 0");
  require(std::isfinite(lr_t_half) && lr_t_half > 0.0, "lr_t_half must be > 0");
  require(std::isfinite(adagrad_eps) && adagrad_eps > 0.0, "adagrad_eps must be > 0");
  require(cd_steps >= 1, "cd_steps must be >= 1");
  require(std::isfinite(l1_weight) && l1_weight >= 0.0, "l1_weight must be >= 0");
  require(std::isfinite(l2_weight) && l2_weight >= 0.0, "l2_weight must be >= 0");
  require(std::isfinite(w_bound) && w_bound > 0.0, "w_bound must be > 0");
  require(std::isfinite(u_bound) && u_bound > 0.0, "u_bound must be > 0");
  require(minibatch_size >= 1, "minibatch_size must be >= 1");
  require(regroup_rho >= 0.0 && regroup_rho <= 0.9, "regroup_rho must be in [0, 0.9]");
  require(momentum_start >= 0.0 && momentum_start < 1.0, "momentum_start must be in [0, 1)");
  require(momentum_end >= 0.0 && momentum_end < 1.0, "momentum_end must be in [0, 1)");
  penalty().validate();
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw std::invalid_argument("unknown training key '" + key + "'");
  it->second.set(*this, key, value);
}

std::vector<std::pair<std::string, std::string>> TrainConfig::items() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [key, field] : fields()) out.emplace_back(key, field.get(*this));
  return out;
}

bool TrainConfig::is_key(const std::string& key) { return fields().count(key) > 0; }

TrainConfig resolve_defaults(TrainConfig config, std::size_t num_examples) {
  const std::size_t batches =
      std::max<std::size_t>(1, (num_examples + config.minibatch_size - 1) / config.minibatch_size);
  if (config.momentum_ramp_updates == 0) config.momentum_ramp_updates = 10 * batches;
  if (config.pcd_chains == 0) config.pcd_chains = config.minibatch_size;
  return config;
}

OptimizerState OptimizerState::for_model(const ModelParams& params) {
  OptimizerState s;
  s.velocity = params.zeros_like();
  s.grad_sq = params.zeros_like();
  s.unit_age.assign(params.num_hidden(), 0);
  return s;
}

void OptimizerState::permute_units(const Permutation& perm) {
  irbm::permute_units(velocity, perm);
  irbm::permute_units(grad_sq, perm);
  permute_prefix(unit_age, perm);
}

void OptimizerState::append_zero_unit() {
  velocity.append_zero_unit();
  grad_sq.append_zero_unit();
  unit_age.push_back(0);
}

std::size_t current_regroup_length(const TrainConfig& config, const RegroupState& state,
                                   std::size_t num_hidden) {
  if (num_hidden <= 1) return 0;
  std::size_t m = 0;
  switch (config.regroup_mode) {
    case RegroupMode::kOff:
      return 0;
    case RegroupMode::kFixedFraction:
      m = static_cast<std::size_t>(std::floor(config.regroup_rho * static_cast<double>(num_hidden)));
      break;
    case RegroupMode::kAdaptive:
      m = state.adaptive_phase ? state.adaptive_length
                               : static_cast<std::size_t>(std::floor(
                                     config.regroup_rho * static_cast<double>(num_hidden)));
      break;
  }
  return std::min(m, num_hidden - 1);
}

std::size_t regroup_schedule_update(RegroupState& state, const TrainConfig& config,
                                    const EpochStats& stats) {
  const double mz =
      state.mz_epoch_count ? state.mz_epoch_sum / static_cast<double>(state.mz_epoch_count) : 0.0;
  state.mz_history.push_back(mz);
  state.mz_epoch_sum = 0.0;
  state.mz_epoch_count = 0;

  if (config.regroup_mode == RegroupMode::kAdaptive && !state.adaptive_phase) {
    if (config.adaptive_start_epoch > 0) {
      state.adaptive_phase = state.mz_history.size() >= config.adaptive_start_epoch;
    } else {
      const double start = static_cast<double>(std::max<std::size_t>(1, stats.hidden_at_start));
      const double growth = (static_cast<double>(stats.hidden_at_end) - start) / start;
      state.adaptive_phase = growth < 0.01;
    }
  }
  if (state.adaptive_phase) {
    const std::size_t e = state.mz_history.size();
    const std::size_t from = static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(e)));
    double sum = 0.0;
    for (std::size_t k = from; k < e; ++k) sum += state.mz_history[k];
    const double window_mean = sum / static_cast<double>(e - from);
    state.adaptive_length = static_cast<std::size_t>(std::max(0.0, std::floor(window_mean - 10.0)));
  }
  state.regroup_length = current_regroup_length(config, state, stats.hidden_at_end);
  return state.regroup_length;
}

Permutation sample_permutation(std::size_t m, RngStream& rng) {
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = m; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return Permutation(std::move(order));
}

namespace {

/// out += weight * dF/dtheta at (v, y) where unit i is included with
/// probability mass[i] (an indicator for sampled z, P(z >= i+1) for
/// expectations). Only units below l carry gradients; the tail is inert.
void add_free_energy_grad(const ModelParams& params, VisibleView v, Label label,
                          std::span<const double> mass, double weight, FreeEnergyForm form,
                          ParamArrays& out) {
  const Vector a = hidden_preactivations(params, v, label);
  const std::size_t l = params.num_hidden();
  const std::size_t d = params.num_visible();
  for (std::size_t i = 0; i < l; ++i) {
    if (mass[i] == 0.0) continue;
    const double s = sigmoid(a[i]);
    const double g = weight * mass[i] * s;
    auto row = out.weights.row(i);
    for (std::size_t j = 0; j < d; ++j)
      if (v[j]) row[j] -= g;
    out.hidden_bias[i] -=
        weight * mass[i] * (s - params.penalty.unit_penalty_derivative(params.hidden_bias[i]));
    if (label) out.label_weights(i, *label) -= g;
  }
  if (form == FreeEnergyForm::kJoint)
    for (std::size_t j = 0; j < d; ++j)
      if (v[j]) out.visible_bias[j] -= weight;
  if (label) out.label_bias[*label] -= weight;
}

Vector indicator_mass(std::size_t z, std::size_t num_hidden) {
  Vector m(num_hidden, 0.0);
  for (std::size_t i = 0; i < std::min(z, num_hidden); ++i) m[i] = 1.0;
  return m;
}

void axpy(double a, const ParamArrays& x, ParamArrays& y) {
  auto run = [a](std::span<const double> xs, std::span<double> ys) {
    for (std::size_t k = 0; k < xs.size(); ++k) ys[k] += a * xs[k];
  };
  run(x.weights.flat(), y.weights.flat());
  run(x.label_weights.flat(), y.label_weights.flat());
  run(x.hidden_bias, y.hidden_bias);
  run(x.visible_bias, y.visible_bias);
  run(x.label_bias, y.label_bias);
}

void require_labels(const ModelParams& params, const Minibatch& batch) {
  if (!params.has_labels()) throw std::invalid_argument("model has no label units");
  if (batch.labels.size() != batch.visible.size())
    throw std::invalid_argument("discriminative gradient needs one label per example");
  for (std::size_t y : batch.labels)
    if (y >= params.num_classes()) throw std::invalid_argument("label out of range");
}

}  // namespace

ParamArrays grad_generative(const ModelParams& params, const PhaseSamples& positive,
                            const PhaseSamples& negative) {
  if (positive.ordering_tag != negative.ordering_tag)
    throw std::invalid_argument("positive and negative statistics come from different orderings");
  if (positive.visible.size() != positive.z.size() || negative.visible.size() != negative.z.size())
    throw std::invalid_argument("phase samples need one z per visible vector");
  if (positive.visible.empty() || negative.visible.empty())
    throw std::invalid_argument("empty phase samples");
  ParamArrays g = params.zeros_like();
  const std::size_t l = params.num_hidden();
  const double wp = 1.0 / static_cast<double>(positive.visible.size());
  const double wn = -1.0 / static_cast<double>(negative.visible.size());
  for (std::size_t n = 0; n < positive.visible.size(); ++n)
    add_free_energy_grad(params, positive.visible[n], {}, indicator_mass(positive.z[n], l), wp,
                         FreeEnergyForm::kJoint, g);
  for (std::size_t n = 0; n < negative.visible.size(); ++n)
    add_free_energy_grad(params, negative.visible[n], {}, indicator_mass(negative.z[n], l), wn,
                         FreeEnergyForm::kJoint, g);
  return g;
}

ParamArrays grad_generative_exact(const ModelParams& params, std::span<const VisibleView> data,
                                  std::size_t max_visible) {
  const std::size_t d = params.num_visible();
  if (d > max_visible)
    throw std::invalid_argument("exact gradient needs D <= " + std::to_string(max_visible));
  if (data.empty()) throw std::invalid_argument("empty data");
  ParamArrays g = params.zeros_like();
  const double wd = 1.0 / static_cast<double>(data.size());
  for (const auto& v : data) {
    const Vector surv = z_posterior(params, v).survival();
    add_free_energy_grad(params, v, {}, surv, wd, FreeEnergyForm::kJoint, g);
  }
  const std::size_t count = std::size_t{1} << d;
  std::vector<VisibleVector> all(count, VisibleVector(d));
  Vector log_weights(count);
  std::vector<ZPosterior> posts(count);
  for (std::size_t code = 0; code < count; ++code) {
    for (std::size_t j = 0; j < d; ++j) all[code][j] = (code >> j) & 1u;
    posts[code] = z_posterior(params, all[code]);
    log_weights[code] = posts[code].log_norm;
  }
  const double log_z = log_sum_exp(log_weights);
  for (std::size_t code = 0; code < count; ++code) {
    const double p = std::exp(log_weights[code] - log_z);
    add_free_energy_grad(params, all[code], {}, posts[code].survival(), -p,
                         FreeEnergyForm::kJoint, g);
  }
  return g;
}

ParamArrays grad_discriminative_exact(const ModelParams& params, const Minibatch& batch) {
  require_labels(params, batch);
  if (batch.visible.empty()) throw std::invalid_argument("empty minibatch");
  ParamArrays g = params.zeros_like();
  const double w = 1.0 / static_cast<double>(batch.visible.size());
  for (std::size_t n = 0; n < batch.visible.size(); ++n) {
    const LabelConditional cond(params, batch.visible[n]);
    const Vector p = cond.class_probs();
    for (std::size_t y = 0; y < p.size(); ++y) {
      const double coef = (y == batch.labels[n] ? 1.0 : 0.0) - p[y];
      if (coef == 0.0) continue;
      const Vector surv = cond.z_given_label(y).survival();
      add_free_energy_grad(params, batch.visible[n], y, surv, w * coef,
                           FreeEnergyForm::kConditional, g);
    }
  }
  return g;
}

ParamArrays grad_discriminative_sampled(const ModelParams& params, const Minibatch& batch,
                                        const LabelPhaseSamples& positive,
                                        const LabelPhaseSamples& negative) {
  require_labels(params, batch);
  const std::size_t n_ex = batch.visible.size();
  if (n_ex == 0) throw std::invalid_argument("empty minibatch");
  if (positive.ordering_tag != negative.ordering_tag)
    throw std::invalid_argument("positive and negative statistics come from different orderings");
  if (positive.z.size() != n_ex || negative.z.size() != n_ex || negative.y.size() != n_ex)
    throw std::invalid_argument("label chains must match the minibatch");
  ParamArrays g = params.zeros_like();
  const std::size_t l = params.num_hidden();
  const double w = 1.0 / static_cast<double>(n_ex);
  for (std::size_t n = 0; n < n_ex; ++n) {
    add_free_energy_grad(params, batch.visible[n], batch.labels[n],
                         indicator_mass(positive.z[n], l), w, FreeEnergyForm::kConditional, g);
    add_free_energy_grad(params, batch.visible[n], negative.y[n],
                         indicator_mass(negative.z[n], l), -w, FreeEnergyForm::kConditional, g);
  }
  return g;
}

ParamArrays hybrid_gradient(const ParamArrays& dis, const ParamArrays& gen, double alpha,
                            HybridConvention convention) {
  ParamArrays out = dis.zeros_like();
  axpy(convention == HybridConvention::kPaper ? 1.0 + alpha : 1.0, dis, out);
  axpy(alpha, gen, out);
  return out;
}

TrainingState init_training(std::size_t num_visible, std::size_t num_classes,
                            const TrainConfig& config) {
  config.validate();
  TrainingState s;
  s.params = ModelParams::zeros(num_visible, num_classes, config.penalty(), 1);
  s.optimizer = OptimizerState::for_model(s.params);
  if (config.use_pcd) {
    const std::size_t chains = config.pcd_chains ? config.pcd_chains : config.minibatch_size;
    s.chains = PersistentChains(chains, num_visible, config.seed);
  }
  return s;
}

namespace {

double momentum_at(const TrainConfig& config, std::uint64_t age) {
  const double ramp = static_cast<double>(std::max<std::size_t>(1, config.momentum_ramp_updates));
  const double frac = std::min(1.0, static_cast<double>(age) / ramp);
  return config.momentum_start + (config.momentum_end - config.momentum_start) * frac;
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

struct StepRule {
  const TrainConfig& config;
  double lr;

  void apply(double grad, double& param, double& velocity, double& acc, double momentum) const {
    double delta = lr * grad;
    if (config.lr_mode == LrMode::kAdagrad) {
      acc += grad * grad;
      delta = lr * grad / (std::sqrt(acc) + config.adagrad_eps);
    }
    velocity = momentum * velocity - delta;
    param += velocity;
  }
};

void add_regularization(const TrainConfig& config, const Matrix& params, Matrix& grad) {
  if (config.l1_weight == 0.0 && config.l2_weight == 0.0) return;
  auto p = params.flat();
  auto g = grad.flat();
  for (std::size_t k = 0; k < p.size(); ++k)
    g[k] += config.l2_weight * p[k] + config.l1_weight * sign(p[k]);
}

void project_rows(Matrix& m, double bound) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    auto norm = [&row] {
      double s = 0.0;
      for (double x : row) s += x * x;
      return std::sqrt(s);
    };
    double n = norm();
    if (n <= bound) continue;
    const double scale = bound / n;
    for (double& x : row) x *= scale;
    // Rounding can leave the norm a few ulps above the radius.
    const double shrink = std::nextafter(1.0, 0.0);
    while ((n = norm()) > bound)
      for (double& x : row) x *= shrink;
  }
}

}  // namespace

StepReport update_step(TrainingState& state, const Minibatch& batch, const TrainConfig& config) {
  ModelParams& params = state.params;
  OptimizerState& opt = state.optimizer;
  const std::size_t n_ex = batch.visible.size();
  if (n_ex == 0) throw std::invalid_argument("empty minibatch");
  const bool use_gen = config.objective != Objective::kDiscriminative;
  const bool use_dis = config.objective != Objective::kGenerative;
  if (use_dis) require_labels(params, batch);

  const std::uint64_t t = opt.step;
  const std::size_t l_prev = params.num_hidden();
  StepReport report;

  // (1) Regroup the leading units.
  const std::size_t m = current_regroup_length(config, state.regroup, l_prev);
  state.regroup.regroup_length = m;
  report.regroup_length = m;
  Permutation perm = Permutation::identity(0);
  if (config.regroup_mode != RegroupMode::kOff && m > 1) {
    RngStream rng(config.seed, StreamPurpose::kPermutation, t);
    perm = sample_permutation(m, rng);
    permute_units(params, perm);
    opt.permute_units(perm);
  }

  // (2) Positive phase.
  PhaseSamples gen_pos, gen_neg;
  LabelPhaseSamples dis_pos, dis_neg;
  gen_pos.ordering_tag = gen_neg.ordering_tag = dis_pos.ordering_tag = dis_neg.ordering_tag = t;
  std::vector<LabelConditional> conds;
  for (std::size_t n = 0; n < n_ex; ++n) {
    RngStream rng(config.seed, StreamPurpose::kPositive, t, n);
    const ZPosterior post = z_posterior(params, batch.visible[n]);
    state.regroup.mz_epoch_sum += static_cast<double>(post.mode());
    state.regroup.mz_epoch_count += 1;
    if (use_gen) {
      gen_pos.visible.emplace_back(batch.visible[n].begin(), batch.visible[n].end());
      gen_pos.z.push_back(post.sample(rng));
    }
    if (use_dis) {
      conds.emplace_back(params, batch.visible[n]);
      dis_pos.y.push_back(batch.labels[n]);
      dis_pos.z.push_back(conds.back().z_given_label(batch.labels[n]).sample(rng));
    }
  }

  // (3) Negative phase.
  if (use_gen) {
    std::vector<NegativeSample> neg =
        config.use_pcd ? state.chains.run(params, config.cd_steps, config.seed, t)
                       : run_cd(params, batch.visible, gen_pos.z, config.cd_steps, config.seed, t);
    for (auto& s : neg) {
      gen_neg.visible.push_back(std::move(s.v));
      gen_neg.z.push_back(s.z);
    }
  }
  if (use_dis) {
    for (std::size_t n = 0; n < n_ex; ++n) {
      RngStream rng(config.seed, StreamPurpose::kLabelNegative, t, n);
      const LabelChainState s =
          run_label_cd(conds[n], {batch.labels[n], dis_pos.z[n]}, config.cd_steps, rng);
      dis_neg.y.push_back(s.y);
      dis_neg.z.push_back(s.z);
    }
  }

  // (4) Gradient step.
  ParamArrays grad;
  ParamArrays gen_grad, dis_grad;
  if (use_gen) gen_grad = grad_generative(params, gen_pos, gen_neg);
  if (use_dis)
    dis_grad = config.dis_gradient == DisGradient::kExact
                   ? grad_discriminative_exact(params, batch)
                   : grad_discriminative_sampled(params, batch, dis_pos, dis_neg);
  switch (config.objective) {
    case Objective::kGenerative:
      grad = std::move(gen_grad);
      break;
    case Objective::kDiscriminative:
      grad = std::move(dis_grad);
      break;
    case Objective::kHybrid:
      grad = hybrid_gradient(dis_grad, gen_grad, config.alpha, config.hybrid_convention);
      break;
  }
  if (const std::string bad = grad.first_nonfinite_block(); !bad.empty()) {
    if (perm.size() > 0) {
      const Permutation inv = perm.inverse();
      permute_units(params, inv);
      opt.permute_units(inv);
    }
    throw NonFiniteGradient(bad);
  }
  add_regularization(config, params.weights, grad.weights);
  add_regularization(config, params.label_weights, grad.label_weights);

  const double lr = config.lr_mode == LrMode::kDecay
                        ? config.global_lr / (1.0 + static_cast<double>(t) / config.lr_t_half)
                        : config.global_lr;
  const StepRule rule{config, lr};
  const std::size_t d = params.num_visible();
  const std::size_t c = params.num_classes();
  for (std::size_t i = 0; i < l_prev; ++i) {
    const double mu = momentum_at(config, opt.unit_age[i]);
    for (std::size_t j = 0; j < d; ++j)
      rule.apply(grad.weights(i, j), params.weights(i, j), opt.velocity.weights(i, j),
                 opt.grad_sq.weights(i, j), mu);
    for (std::size_t y = 0; y < c; ++y)
      rule.apply(grad.label_weights(i, y), params.label_weights(i, y),
                 opt.velocity.label_weights(i, y), opt.grad_sq.label_weights(i, y), mu);
    rule.apply(grad.hidden_bias[i], params.hidden_bias[i], opt.velocity.hidden_bias[i],
               opt.grad_sq.hidden_bias[i], mu);
  }
  const double mu_global = momentum_at(config, t);
  for (std::size_t j = 0; j < d; ++j)
    rule.apply(grad.visible_bias[j], params.visible_bias[j], opt.velocity.visible_bias[j],
               opt.grad_sq.visible_bias[j], mu_global);
  for (std::size_t y = 0; y < c; ++y)
    rule.apply(grad.label_bias[y], params.label_bias[y], opt.velocity.label_bias[y],
               opt.grad_sq.label_bias[y], mu_global);

  // (5) Max-norm projection.
  project_rows(params.weights, config.w_bound);
  project_rows(params.label_weights, config.u_bound);

  // (6) Growth: any active phase pair that reached past l_{t-1} adds a unit.
  auto max_of = [](const std::vector<std::size_t>& zs) {
    return zs.empty() ? std::size_t{0} : *std::max_element(zs.begin(), zs.end());
  };
  bool grow = false;
  if (use_gen) {
    report.max_z_pos = max_of(gen_pos.z);
    report.max_z_neg = max_of(gen_neg.z);
    grow = grow || (max_of(gen_pos.z) > l_prev && max_of(gen_neg.z) > l_prev);
  }
  if (use_dis) {
    report.max_z_pos = std::max(report.max_z_pos, max_of(dis_pos.z));
    report.max_z_neg = std::max(report.max_z_neg, max_of(dis_neg.z));
    grow = grow || (max_of(dis_pos.z) > l_prev && max_of(dis_neg.z) > l_prev);
  }
  for (auto& age : opt.unit_age) ++age;
  if (grow) {
    params.append_zero_unit();
    opt.append_zero_unit();
  }
  opt.step = t + 1;
  report.grew = grow;
  report.num_hidden = params.num_hidden();
  return report;
}

EpochReport train_epoch(TrainingState& state, std::span<const VisibleVector> examples,
                        std::span<const std::size_t> labels, const TrainConfig& config) {
  if (examples.empty()) throw std::invalid_argument("no training examples");
  if (!labels.empty() && labels.size() != examples.size())
    throw std::invalid_argument("label count does not match example count");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream shuffle(config.seed, StreamPurpose::kShuffle, state.epoch);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.below(i))]);

  const std::size_t hidden_at_start = state.params.num_hidden();
  EpochReport report;
  report.epoch = state.epoch;
  const double mz_sum_before = state.regroup.mz_epoch_sum;
  const std::uint64_t mz_count_before = state.regroup.mz_epoch_count;
  for (std::size_t start = 0; start < order.size(); start += config.minibatch_size) {
    const std::size_t end = std::min(order.size(), start + config.minibatch_size);
    Minibatch batch;
    for (std::size_t k = start; k < end; ++k) {
      batch.visible.emplace_back(examples[order[k]]);
      if (!labels.empty()) batch.labels.push_back(labels[order[k]]);
    }
    update_step(state, batch, config);
    ++report.updates;
  }
  const std::uint64_t count = state.regroup.mz_epoch_count - mz_count_before;
  report.mean_mode_z =
      count ? (state.regroup.mz_epoch_sum - mz_sum_before) / static_cast<double>(count) : 0.0;
  report.regroup_length =
      regroup_schedule_update(state.regroup, config, {hidden_at_start, state.params.num_hidden()});
  report.num_hidden = state.params.num_hidden();
  ++state.epoch;
  return report;
}

}  // namespace irbm
