#include "irbm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "irbm/inference.hpp"
#include "irbm/training.hpp"

namespace irbm {

namespace {

void require_enumerable(std::size_t d, std::size_t cap) {
  if (d > cap)
    throw std::invalid_argument("exact enumeration needs D <= " + std::to_string(cap) + ", got " +
                                std::to_string(d));
}

/// Calls fn(v) for all 2^D binary vectors; bit j of the code is v[j].
template <typename Fn>
void for_each_visible(std::size_t d, Fn&& fn) {
  VisibleVector v(d);
  const std::size_t count = std::size_t{1} << d;
  for (std::size_t code = 0; code < count; ++code) {
    for (std::size_t j = 0; j < d; ++j) v[j] = (code >> j) & 1u;
    fn(static_cast<const VisibleVector&>(v));
  }
}

double log_mean_exp(std::span<const double> xs) {
  return log_sum_exp(xs) - std::log(static_cast<double>(xs.size()));
}

}  // namespace

double log_unnormalized_marginal(const ModelParams& params, VisibleView v) {
  return z_posterior(params, v).log_norm;
}

double exact_log_partition(const ModelParams& params, std::size_t max_visible) {
  require_enumerable(params.num_visible(), max_visible);
  Vector terms;
  terms.reserve(std::size_t{1} << params.num_visible());
  for_each_visible(params.num_visible(),
                   [&](const VisibleVector& v) { terms.push_back(log_unnormalized_marginal(params, v)); });
  return log_sum_exp(terms);
}

double exact_log_partition_labelled(const ModelParams& params, std::size_t max_visible) {
  require_enumerable(params.num_visible(), max_visible);
  if (!params.has_labels()) throw std::invalid_argument("model has no label units");
  Vector terms;
  for_each_visible(params.num_visible(), [&](const VisibleVector& v) {
    for (std::size_t y = 0; y < params.num_classes(); ++y)
      terms.push_back(z_posterior(params, v, y).log_norm);
  });
  return log_sum_exp(terms);
}

double exact_loglik(const ModelParams& params, std::span<const VisibleVector> examples,
                    std::optional<double> log_z, std::size_t max_visible) {
  if (examples.empty()) throw std::invalid_argument("no examples");
  const double lz = log_z ? *log_z : exact_log_partition(params, max_visible);
  double sum = 0.0;
  for (const auto& v : examples) sum += log_unnormalized_marginal(params, v) - lz;
  return sum / static_cast<double>(examples.size());
}

Vector ais_inverse_temperatures(const AisOptions& options) {
  const std::size_t k = options.num_temps;
  if (k < 2) throw std::invalid_argument("AIS needs at least 2 temperatures");
  Vector betas(k);
  betas[0] = 0.0;
  betas[k - 1] = 1.0;
  if (options.schedule == AisSchedule::kLinear) {
    for (std::size_t i = 1; i + 1 < k; ++i)
      betas[i] = static_cast<double>(i) / static_cast<double>(k - 1);
  } else {
    if (!(options.min_inverse_temp > 0.0 && options.min_inverse_temp < 1.0))
      throw std::invalid_argument("min_inverse_temp must be in (0, 1)");
    const double log_min = std::log(options.min_inverse_temp);
    for (std::size_t i = 1; i + 1 < k; ++i) {
      const double frac = static_cast<double>(k - 1 - i) / static_cast<double>(k - 2);
      betas[i] = std::exp(frac * log_min);
    }
  }
  return betas;
}

Vector base_rate_bias(std::span<const VisibleVector> examples, double clip) {
  if (examples.empty()) throw std::invalid_argument("no examples");
  const std::size_t d = examples.front().size();
  Vector mean(d, 0.0);
  for (const auto& v : examples)
    for (std::size_t j = 0; j < d; ++j) mean[j] += v[j];
  Vector bias(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double p = std::clamp(mean[j] / static_cast<double>(examples.size()), clip, 1.0 - clip);
    bias[j] = std::log(p) - std::log1p(-p);
  }
  return bias;
}

double base_log_partition(std::span<const double> visible_bias, const PenaltyConfig& penalty,
                          std::optional<std::size_t> clamp_z) {
  double out = 0.0;
  for (double b : visible_bias) out += softplus(b);
  const double log_r = penalty.log_tail_ratio();
  if (clamp_z) return out + static_cast<double>(*clamp_z) * log_r;
  return out + log_r - std::log(-std::expm1(log_r));
}

ModelParams ais_intermediate(const ModelParams& target, std::span<const double> base_bias,
                             double beta) {
  ModelParams p = target;
  for (double& w : p.weights.flat()) w *= beta;
  for (double& u : p.label_weights.flat()) u *= beta;
  for (double& c : p.hidden_bias) c *= beta;
  for (std::size_t j = 0; j < p.visible_bias.size(); ++j)
    p.visible_bias[j] = (1.0 - beta) * base_bias[j] + beta * target.visible_bias[j];
  return p;
}

AisResult ais_log_partition(const ModelParams& params, const AisOptions& options) {
  const std::size_t d = params.num_visible();
  if (options.num_chains == 0) throw std::invalid_argument("AIS needs at least one chain");
  const Vector betas = ais_inverse_temperatures(options);
  const Vector base_bias = options.base_visible_bias ? *options.base_visible_bias : Vector(d, 0.0);
  if (base_bias.size() != d) throw std::invalid_argument("base bias has wrong dimension");
  const std::optional<std::size_t> clamp = options.clamp_z;
  if (clamp && *clamp == 0) throw std::invalid_argument("clamped cutoff must be >= 1");

  auto log_weight = [&clamp](const ModelParams& m, VisibleView v) {
    return clamp ? -free_energy(m, v, *clamp) : log_unnormalized_marginal(m, v);
  };

  std::vector<RngStream> rngs;
  std::vector<VisibleVector> chains(options.num_chains, VisibleVector(d));
  rngs.reserve(options.num_chains);
  for (std::size_t c = 0; c < options.num_chains; ++c) {
    rngs.emplace_back(options.seed, StreamPurpose::kAis, 0, c);
    for (std::size_t j = 0; j < d; ++j) chains[c][j] = rngs[c].bernoulli(sigmoid(base_bias[j]));
  }

  AisResult result;
  result.base_log_z = base_log_partition(base_bias, params.penalty, clamp);
  result.log_weights.assign(options.num_chains, 0.0);
  ModelParams prev = ais_intermediate(params, base_bias, betas[0]);
  for (std::size_t k = 1; k < betas.size(); ++k) {
    ModelParams cur = ais_intermediate(params, base_bias, betas[k]);
    const bool last = k + 1 == betas.size();
    for (std::size_t c = 0; c < options.num_chains; ++c) {
      result.log_weights[c] += log_weight(cur, chains[c]) - log_weight(prev, chains[c]);
      if (last) continue;
      if (clamp) {
        const VisibleVector h = sample_hidden(cur, chains[c], *clamp, rngs[c]);
        chains[c] = sample_visible(cur, h, *clamp, rngs[c]);
      } else {
        chains[c] = gibbs_step_generative(cur, {chains[c], 1, c}, rngs[c]).v;
      }
    }
    prev = std::move(cur);
  }

  for (double w : result.log_weights)
    if (!std::isfinite(w)) ++result.num_nonfinite;
  if (result.num_nonfinite > 0) {
    result.log_z = std::nan("");
    result.std_err = std::nan("");
    return result;
  }
  result.log_z = result.base_log_z + log_mean_exp(result.log_weights);

  if (options.bootstrap_rounds > 1) {
    RngStream boot(options.seed, StreamPurpose::kBootstrap);
    Vector estimates(options.bootstrap_rounds);
    Vector sample(options.num_chains);
    for (auto& e : estimates) {
      for (auto& s : sample) s = result.log_weights[boot.below(options.num_chains)];
      e = log_mean_exp(sample);
    }
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= static_cast<double>(estimates.size());
    double var = 0.0;
    for (double e : estimates) var += (e - mean) * (e - mean);
    result.std_err = std::sqrt(var / static_cast<double>(estimates.size() - 1));
  }
  return result;
}

std::vector<Permutation> sample_orderings(std::size_t m, std::size_t count, std::uint64_t seed) {
  std::vector<Permutation> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    RngStream rng(seed, StreamPurpose::kEvalPermutation, k);
    out.push_back(sample_permutation(m, rng));
  }
  return out;
}

InvarianceReport check_order_invariance(const ModelParams& params,
                                        std::span<const VisibleVector> examples, std::size_t m,
                                        std::size_t num_perms, std::uint64_t seed,
                                        std::size_t max_visible) {
  if (m > params.num_hidden())
    throw std::invalid_argument("regroup length exceeds the number of hidden units");
  if (examples.empty()) throw std::invalid_argument("no examples");
  InvarianceReport report;
  report.regroup_length = m;
  report.num_perms = num_perms;
  report.spread_computed = params.num_visible() <= max_visible;

  const auto orderings = sample_orderings(m, num_perms, seed);
  Vector lo(examples.size(), std::numeric_limits<double>::infinity());
  Vector hi(examples.size(), -std::numeric_limits<double>::infinity());
  double mass_sum = 0.0;
  std::size_t mass_count = 0;
  for (const auto& perm : orderings) {
    const ModelParams p = apply_permutation(params, perm);
    const double log_z = report.spread_computed ? exact_log_partition(p, max_visible) : 0.0;
    for (std::size_t n = 0; n < examples.size(); ++n) {
      const ZPosterior post = z_posterior(p, examples[n]);
      const double mass = post.log_prob_at_most(m);
      report.max_log_mass = std::max(report.max_log_mass, mass);
      mass_sum += mass;
      ++mass_count;
      if (report.spread_computed) {
        const double ll = post.log_norm - log_z;
        lo[n] = std::min(lo[n], ll);
        hi[n] = std::max(hi[n], ll);
      }
    }
  }
  if (mass_count) report.mean_log_mass = mass_sum / static_cast<double>(mass_count);
  if (report.spread_computed && !orderings.empty())
    for (std::size_t n = 0; n < examples.size(); ++n)
      report.loglik_spread = std::max(report.loglik_spread, hi[n] - lo[n]);
  return report;
}

std::vector<Permutation> averaging_orderings(std::size_t m, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("need at least one ordering");
  std::vector<Permutation> out{Permutation::identity(m)};
  for (auto& p : sample_orderings(m, n - 1, seed)) out.push_back(std::move(p));
  return out;
}

double permutation_averaged_loglik(const ModelParams& params,
                                   std::span<const VisibleVector> examples, std::size_t m,
                                   std::size_t n, std::uint64_t seed,
                                   const LogPartitionFn& log_partition) {
  if (examples.empty()) throw std::invalid_argument("no examples");
  const auto orderings = averaging_orderings(m, n, seed);
  std::vector<Vector> per_example(examples.size());
  for (const auto& perm : orderings) {
    const ModelParams p = apply_permutation(params, perm);
    const double log_z = log_partition ? log_partition(p) : exact_log_partition(p);
    for (std::size_t i = 0; i < examples.size(); ++i)
      per_example[i].push_back(log_unnormalized_marginal(p, examples[i]) - log_z);
  }
  double sum = 0.0;
  for (const auto& lls : per_example) sum += log_mean_exp(lls);
  return sum / static_cast<double>(examples.size());
}

double permutation_averaged_condlik(const ModelParams& params,
                                    std::span<const VisibleVector> examples,
                                    std::span<const std::size_t> labels, std::size_t m,
                                    std::size_t n, std::uint64_t seed) {
  if (examples.empty() || labels.size() != examples.size())
    throw std::invalid_argument("need one label per example");
  const auto orderings = averaging_orderings(m, n, seed);
  Vector prob(examples.size(), 0.0);
  for (const auto& perm : orderings) {
    const ModelParams p = apply_permutation(params, perm);
    for (std::size_t i = 0; i < examples.size(); ++i)
      prob[i] += LabelConditional(p, examples[i]).class_probs().at(labels[i]);
  }
  double sum = 0.0;
  for (double pr : prob) sum += std::log(pr / static_cast<double>(orderings.size()));
  return sum / static_cast<double>(examples.size());
}

std::size_t effective_hidden_size(const ModelParams& params,
                                  std::span<const VisibleVector> examples,
                                  std::size_t minibatch_size) {
  if (examples.empty()) throw std::invalid_argument("no examples");
  if (minibatch_size == 0) throw std::invalid_argument("minibatch_size must be >= 1");
  double sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < examples.size(); start += minibatch_size) {
    const std::size_t end = std::min(examples.size(), start + minibatch_size);
    std::size_t best = 0;
    for (std::size_t k = start; k < end; ++k)
      best = std::max(best, z_posterior(params, examples[k]).mode());
    sum += static_cast<double>(best);
    ++batches;
  }
  return static_cast<std::size_t>(std::llround(sum / static_cast<double>(batches)));
}

double exact_converted_log_partition(const ModelParams& params, std::size_t n,
                                     std::size_t max_visible) {
  require_enumerable(params.num_visible(), max_visible);
  Vector terms;
  for_each_visible(params.num_visible(),
                   [&](const VisibleVector& v) { terms.push_back(-free_energy(params, v, n)); });
  return log_sum_exp(terms);
}

double converted_rbm_loglik(const ModelParams& params, std::span<const VisibleVector> examples,
                            std::size_t n, std::optional<double> log_partition,
                            std::size_t max_visible) {
  if (examples.empty()) throw std::invalid_argument("no examples");
  if (n == 0) throw std::invalid_argument("converted model needs at least one hidden unit");
  const double log_z =
      log_partition ? *log_partition : exact_converted_log_partition(params, n, max_visible);
  double sum = 0.0;
  for (const auto& v : examples) sum += -free_energy(params, v, n) - log_z;
  return sum / static_cast<double>(examples.size());
}

std::vector<std::size_t> averaged_z_modes(const ModelParams& params,
                                          std::span<const VisibleVector> examples,
                                          std::span<const Permutation> orderings) {
  std::vector<Vector> acc(examples.size(), Vector(params.num_hidden() + 1, 0.0));
  for (const auto& perm : orderings) {
    const ModelParams p = apply_permutation(params, perm);
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const ZPosterior post = z_posterior(p, examples[i]);
      for (std::size_t z = 1; z <= post.head_size(); ++z) acc[i][z - 1] += post.prob(z);
    }
  }
  std::vector<std::size_t> modes(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) modes[i] = argmax(acc[i]) + 1;
  return modes;
}

std::map<std::size_t, std::size_t> histogram(std::span<const std::size_t> values) {
  std::map<std::size_t, std::size_t> out;
  for (std::size_t v : values) ++out[v];
  return out;
}

ClassificationResult classification_metrics(const ModelParams& params,
                                            std::span<const VisibleVector> examples,
                                            std::span<const std::size_t> labels, std::size_t m,
                                            std::size_t n, std::uint64_t seed) {
  if (!params.has_labels()) throw std::invalid_argument("model has no label units");
  if (examples.empty() || labels.size() != examples.size())
    throw std::invalid_argument("need one label per example");
  const auto orderings = averaging_orderings(m, n, seed);
  std::vector<ModelParams> permuted;
  for (const auto& perm : orderings) permuted.push_back(apply_permutation(params, perm));

  ClassificationResult out;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    Vector probs(params.num_classes(), 0.0);
    for (const auto& p : permuted) {
      const Vector py = LabelConditional(p, examples[i]).class_probs();
      for (std::size_t y = 0; y < py.size(); ++y) probs[y] += py[y];
    }
    const std::size_t pred = argmax(probs);
    out.predictions.push_back(pred);
    if (pred != labels[i]) ++wrong;
  }
  out.error = static_cast<double>(wrong) / static_cast<double>(examples.size());
  out.z_modes = averaged_z_modes(params, examples, orderings);
  out.z_histogram = histogram(out.z_modes);
  return out;
}

}  // namespace irbm
