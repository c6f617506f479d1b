#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irbm/model.hpp"

namespace irbm {

inline constexpr std::size_t kDefaultExactCap = 14;

/// ln sum_z exp(-F(v,z)), the unnormalized log marginal of v.
double log_unnormalized_marginal(const ModelParams& params, VisibleView v);

/// log Z of the unlabelled model by enumerating all 2^D visible vectors.
/// Throws std::invalid_argument if D > max_visible.
double exact_log_partition(const ModelParams& params, std::size_t max_visible = kDefaultExactCap);

/// log Z of the joint model over (v, y, z).
double exact_log_partition_labelled(const ModelParams& params,
                                    std::size_t max_visible = kDefaultExactCap);

/// Mean of ln p(v) over the examples. log_z defaults to the exact value.
double exact_loglik(const ModelParams& params, std::span<const VisibleVector> examples,
                    std::optional<double> log_z = {}, std::size_t max_visible = kDefaultExactCap);

enum class AisSchedule { kGeometric, kLinear };

struct AisOptions {
  std::size_t num_temps = 1000;
  std::size_t num_chains = 100;
  AisSchedule schedule = AisSchedule::kGeometric;
  /// Smallest nonzero inverse temperature of the geometric schedule.
  double min_inverse_temp = 1e-3;
  std::size_t bootstrap_rounds = 200;
  std::uint64_t seed = 1;
  /// Visible biases of the base model; zeros when absent.
  std::optional<Vector> base_visible_bias;
  /// Anneal the fixed-cutoff model p(v | z = n) instead of the iRBM.
  std::optional<std::size_t> clamp_z;
};

struct AisResult {
  double log_z = 0.0;
  double std_err = 0.0;
  double base_log_z = 0.0;
  Vector log_weights;
  std::size_t num_nonfinite = 0;  ///< when nonzero, log_z is NaN
};

/// Inverse temperatures 0 = b_0 < ... < b_{K-1} = 1.
Vector ais_inverse_temperatures(const AisOptions& options);

/// Logit of the clipped per-pixel data mean.
Vector base_rate_bias(std::span<const VisibleVector> examples, double clip = 1e-3);

/// Closed-form log Z of the zero-weight model with visible bias b.
double base_log_partition(std::span<const double> visible_bias, const PenaltyConfig& penalty,
                          std::optional<std::size_t> clamp_z = {});

/// Model at inverse temperature beta on the path from the base model (zero
/// weights, visible bias b_A) to the target: visible bias (1-beta) b_A +
/// beta b, and W, c scaled by beta.
ModelParams ais_intermediate(const ModelParams& target, std::span<const double> base_bias,
                             double beta);

/// Annealed importance sampling estimate of log Z (generative marginal).
AisResult ais_log_partition(const ModelParams& params, const AisOptions& options);

struct InvarianceReport {
  std::size_t regroup_length = 0;
  std::size_t num_perms = 0;
  double max_log_mass = kNegInf;   ///< max of ln p(z <= M | v, o) over examples and orderings
  double mean_log_mass = kNegInf;
  double loglik_spread = 0.0;      ///< max over examples of the per-ordering range of ln p(v|o)
  bool spread_computed = false;    ///< false when D exceeds the enumeration cap
};

/// Random orderings of the first m units drawn from stream (seed, eval-perm, k).
std::vector<Permutation> sample_orderings(std::size_t m, std::size_t count, std::uint64_t seed);

InvarianceReport check_order_invariance(const ModelParams& params,
                                        std::span<const VisibleVector> examples, std::size_t m,
                                        std::size_t num_perms, std::uint64_t seed,
                                        std::size_t max_visible = kDefaultExactCap);

/// Orderings used for averaged likelihoods: the stored ordering first, then
/// n-1 random orderings of the first m units.
std::vector<Permutation> averaging_orderings(std::size_t m, std::size_t n, std::uint64_t seed);

using LogPartitionFn = std::function<double(const ModelParams&)>;

/// Mean over examples of ln((1/N) sum_k p(v | o_k)), averaging in
/// probability space. log_partition defaults to exact enumeration.
double permutation_averaged_loglik(const ModelParams& params,
                                   std::span<const VisibleVector> examples, std::size_t m,
                                   std::size_t n, std::uint64_t seed,
                                   const LogPartitionFn& log_partition = {});

/// Mean over examples of ln((1/N) sum_k p(y_n | v_n; o_k)).
double permutation_averaged_condlik(const ModelParams& params,
                                    std::span<const VisibleVector> examples,
                                    std::span<const std::size_t> labels, std::size_t m,
                                    std::size_t n, std::uint64_t seed);

/// Mean over consecutive minibatches of the batch-max argmax_z p(z|v), rounded.
std::size_t effective_hidden_size(const ModelParams& params,
                                  std::span<const VisibleVector> examples,
                                  std::size_t minibatch_size);

/// log sum_v exp(-F(v, n)) by enumeration.
double exact_converted_log_partition(const ModelParams& params, std::size_t n,
                                     std::size_t max_visible = kDefaultExactCap);

/// Mean of ln p(v | z = n): the model read as a classic RBM with n hidden
/// units. log_partition defaults to exact enumeration.
double converted_rbm_loglik(const ModelParams& params, std::span<const VisibleVector> examples,
                            std::size_t n, std::optional<double> log_partition = {},
                            std::size_t max_visible = kDefaultExactCap);

struct ClassificationResult {
  double error = 0.0;
  std::vector<std::size_t> predictions;
  std::vector<std::size_t> z_modes;
  std::map<std::size_t, std::size_t> z_histogram;
};

/// argmax_z of the ordering-averaged p(z|v) for every example; ties to the
/// smaller z.
std::vector<std::size_t> averaged_z_modes(const ModelParams& params,
                                          std::span<const VisibleVector> examples,
                                          std::span<const Permutation> orderings);

std::map<std::size_t, std::size_t> histogram(std::span<const std::size_t> values);

/// Predicts argmax_y of the ordering-averaged p(y|v) (ties to the lower class).
ClassificationResult classification_metrics(const ModelParams& params,
                                            std::span<const VisibleVector> examples,
                                            std::span<const std::size_t> labels, std::size_t m,
                                            std::size_t n, std::uint64_t seed);

struct EvalReport {
  std::optional<double> avg_loglik;
  std::optional<double> avg_loglik_single_order;
  std::optional<double> converted_rbm_loglik;
  std::optional<double> log_partition;
  std::optional<double> log_partition_std_err;
  std::string partition_method;  ///< "exact" or "ais"
  std::optional<double> classification_error;
  std::optional<double> avg_condlik;
  std::size_t effective_hidden = 0;
  std::size_t num_hidden = 0;
  std::size_t num_examples = 0;
  std::size_t num_perms = 1;
  std::map<std::size_t, std::size_t> z_histogram;
};

}  // namespace irbm
