#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "irbm/inference.hpp"
#include "irbm/model.hpp"
#include "irbm/rng.hpp"

namespace irbm {

enum class Objective { kGenerative, kDiscriminative, kHybrid };
enum class LrMode { kDecay, kAdagrad };
enum class RegroupMode { kOff, kFixedFraction, kAdaptive };
/// kPaper weights the parts (1+alpha)*dis + alpha*gen; kLarochelle uses
/// dis + alpha*gen.
enum class HybridConvention { kPaper, kLarochelle };
/// How the discriminative part is estimated: closed form over z and y, or
/// a single Gibbs sample of (y, z) per example.
enum class DisGradient { kExact, kSampled };

struct TrainConfig {
  Objective objective = Objective::kGenerative;
  double alpha = 0.0;
  HybridConvention hybrid_convention = HybridConvention::kPaper;
  DisGradient dis_gradient = DisGradient::kExact;

  LrMode lr_mode = LrMode::kAdagrad;
  double global_lr = 0.05;
  double lr_t_half = 1000.0;  ///< decay mode: lr(t) = global_lr / (1 + t / t_half)
  double adagrad_eps = 1e-8;

  std::size_t cd_steps = 1;
  bool use_pcd = false;
  std::size_t pcd_chains = 0;  ///< 0: one chain per minibatch example

  double l1_weight = 1e-4;
  double l2_weight = 0.0;
  double w_bound = 10.0;
  double u_bound = 5.0;
  std::size_t minibatch_size = 100;

  RegroupMode regroup_mode = RegroupMode::kOff;
  double regroup_rho = 0.75;
  /// Adaptive mode switches phase after this many epochs; 0 switches once
  /// an epoch grows l_t by less than 1%.
  std::size_t adaptive_start_epoch = 0;

  double momentum_start = 0.5;
  double momentum_end = 0.9;
  std::size_t momentum_ramp_updates = 0;  ///< 0: ten epochs' worth of updates

  double beta = 1.01;
  PenaltyMode penalty_mode = PenaltyMode::kConstant;

  std::uint64_t seed = 1;

  PenaltyConfig penalty() const { return {beta, penalty_mode}; }

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
  /// Sets one field from its key=value text form. Unknown keys and
  /// unparsable values throw std::invalid_argument.
  void set(const std::string& key, const std::string& value);
  /// Every field in key=value text form; doubles round-trip exactly.
  std::vector<std::pair<std::string, std::string>> items() const;
  static bool is_key(const std::string& key);

  bool operator==(const TrainConfig&) const = default;
};

std::string to_string(Objective v);
std::string to_string(LrMode v);
std::string to_string(RegroupMode v);
std::string to_string(HybridConvention v);
std::string to_string(DisGradient v);

/// Fills in the data-dependent defaults (momentum ramp, PCD chain count).
TrainConfig resolve_defaults(TrainConfig config, std::size_t num_examples);

struct OptimizerState {
  ParamArrays velocity;
  ParamArrays grad_sq;  ///< ADAGRAD accumulators
  std::vector<std::uint64_t> unit_age;  ///< updates since each unit was added
  std::uint64_t step = 0;

  static OptimizerState for_model(const ModelParams& params);
  /// Reorders every per-unit buffer in lockstep with the parameters.
  void permute_units(const Permutation& perm);
  void append_zero_unit();

  bool operator==(const OptimizerState&) const = default;
};

struct RegroupState {
  std::size_t regroup_length = 0;  ///< M_t
  bool adaptive_phase = false;
  std::size_t adaptive_length = 0;
  std::vector<double> mz_history;  ///< M_z per completed epoch
  double mz_epoch_sum = 0.0;
  std::uint64_t mz_epoch_count = 0;

  bool operator==(const RegroupState&) const = default;
};

/// M_t for a model with l hidden units under the current schedule phase;
/// always below l.
std::size_t current_regroup_length(const TrainConfig& config, const RegroupState& state,
                                   std::size_t num_hidden);

struct EpochStats {
  std::size_t hidden_at_start = 1;
  std::size_t hidden_at_end = 1;
};

/// Closes an epoch: records M_z, switches phase when due, returns the new M_t.
std::size_t regroup_schedule_update(RegroupState& state, const TrainConfig& config,
                                    const EpochStats& stats);

/// Uniform over all M! orderings (Fisher-Yates).
Permutation sample_permutation(std::size_t m, RngStream& rng);

/// Visible vectors and cutoffs of one phase. The tag identifies the hidden
/// ordering the samples were drawn under.
struct PhaseSamples {
  std::vector<VisibleVector> visible;
  std::vector<std::size_t> z;
  std::uint64_t ordering_tag = 0;
};

struct LabelPhaseSamples {
  std::vector<std::size_t> y;
  std::vector<std::size_t> z;
  std::uint64_t ordering_tag = 0;
};

struct Minibatch {
  std::vector<VisibleView> visible;
  std::vector<std::size_t> labels;  ///< empty when unlabelled
};

/// Gradient of -ln p(v) estimated as mean dF(v_pos, z_pos) - mean dF(v_neg, z_neg)
/// with the unlabelled free energy. Throws if the ordering tags differ.
ParamArrays grad_generative(const ModelParams& params, const PhaseSamples& positive,
                            const PhaseSamples& negative);

/// Exact gradient of the mean -ln p(v) over `data`, enumerating all 2^D
/// visible vectors. Throws if D exceeds max_visible.
ParamArrays grad_generative_exact(const ModelParams& params, std::span<const VisibleView> data,
                                  std::size_t max_visible = 14);

/// Exact gradient of the mean -ln p(y|v); z is summed out in closed form.
ParamArrays grad_discriminative_exact(const ModelParams& params, const Minibatch& batch);

/// Sampled gradient of -ln p(y|v): dG(y_n, z_pos|v) - dG(y_neg, z_neg|v).
ParamArrays grad_discriminative_sampled(const ModelParams& params, const Minibatch& batch,
                                        const LabelPhaseSamples& positive,
                                        const LabelPhaseSamples& negative);

ParamArrays hybrid_gradient(const ParamArrays& dis, const ParamArrays& gen, double alpha,
                            HybridConvention convention = HybridConvention::kPaper);

/// Raised when a gradient block is not finite. The parameters are left as
/// they were before the step.
class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(std::string block)
      : std::runtime_error("non-finite gradient in block '" + block + "'"),
        block_(std::move(block)) {}
  const std::string& block() const { return block_; }

 private:
  std::string block_;
};

struct TrainingState {
  ModelParams params;
  OptimizerState optimizer;
  RegroupState regroup;
  PersistentChains chains;
  std::uint64_t epoch = 0;

  bool operator==(const TrainingState&) const = default;
};

/// Zero model with one hidden unit, matching optimizer state and chains.
TrainingState init_training(std::size_t num_visible, std::size_t num_classes,
                            const TrainConfig& config);

struct StepReport {
  std::size_t regroup_length = 0;
  std::size_t num_hidden = 1;
  bool grew = false;
  std::size_t max_z_pos = 0;
  std::size_t max_z_neg = 0;
};

/// One parameter update: permute, positive phase, negative phase, gradient
/// step, max-norm projection, growth.
StepReport update_step(TrainingState& state, const Minibatch& batch, const TrainConfig& config);

struct EpochReport {
  std::uint64_t epoch = 0;
  std::size_t num_hidden = 1;
  std::size_t regroup_length = 0;
  double mean_mode_z = 0.0;
  std::size_t updates = 0;
};

/// One pass over the data in a freshly shuffled order.
EpochReport train_epoch(TrainingState& state, std::span<const VisibleVector> examples,
                        std::span<const std::size_t> labels, const TrainConfig& config);

}  // namespace irbm
