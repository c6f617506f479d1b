#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irbm/numeric.hpp"
#include "irbm/rng.hpp"

namespace irbm {

/// Binary visible configuration; every entry is 0 or 1.
using VisibleVector = std::vector<std::uint8_t>;
using VisibleView = std::span<const std::uint8_t>;

/// Class index in [0, C). Absent for purely generative quantities.
using Label = std::optional<std::size_t>;

enum class PenaltyMode { kConstant, kDynamic };

std::string to_string(PenaltyMode mode);
PenaltyMode penalty_mode_from_string(const std::string& s);

/// Per-unit energy penalty. In constant mode every unit pays beta*ln2; in
/// dynamic mode unit i pays beta*softplus(hidden_bias_i). A unit with zero
/// parameters pays beta*ln2 under both modes, which fixes the ratio of the
/// geometric tail over unmaterialized units.
struct PenaltyConfig {
  double beta = 1.01;
  PenaltyMode mode = PenaltyMode::kConstant;

  /// Throws std::invalid_argument unless beta > 1 (divergent tail otherwise).
  void validate() const;

  double unit_penalty(double hidden_bias) const {
    return mode == PenaltyMode::kConstant ? beta * kLn2 : beta * softplus(hidden_bias);
  }
  double unit_penalty_derivative(double hidden_bias) const {
    return mode == PenaltyMode::kConstant ? 0.0 : beta * sigmoid(hidden_bias);
  }
  double zero_unit_penalty() const { return beta * kLn2; }
  /// log of r = exp(ln2 - beta*ln2), the per-unit ratio of the z tail.
  double log_tail_ratio() const { return kLn2 - zero_unit_penalty(); }

  bool operator==(const PenaltyConfig&) const = default;
};

/// All learnable arrays. Hidden units are rows; num_hidden() is the current
/// capacity l (materialized units). Gradients and optimizer buffers reuse
/// this layout so they can be permuted in lockstep with the parameters.
struct ParamArrays {
  Matrix weights;        ///< l x D
  Matrix label_weights;  ///< l x C, C may be 0
  Vector hidden_bias;    ///< l
  Vector visible_bias;   ///< D
  Vector label_bias;     ///< C

  static ParamArrays zeros(std::size_t num_visible, std::size_t num_classes,
                           std::size_t num_hidden);
  ParamArrays zeros_like() const;

  std::size_t num_hidden() const { return hidden_bias.size(); }
  std::size_t num_visible() const { return visible_bias.size(); }
  std::size_t num_classes() const { return label_bias.size(); }

  void append_zero_unit();
  bool all_finite() const;
  /// Name of the first block holding a non-finite value, or empty.
  std::string first_nonfinite_block() const;

  bool operator==(const ParamArrays&) const = default;
};

struct ModelParams : ParamArrays {
  PenaltyConfig penalty;

  static ModelParams zeros(std::size_t num_visible, std::size_t num_classes,
                           PenaltyConfig penalty = {}, std::size_t num_hidden = 1);

  bool has_labels() const { return num_classes() > 0; }
  /// Shape consistency, l >= 1, finiteness, penalty validity.
  void validate() const;

  bool operator==(const ModelParams&) const = default;
};

/// Ordering of the first M hidden units: position k takes the unit that
/// was at index order()[k]. Units at index >= M are untouched.
class Permutation {
 public:
  Permutation() = default;
  /// Throws std::invalid_argument if `order` is not a bijection on [0, M).
  explicit Permutation(std::vector<std::size_t> order);
  static Permutation identity(std::size_t m);

  std::size_t size() const { return order_.size(); }
  std::size_t operator[](std::size_t k) const { return order_[k]; }
  std::span<const std::size_t> order() const { return order_; }
  bool is_identity() const;
  Permutation inverse() const;

  bool operator==(const Permutation&) const = default;

 private:
  std::vector<std::size_t> order_;
};

/// Reorder the first perm.size() entries of a per-unit sequence.
template <typename T>
void permute_prefix(std::vector<T>& values, const Permutation& perm) {
  std::vector<T> head(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) head[k] = values[perm[k]];
  for (std::size_t k = 0; k < perm.size(); ++k) values[k] = std::move(head[k]);
}

/// Reorder hidden-unit rows of W, U and entries of c in place. Visible and
/// label biases are untouched. Throws if perm.size() > num_hidden().
void permute_units(ParamArrays& arrays, const Permutation& perm);
ModelParams apply_permutation(const ModelParams& params, const Permutation& perm);

/// W_i.v + c_i (+ U_{i,y}) for every materialized unit.
Vector hidden_preactivations(const ModelParams& params, VisibleView v, Label label = {});

/// E(v, h, z[, y]). h may be any length; entries past z must be zero, and
/// entries past l act on zero-parameter units.
double energy(const ModelParams& params, VisibleView v, std::span<const std::uint8_t> h,
              std::size_t z, Label label = {});

enum class FreeEnergyForm {
  kJoint,        ///< F(v,z) or F(v,y,z): includes the visible-bias term
  kConditional,  ///< G(y,z|v): visible-bias term dropped
};

/// F(v,z) with h marginalized, z >= 1. Units past l are zero-parameter
/// units, so F(v, l+k) = F(v, l) + k*(beta*ln2 - ln2).
double free_energy(const ModelParams& params, VisibleView v, std::size_t z, Label label = {},
                   FreeEnergyForm form = FreeEnergyForm::kJoint);

/// Posterior over the cutoff z, represented exactly: explicit log weights
/// -F(v,z) for z = 1..l+1 and the closed-form log mass of z > l+1.
struct ZPosterior {
  Vector head_log_weights;  ///< index k holds z = k+1
  double tail_log_mass = kNegInf;
  double log_norm = kNegInf;
  double log_tail_ratio = 0.0;  ///< log r of the zero-parameter tail

  std::size_t head_size() const { return head_log_weights.size(); }
  double log_prob(std::size_t z) const { return head_log_weights.at(z - 1) - log_norm; }
  double prob(std::size_t z) const { return std::exp(log_prob(z)); }
  double tail_prob() const { return std::exp(tail_log_mass - log_norm); }
  /// P(z >= i) for i = 1..l+1 (index i-1), tail included.
  Vector survival() const;
  /// ln P(z <= m) for any m >= 0; -inf for m == 0.
  double log_prob_at_most(std::size_t m) const;
  /// P(z >= i) for any i >= 1, including indices inside the tail.
  double prob_at_least(std::size_t i) const;
  /// argmax over z in [1, l+1]; ties to the smaller z.
  std::size_t mode() const;
  /// Draw from the full posterior; draws landing past l+1 are clamped to l+1.
  std::size_t sample(RngStream& rng) const;
};

/// Builds the posterior from per-unit terms softplus(a_i) - beta_i and the
/// z-independent offset (v.b, plus d_y for labelled forms).
ZPosterior z_posterior_from_terms(std::span<const double> unit_terms, double offset,
                                  const PenaltyConfig& penalty);

/// p(z | v) or p(z | v, y). Log weights are -F(v,z) / -F(v,y,z).
ZPosterior z_posterior(const ModelParams& params, VisibleView v, Label label = {});

/// Bernoulli means of h given (v, z[, y]); length z, zero past z.
Vector cond_h_given_vz(const ModelParams& params, VisibleView v, std::size_t z, Label label = {});
/// Bernoulli means of v given (h, z).
Vector cond_v_given_hz(const ModelParams& params, std::span<const std::uint8_t> h, std::size_t z);
/// Softmax over classes given (h, z).
Vector cond_y_given_hz(const ModelParams& params, std::span<const std::uint8_t> h, std::size_t z);

/// Everything about y and z that depends on a fixed v. Precomputes the
/// per-class unit terms once so repeated conditional queries cost O(C*l).
class LabelConditional {
 public:
  LabelConditional(const ModelParams& params, VisibleView v);

  std::size_t num_classes() const { return label_bias_.size(); }
  std::size_t num_hidden() const { return num_hidden_; }

  /// -F(y|v) for every class: log sum_z exp(-G(y,z|v)) with the tail.
  const Vector& class_log_weights() const { return class_log_weights_; }
  /// p(y | v).
  Vector class_probs() const;
  /// p(z | v, y) in the G form.
  ZPosterior z_given_label(std::size_t y) const;
  /// p(y | v, z); z past l+1 behaves like l+1.
  Vector label_given_z(std::size_t z) const;
  /// sigmoid(W_i.v + U_iy + c_i) for every materialized unit.
  Vector unit_means(std::size_t y) const;

 private:
  std::size_t num_hidden_;
  Vector label_bias_;
  Matrix label_preact_;  ///< C x l: W_i.v + U_iy + c_i
  Matrix prefix_;        ///< C x (l+1): -G(y, z) for z = 1..l+1
  std::vector<ZPosterior> posteriors_;
  Vector class_log_weights_;
};

/// p(y | v) for the labelled model.
Vector cond_y_given_v(const ModelParams& params, VisibleView v);

/// p(h_i = 1 | v) = sigmoid(W_i.v + c_i) * P(z >= i | v); i is 1-based.
double marginal_h_prob(const ModelParams& params, VisibleView v, std::size_t i);

/// Per-unit view of the ordering effect for one input.
struct OrderingDiagnostic {
  Vector unit_prob;      ///< sigmoid(W_i.v + c_i)
  Vector survival;       ///< P(z >= i | v), i = 1..l
  Vector marginal;       ///< product of the two
  double prob_at_last;   ///< p(z = l | v)
  double tail_mass;      ///< P(z > l | v)
};

OrderingDiagnostic ordering_diagnostic(const ModelParams& params, VisibleView v);

}  // namespace irbm
