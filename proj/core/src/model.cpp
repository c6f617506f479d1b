#include "irbm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace irbm {

std::string to_string(PenaltyMode mode) {
  return mode == PenaltyMode::kConstant ? "constant" : "dynamic";
}

PenaltyMode penalty_mode_from_string(const std::string& s) {
  if (s == "constant") return PenaltyMode::kConstant;
  if (s == "dynamic") return PenaltyMode::kDynamic;
  throw std::invalid_argument("unknown penalty mode '" + s + "'");
}

void PenaltyConfig::validate() const {
  if (!(beta > 1.0) || !std::isfinite(beta))
    throw std::invalid_argument("penalty beta must be finite and > 1 (got " +
                                std::to_string(beta) + "): the sum over z diverges otherwise");
}

// ---------------------------------------------------------------------------
// Parameter arrays

ParamArrays ParamArrays::zeros(std::size_t num_visible, std::size_t num_classes,
                               std::size_t num_hidden) {
  ParamArrays a;
  a.weights = Matrix(num_hidden, num_visible);
  a.label_weights = Matrix(num_hidden, num_classes);
  a.hidden_bias.assign(num_hidden, 0.0);
  a.visible_bias.assign(num_visible, 0.0);
  a.label_bias.assign(num_classes, 0.0);
  return a;
}

ParamArrays ParamArrays::zeros_like() const {
  return zeros(num_visible(), num_classes(), num_hidden());
}

void ParamArrays::append_zero_unit() {
  weights.append_zero_row();
  label_weights.append_zero_row();
  hidden_bias.push_back(0.0);
}

namespace {

bool finite_span(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::string ParamArrays::first_nonfinite_block() const {
  if (!finite_span(weights.flat())) return "weights";
  if (!finite_span(label_weights.flat())) return "label_weights";
  if (!finite_span(hidden_bias)) return "hidden_bias";
  if (!finite_span(visible_bias)) return "visible_bias";
  if (!finite_span(label_bias)) return "label_bias";
  return {};
}

bool ParamArrays::all_finite() const { return first_nonfinite_block().empty(); }

ModelParams ModelParams::zeros(std::size_t num_visible, std::size_t num_classes,
                               PenaltyConfig penalty, std::size_t num_hidden) {
  ModelParams p;
  static_cast<ParamArrays&>(p) = ParamArrays::zeros(num_visible, num_classes, num_hidden);
  p.penalty = penalty;
  p.validate();
  return p;
}

void ModelParams::validate() const {
  penalty.validate();
  const std::size_t l = num_hidden();
  if (l == 0) throw std::invalid_argument("model needs at least one hidden unit");
  if (weights.rows() != l || weights.cols() != num_visible())
    throw std::invalid_argument("weights shape does not match l x D");
  if (label_weights.rows() != l || label_weights.cols() != num_classes())
    throw std::invalid_argument("label_weights shape does not match l x C");
  if (const auto bad = first_nonfinite_block(); !bad.empty())
    throw std::invalid_argument("non-finite values in " + bad);
}

// ---------------------------------------------------------------------------
// Permutations

Permutation::Permutation(std::vector<std::size_t> order) : order_(std::move(order)) {
  std::vector<bool> seen(order_.size(), false);
  for (std::size_t k : order_) {
    if (k >= order_.size() || seen[k])
      throw std::invalid_argument("permutation order is not a bijection");
    seen[k] = true;
  }
}

Permutation Permutation::identity(std::size_t m) {
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return Permutation(std::move(order));
}

bool Permutation::is_identity() const {
  for (std::size_t k = 0; k < order_.size(); ++k)
    if (order_[k] != k) return false;
  return true;
}

Permutation Permutation::inverse() const {
  std::vector<std::size_t> inv(order_.size());
  for (std::size_t k = 0; k < order_.size(); ++k) inv[order_[k]] = k;
  return Permutation(std::move(inv));
}

namespace {

void permute_rows(Matrix& m, const Permutation& perm) {
  if (m.cols() == 0) return;
  Matrix head(perm.size(), m.cols());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    auto src = m.row(perm[k]);
    std::copy(src.begin(), src.end(), head.row(k).begin());
  }
  for (std::size_t k = 0; k < perm.size(); ++k) {
    auto src = head.row(k);
    std::copy(src.begin(), src.end(), m.row(k).begin());
  }
}

}  // namespace

void permute_units(ParamArrays& arrays, const Permutation& perm) {
  if (perm.size() > arrays.num_hidden())
    throw std::invalid_argument("permutation length " + std::to_string(perm.size()) +
                                " exceeds hidden capacity " +
                                std::to_string(arrays.num_hidden()));
  if (perm.is_identity()) return;
  permute_rows(arrays.weights, perm);
  permute_rows(arrays.label_weights, perm);
  permute_prefix(arrays.hidden_bias, perm);
}

ModelParams apply_permutation(const ModelParams& params, const Permutation& perm) {
  ModelParams out = params;
  permute_units(out, perm);
  return out;
}

// ---------------------------------------------------------------------------
// Energies

namespace {

void check_visible(const ModelParams& params, VisibleView v) {
  if (v.size() != params.num_visible())
    throw std::invalid_argument("visible vector has length " + std::to_string(v.size()) +
                                ", model expects " + std::to_string(params.num_visible()));
}

void check_label(const ModelParams& params, Label label) {
  if (label && *label >= params.num_classes())
    throw std::invalid_argument("label " + std::to_string(*label) + " out of range for " +
                                std::to_string(params.num_classes()) + " classes");
}

double visible_term(const ModelParams& params, VisibleView v) {
  double s = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j)
    if (v[j]) s += params.visible_bias[j];
  return s;
}

double label_offset(const ModelParams& params, Label label) {
  return label ? params.label_bias[*label] : 0.0;
}

}  // namespace

Vector hidden_preactivations(const ModelParams& params, VisibleView v, Label label) {
  check_visible(params, v);
  check_label(params, label);
  const std::size_t l = params.num_hidden();
  Vector a(l);
  for (std::size_t i = 0; i < l; ++i) {
    double s = params.hidden_bias[i];
    const auto w = params.weights.row(i);
    for (std::size_t j = 0; j < v.size(); ++j)
      if (v[j]) s += w[j];
    if (label) s += params.label_weights(i, *label);
    a[i] = s;
  }
  return a;
}

double energy(const ModelParams& params, VisibleView v, std::span<const std::uint8_t> h,
              std::size_t z, Label label) {
  if (z < 1) throw std::invalid_argument("z must be >= 1");
  for (std::size_t i = z; i < h.size(); ++i)
    if (h[i] != 0)
      throw std::invalid_argument("h has an active unit past z (index " + std::to_string(i + 1) +
                                  ")");
  const Vector a = hidden_preactivations(params, v, label);
  const std::size_t l = params.num_hidden();
  double e = -visible_term(params, v) - label_offset(params, label);
  for (std::size_t i = 0; i < z; ++i) {
    const bool on = i < h.size() && h[i] != 0;
    if (i < l) {
      e -= (on ? a[i] : 0.0) - params.penalty.unit_penalty(params.hidden_bias[i]);
    } else {
      e += params.penalty.zero_unit_penalty();
    }
  }
  return e;
}

double free_energy(const ModelParams& params, VisibleView v, std::size_t z, Label label,
                   FreeEnergyForm form) {
  if (z < 1) throw std::invalid_argument("z must be >= 1");
  const Vector a = hidden_preactivations(params, v, label);
  const std::size_t l = params.num_hidden();
  double f = -label_offset(params, label);
  if (form == FreeEnergyForm::kJoint) f -= visible_term(params, v);
  const std::size_t head = std::min(z, l);
  for (std::size_t i = 0; i < head; ++i)
    f -= softplus(a[i]) - params.penalty.unit_penalty(params.hidden_bias[i]);
  if (z > l) f -= static_cast<double>(z - l) * params.penalty.log_tail_ratio();
  return f;
}

// ---------------------------------------------------------------------------
// z posterior

ZPosterior z_posterior_from_terms(std::span<const double> unit_terms, double offset,
                                  const PenaltyConfig& penalty) {
  penalty.validate();
  const std::size_t l = unit_terms.size();
  const double log_r = penalty.log_tail_ratio();
  ZPosterior post;
  post.log_tail_ratio = log_r;
  post.head_log_weights.resize(l + 1);
  double cum = offset;
  for (std::size_t i = 0; i < l; ++i) {
    cum += unit_terms[i];
    post.head_log_weights[i] = cum;
  }
  post.head_log_weights[l] = cum + log_r;
  // sum_{k>=1} r^k = r / (1 - r)
  post.tail_log_mass = post.head_log_weights[l] + log_r - std::log(-std::expm1(log_r));
  post.log_norm = log_add_exp(log_sum_exp(post.head_log_weights), post.tail_log_mass);
  return post;
}

namespace {

Vector unit_terms(const ModelParams& params, std::span<const double> preact) {
  Vector terms(preact.size());
  for (std::size_t i = 0; i < preact.size(); ++i)
    terms[i] = softplus(preact[i]) - params.penalty.unit_penalty(params.hidden_bias[i]);
  return terms;
}

}  // namespace

ZPosterior z_posterior(const ModelParams& params, VisibleView v, Label label) {
  const Vector a = hidden_preactivations(params, v, label);
  return z_posterior_from_terms(unit_terms(params, a),
                                visible_term(params, v) + label_offset(params, label),
                                params.penalty);
}

Vector ZPosterior::survival() const {
  const std::size_t n = head_size();
  Vector out(n);
  double suffix = tail_log_mass;
  for (std::size_t k = n; k-- > 0;) {
    suffix = log_add_exp(head_log_weights[k], suffix);
    out[k] = std::min(1.0, std::exp(suffix - log_norm));
  }
  return out;
}

double ZPosterior::prob_at_least(std::size_t i) const {
  if (i <= 1) return 1.0;
  const std::size_t n = head_size();
  if (i <= n) return survival()[i - 1];
  // Inside the tail: weight of z = n+k is w_n * r^k.
  const double log_mass = head_log_weights[n - 1] + static_cast<double>(i - n) * log_tail_ratio -
                          std::log(-std::expm1(log_tail_ratio));
  return std::exp(log_mass - log_norm);
}

double ZPosterior::log_prob_at_most(std::size_t m) const {
  if (m == 0) return kNegInf;
  const std::size_t n = head_size();
  const std::size_t k = std::min(m, n);
  const double head = log_sum_exp(std::span<const double>(head_log_weights.data(), k));
  if (m <= n) return head - log_norm;
  return std::log1p(-prob_at_least(m + 1));
}

std::size_t ZPosterior::mode() const { return argmax(head_log_weights) + 1; }

std::size_t ZPosterior::sample(RngStream& rng) const {
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t k = 0; k < head_size(); ++k) {
    cum += std::exp(head_log_weights[k] - log_norm);
    if (u < cum) return k + 1;
  }
  return head_size();
}

// ---------------------------------------------------------------------------
// Conditionals

Vector cond_h_given_vz(const ModelParams& params, VisibleView v, std::size_t z, Label label) {
  const Vector a = hidden_preactivations(params, v, label);
  Vector means(z, 0.0);
  for (std::size_t i = 0; i < z; ++i) means[i] = i < a.size() ? sigmoid(a[i]) : 0.5;
  return means;
}

Vector cond_v_given_hz(const ModelParams& params, std::span<const std::uint8_t> h, std::size_t z) {
  const std::size_t active = std::min(z, params.num_hidden());
  if (h.size() < active) throw std::invalid_argument("h shorter than min(z, l)");
  Vector act = params.visible_bias;
  for (std::size_t i = 0; i < active; ++i) {
    if (!h[i]) continue;
    const auto w = params.weights.row(i);
    for (std::size_t j = 0; j < act.size(); ++j) act[j] += w[j];
  }
  for (double& x : act) x = sigmoid(x);
  return act;
}

Vector cond_y_given_hz(const ModelParams& params, std::span<const std::uint8_t> h, std::size_t z) {
  const std::size_t active = std::min(z, params.num_hidden());
  if (h.size() < active) throw std::invalid_argument("h shorter than min(z, l)");
  Vector logits = params.label_bias;
  for (std::size_t i = 0; i < active; ++i) {
    if (!h[i]) continue;
    const auto u = params.label_weights.row(i);
    for (std::size_t y = 0; y < logits.size(); ++y) logits[y] += u[y];
  }
  const double norm = log_sum_exp(logits);
  for (double& x : logits) x = std::exp(x - norm);
  return logits;
}

LabelConditional::LabelConditional(const ModelParams& params, VisibleView v)
    : num_hidden_(params.num_hidden()), label_bias_(params.label_bias) {
  if (!params.has_labels()) throw std::invalid_argument("model has no label units");
  const Vector a = hidden_preactivations(params, v);
  const std::size_t l = num_hidden_;
  const std::size_t C = params.num_classes();
  label_preact_ = Matrix(C, l);
  prefix_ = Matrix(C, l + 1);
  posteriors_.reserve(C);
  class_log_weights_.resize(C);
  Vector terms(l);
  for (std::size_t y = 0; y < C; ++y) {
    for (std::size_t i = 0; i < l; ++i) {
      const double act = a[i] + params.label_weights(i, y);
      label_preact_(y, i) = act;
      terms[i] = softplus(act) - params.penalty.unit_penalty(params.hidden_bias[i]);
    }
    posteriors_.push_back(z_posterior_from_terms(terms, label_bias_[y], params.penalty));
    const auto& head = posteriors_.back().head_log_weights;
    std::copy(head.begin(), head.end(), prefix_.row(y).begin());
    class_log_weights_[y] = posteriors_.back().log_norm;
  }
}

Vector LabelConditional::class_probs() const {
  const double norm = log_sum_exp(class_log_weights_);
  Vector p(class_log_weights_.size());
  for (std::size_t y = 0; y < p.size(); ++y) p[y] = std::exp(class_log_weights_[y] - norm);
  return p;
}

ZPosterior LabelConditional::z_given_label(std::size_t y) const { return posteriors_.at(y); }

Vector LabelConditional::label_given_z(std::size_t z) const {
  if (z < 1) throw std::invalid_argument("z must be >= 1");
  // Units past l+1 add the same term to every class, so they cancel.
  const std::size_t k = std::min(z, num_hidden_ + 1) - 1;
  Vector logits(num_classes());
  for (std::size_t y = 0; y < logits.size(); ++y) logits[y] = prefix_(y, k);
  const double norm = log_sum_exp(logits);
  for (double& x : logits) x = std::exp(x - norm);
  return logits;
}

Vector LabelConditional::unit_means(std::size_t y) const {
  Vector m(num_hidden_);
  for (std::size_t i = 0; i < num_hidden_; ++i) m[i] = sigmoid(label_preact_(y, i));
  return m;
}

Vector cond_y_given_v(const ModelParams& params, VisibleView v) {
  return LabelConditional(params, v).class_probs();
}

double marginal_h_prob(const ModelParams& params, VisibleView v, std::size_t i) {
  if (i < 1) throw std::invalid_argument("unit index is 1-based");
  const Vector a = hidden_preactivations(params, v);
  const ZPosterior post = z_posterior_from_terms(unit_terms(params, a), visible_term(params, v),
                                                 params.penalty);
  const double unit = i <= a.size() ? sigmoid(a[i - 1]) : 0.5;
  return unit * post.prob_at_least(i);
}

OrderingDiagnostic ordering_diagnostic(const ModelParams& params, VisibleView v) {
  const Vector a = hidden_preactivations(params, v);
  const ZPosterior post = z_posterior_from_terms(unit_terms(params, a), visible_term(params, v),
                                                 params.penalty);
  const Vector surv = post.survival();
  const std::size_t l = a.size();
  OrderingDiagnostic d;
  d.unit_prob.resize(l);
  d.survival.assign(surv.begin(), surv.begin() + static_cast<std::ptrdiff_t>(l));
  d.marginal.resize(l);
  for (std::size_t i = 0; i < l; ++i) {
    d.unit_prob[i] = sigmoid(a[i]);
    d.marginal[i] = d.unit_prob[i] * d.survival[i];
  }
  d.prob_at_last = post.prob(l);
  d.tail_mass = surv[l];
  return d;
}

}  // namespace irbm
