#include <gtest/gtest.h>

#include <cmath>

#include "irbm/evaluation.hpp"
#include "oracles.hpp"

namespace irbm {
namespace {

using test::random_model;
using test::RandomModelSpec;

double zero_model_log_z(std::size_t d, double beta) {
  const double r = std::pow(2.0, 1.0 - beta);
  return d * std::log(2.0) + std::log(r / (1.0 - r));
}

/// Units 1..m get large biases, so p(z <= m | v) is negligible for every v.
ModelParams invariance_model(std::uint64_t seed, std::size_t d, std::size_t l, std::size_t m) {
  // Unit M+1 must also be strong, otherwise the mass piles up at z = M.
  ModelParams p = random_model(seed, {d, l, 0, 0.5});
  for (std::size_t i = 0; i <= m && i < l; ++i) p.hidden_bias[i] = 40.0 + static_cast<double>(i);
  return p;
}

TEST(ExactPartition, ZeroModelClosedForm) {
  const ModelParams p = ModelParams::zeros(2, 0);
  EXPECT_NEAR(exact_log_partition(p), zero_model_log_z(2, 1.01), 1e-12);
  EXPECT_NEAR(exact_log_partition(p), 6.3546, 1e-4);
}

TEST(ExactPartition, PenaltyShiftChangesTheGeometricSum) {
  for (double beta : {1.01, 1.1, 1.5, 3.0}) {
    const ModelParams p = ModelParams::zeros(3, 0, {beta, PenaltyMode::kConstant});
    EXPECT_NEAR(exact_log_partition(p), zero_model_log_z(3, beta), 1e-12);
  }
}

TEST(ExactPartition, MatchesDoubleLoopOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ModelParams p = random_model(seed, {3, 2});
    EXPECT_NEAR(exact_log_partition(p), test::oracle_log_partition(p), 1e-12);
    const ModelParams q = random_model(seed, {3, 2, 3});
    EXPECT_NEAR(exact_log_partition_labelled(q), test::oracle_log_partition(q), 1e-12);
  }
}

TEST(ExactPartition, RespectsCap) {
  EXPECT_THROW(exact_log_partition(ModelParams::zeros(15, 0)), std::invalid_argument);
  EXPECT_NO_THROW(exact_log_partition(ModelParams::zeros(15, 0), 15));
}

TEST(ExactLoglik, ZeroModelIsUniform) {
  const ModelParams p = ModelParams::zeros(5, 0, {}, 3);
  const auto data = test::random_visible(1, 7, 5);
  EXPECT_NEAR(exact_loglik(p, data), -5 * std::log(2.0), 1e-12);
}

TEST(ExactLoglik, SingleExampleAndNormalization) {
  const ModelParams p = random_model(50, {6, 4, 0, 1.5});
  const double log_z = exact_log_partition(p);
  double total = 0.0;
  for (const auto& v : test::all_visible(6)) {
    const std::vector<VisibleVector> one{v};
    const double ll = exact_loglik(p, one, log_z);
    EXPECT_NEAR(ll, test::oracle_log_marginal(p, v) - log_z, 1e-10);
    total += std::exp(ll);
  }
  EXPECT_NEAR(total, 1.0, 1e-10);
}

TEST(Ais, TemperatureSchedules) {
  AisOptions o;
  o.num_temps = 5;
  o.min_inverse_temp = 1e-3;
  const Vector geo = ais_inverse_temperatures(o);
  ASSERT_EQ(geo.size(), 5u);
  EXPECT_EQ(geo[0], 0.0);
  EXPECT_NEAR(geo[1], 1e-3, 1e-15);
  EXPECT_NEAR(geo[2], std::pow(1e-3, 2.0 / 3.0), 1e-15);
  EXPECT_EQ(geo[4], 1.0);
  o.schedule = AisSchedule::kLinear;
  EXPECT_NEAR(ais_inverse_temperatures(o)[2], 0.5, 1e-15);
  o.num_temps = 1;
  EXPECT_THROW(ais_inverse_temperatures(o), std::invalid_argument);
}

TEST(Ais, BaseModelIsClosedForm) {
  ModelParams base = ModelParams::zeros(4, 0, {}, 2);
  base.visible_bias = {0.3, -1.2, 2.0, 0.0};
  EXPECT_NEAR(base_log_partition(base.visible_bias, base.penalty), exact_log_partition(base),
              1e-12);
  EXPECT_NEAR(base_log_partition(base.visible_bias, base.penalty, 3),
              exact_converted_log_partition(base, 3), 1e-12);
}

TEST(Ais, IdentityAnnealIsExact) {
  ModelParams target = ModelParams::zeros(5, 0, {}, 3);
  target.visible_bias = {0.5, -0.5, 1.0, 0.0, -2.0};
  AisOptions o;
  o.num_temps = 20;
  o.num_chains = 10;
  o.base_visible_bias = target.visible_bias;
  const AisResult r = ais_log_partition(target, o);
  EXPECT_NEAR(r.log_z, base_log_partition(target.visible_bias, target.penalty), 1e-10);
  EXPECT_NEAR(r.std_err, 0.0, 1e-12);
}

TEST(Ais, CloseToExactOnTinyModel) {
  const ModelParams p = random_model(51, {6, 3, 0, 0.7});
  AisOptions o;
  o.num_temps = 100;
  o.num_chains = 50;
  o.seed = 3;
  const AisResult r = ais_log_partition(p, o);
  EXPECT_EQ(r.num_nonfinite, 0u);
  EXPECT_LT(std::abs(r.log_z - exact_log_partition(p)), 0.1);
  o.clamp_z = 2;
  const AisResult rc = ais_log_partition(p, o);
  EXPECT_LT(std::abs(rc.log_z - exact_converted_log_partition(p, 2)), 0.1);
}

TEST(Ais, StdErrShrinksWithChains) {
  const ModelParams p = random_model(52, {6, 3, 0, 1.0});
  std::vector<double> errs;
  for (std::size_t chains : {10, 50, 250}) {
    AisOptions o;
    o.num_temps = 50;
    o.num_chains = chains;
    errs.push_back(ais_log_partition(p, o).std_err);
  }
  EXPECT_GT(errs[0], errs[1]);
  EXPECT_GT(errs[1], errs[2]);
}

TEST(Ais, NonFiniteWeightsAreReported) {
  ModelParams p = random_model(53, {3, 2});
  p.weights(0, 0) = INFINITY;
  p.weights(0, 1) = -INFINITY;
  AisOptions o;
  o.num_temps = 3;
  o.num_chains = 4;
  const AisResult r = ais_log_partition(p, o);
  EXPECT_GT(r.num_nonfinite, 0u);
  EXPECT_TRUE(std::isnan(r.log_z));
}

TEST(Invariance, ConstructedModelHasNoSpread) {
  const ModelParams p = invariance_model(54, 5, 6, 4);
  const auto data = test::all_visible(5);
  const InvarianceReport r = check_order_invariance(p, data, 4, 10, 7);
  EXPECT_TRUE(r.spread_computed);
  EXPECT_LT(r.max_log_mass, -30.0);
  EXPECT_LE(r.mean_log_mass, r.max_log_mass);
  EXPECT_LT(r.loglik_spread, 1e-10);
}

TEST(Invariance, NoRegroupMeansNoSpread) {
  const ModelParams p = random_model(55, {4, 4, 0, 2.0});
  const InvarianceReport r = check_order_invariance(p, test::all_visible(4), 0, 5, 1);
  EXPECT_EQ(r.loglik_spread, 0.0);
  EXPECT_EQ(r.max_log_mass, kNegInf);
}

TEST(Invariance, ViolatingModelSpreads) {
  const ModelParams p = random_model(56, {4, 4, 0, 2.0});
  const InvarianceReport r = check_order_invariance(p, test::all_visible(4), 3, 10, 1);
  EXPECT_GT(r.max_log_mass, -30.0);
  EXPECT_GT(r.loglik_spread, 1e-3);
  EXPECT_LE(r.max_log_mass, 0.0);
  EXPECT_THROW(check_order_invariance(p, test::all_visible(4), 5, 10, 1), std::invalid_argument);
}

TEST(Averaging, SingleOrderingIsPlainLoglik) {
  const ModelParams p = random_model(57, {5, 4, 0, 1.5});
  const auto data = test::random_visible(2, 9, 5);
  EXPECT_NEAR(permutation_averaged_loglik(p, data, 3, 1, 1), exact_loglik(p, data), 1e-12);
}

TEST(Averaging, InvariantModelIgnoresOrderings) {
  const ModelParams p = invariance_model(58, 5, 6, 4);
  const auto data = test::random_visible(3, 9, 5);
  EXPECT_NEAR(permutation_averaged_loglik(p, data, 4, 1, 1),
              permutation_averaged_loglik(p, data, 4, 5, 1), 1e-8);
}

TEST(Averaging, AveragesProbabilitiesNotLogs) {
  const ModelParams p = random_model(59, {4, 4, 0, 2.5});
  const auto data = test::all_visible(4);
  const auto orderings = averaging_orderings(4, 5, 2);
  double mean_of_logs = 0.0;
  for (const auto& perm : orderings) {
    const ModelParams q = apply_permutation(p, perm);
    mean_of_logs += exact_loglik(q, data) / orderings.size();
  }
  const double averaged = permutation_averaged_loglik(p, data, 4, 5, 2);
  EXPECT_GT(averaged, mean_of_logs + 1e-6);
}

TEST(Averaging, ConditionalLikelihood) {
  const ModelParams p = random_model(60, {4, 3, 3});
  const auto data = test::random_visible(4, 6, 4);
  const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2};
  double single = 0.0;
  for (std::size_t n = 0; n < data.size(); ++n)
    single += std::log(cond_y_given_v(p, data[n])[labels[n]]) / data.size();
  EXPECT_NEAR(permutation_averaged_condlik(p, data, labels, 3, 1, 1), single, 1e-12);
  EXPECT_TRUE(std::isfinite(permutation_averaged_condlik(p, data, labels, 3, 4, 1)));
}

TEST(Averaging, FirstOrderingIsStored) {
  const auto o = averaging_orderings(5, 3, 9);
  ASSERT_EQ(o.size(), 3u);
  EXPECT_TRUE(o[0].is_identity());
  EXPECT_EQ(o[1], sample_orderings(5, 2, 9)[0]);
}

TEST(EffectiveSize, ZeroModelIsOne) {
  const ModelParams p = ModelParams::zeros(4, 0, {}, 6);
  EXPECT_EQ(effective_hidden_size(p, test::all_visible(4), 3), 1u);
}

TEST(EffectiveSize, MatchesBruteForce) {
  const ModelParams p = random_model(61, {5, 6, 0, 2.0});
  const auto data = test::random_visible(5, 23, 5);
  auto brute_mode = [&](const VisibleVector& v) {
    const auto probs = test::oracle_z_probs(p, v);
    return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin()) +
           1;
  };
  double sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t s = 0; s < data.size(); s += 5) {
    std::size_t best = 0;
    for (std::size_t k = s; k < std::min(data.size(), s + 5); ++k)
      best = std::max(best, brute_mode(data[k]));
    sum += best;
    ++batches;
  }
  EXPECT_EQ(effective_hidden_size(p, data, 5), static_cast<std::size_t>(std::llround(sum / batches)));
  std::size_t all = 0;
  for (const auto& v : data) all = std::max(all, brute_mode(v));
  EXPECT_EQ(effective_hidden_size(p, data, data.size()), all);
}

TEST(EffectiveSize, StrongNewUnitDoesNotShrinkIt) {
  ModelParams p = random_model(62, {6, 3, 0, 0.5});
  const auto data = test::random_visible(6, 20, 6);
  const std::size_t before = effective_hidden_size(p, data, 5);
  p.append_zero_unit();
  for (std::size_t j = 0; j < 6; ++j) p.weights(3, j) = 3.0;
  p.hidden_bias[3] = 5.0;
  EXPECT_GE(effective_hidden_size(p, data, 5), before);
}

TEST(ConvertedRbm, ZeroModelIsUniform) {
  const ModelParams p = ModelParams::zeros(4, 0, {}, 2);
  for (std::size_t n : {1, 2, 5})
    EXPECT_NEAR(converted_rbm_loglik(p, test::all_visible(4), n), -4 * std::log(2.0), 1e-12);
}

TEST(ConvertedRbm, MatchesClassicRbmEnumeration) {
  const ModelParams p = random_model(63, {4, 4, 0, 1.2});
  const auto data = test::random_visible(7, 5, 4);
  for (std::size_t n = 1; n <= 4; ++n) {
    std::vector<double> terms;
    for (const auto& v : test::all_visible(4))
      terms.push_back(test::oracle_classic_rbm_log_marginal(p, v, n));
    const double log_z = log_sum_exp(terms);
    double ref = 0.0;
    for (const auto& v : data) ref += (test::oracle_classic_rbm_log_marginal(p, v, n) - log_z) / 5;
    EXPECT_NEAR(converted_rbm_loglik(p, data, n), ref, 1e-10);
  }
}

TEST(ConvertedRbm, ZeroExtraUnitsAreInert) {
  const ModelParams p = random_model(64, {4, 2});
  const auto data = test::random_visible(8, 5, 4);
  const double base = converted_rbm_loglik(p, data, 2);
  for (std::size_t n = 3; n <= 6; ++n) EXPECT_NEAR(converted_rbm_loglik(p, data, n), base, 1e-12);
}

TEST(Classification, ZeroModelIsChance) {
  const ModelParams p = ModelParams::zeros(3, 10, {}, 2);
  std::vector<VisibleVector> data;
  std::vector<std::size_t> labels;
  for (std::size_t k = 0; k < 50; ++k) {
    data.push_back(test::bits_of(k % 8, 3));
    labels.push_back(k % 10);
  }
  const ClassificationResult r = classification_metrics(p, data, labels, 0, 1, 1);
  EXPECT_NEAR(r.error, 0.9, 1e-12);
  for (std::size_t y : r.predictions) EXPECT_EQ(y, 0u);  // ties go to the lowest class
  std::size_t total = 0;
  for (const auto& [z, c] : r.z_histogram) total += c;
  EXPECT_EQ(total, data.size());
}

TEST(Classification, SeparableToyModelIsPerfect) {
  ModelParams p = ModelParams::zeros(2, 2, {}, 2);
  p.weights(0, 0) = 10.0;
  p.weights(1, 1) = 10.0;
  p.label_weights(0, 0) = 10.0;
  p.label_weights(0, 1) = -10.0;
  p.label_weights(1, 0) = -10.0;
  p.label_weights(1, 1) = 10.0;
  p.hidden_bias = {-5.0, -5.0};
  const std::vector<VisibleVector> data{{1, 0}, {0, 1}, {1, 0}, {0, 1}};
  const std::vector<std::size_t> labels{0, 1, 0, 1};
  EXPECT_EQ(classification_metrics(p, data, labels, 1, 3, 1).error, 0.0);
}

TEST(Classification, ErrorAgreesWithConfusionMatrix) {
  const ModelParams p = random_model(65, {5, 4, 3, 1.5});
  const auto data = test::random_visible(9, 40, 5);
  std::vector<std::size_t> labels;
  for (std::size_t n = 0; n < 40; ++n) labels.push_back((n * 7) % 3);
  const ClassificationResult r = classification_metrics(p, data, labels, 3, 4, 2);
  std::vector<std::vector<std::size_t>> confusion(3, std::vector<std::size_t>(3, 0));
  for (std::size_t n = 0; n < 40; ++n) ++confusion[labels[n]][r.predictions[n]];
  std::size_t correct = 0;
  for (std::size_t y = 0; y < 3; ++y) correct += confusion[y][y];
  EXPECT_NEAR(r.error, 1.0 - correct / 40.0, 1e-15);
  EXPECT_EQ(r.z_modes, averaged_z_modes(p, data, averaging_orderings(3, 4, 2)));
}

}  // namespace
}  // namespace irbm
