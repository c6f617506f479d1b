#include "irbm/inference.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace irbm {

std::size_t sample_z_given_v(const ModelParams& params, VisibleView v, Label label,
                             RngStream& rng) {
  return z_posterior(params, v, label).sample(rng);
}

VisibleVector sample_hidden(const ModelParams& params, VisibleView v, std::size_t z,
                            RngStream& rng) {
  const Vector a = hidden_preactivations(params, v);
  const std::size_t active = std::min(z, a.size());
  VisibleVector h(active);
  for (std::size_t i = 0; i < active; ++i) h[i] = rng.bernoulli(sigmoid(a[i])) ? 1 : 0;
  return h;
}

VisibleVector sample_visible(const ModelParams& params, std::span<const std::uint8_t> h,
                             std::size_t z, RngStream& rng) {
  const Vector means = cond_v_given_hz(params, h, z);
  VisibleVector v(means.size());
  for (std::size_t j = 0; j < means.size(); ++j) v[j] = rng.bernoulli(means[j]) ? 1 : 0;
  return v;
}

GibbsChainState gibbs_step_generative(const ModelParams& params, GibbsChainState chain,
                                      RngStream& rng) {
  chain.z = sample_z_given_v(params, chain.v, {}, rng);
  const VisibleVector h = sample_hidden(params, chain.v, chain.z, rng);
  chain.v = sample_visible(params, h, chain.z, rng);
  return chain;
}

LabelChainState gibbs_step_discriminative(const LabelConditional& cond, LabelChainState state,
                                          RngStream& rng) {
  state.z = cond.z_given_label(state.y).sample(rng);
  const Vector py = cond.label_given_z(state.z);
  const double u = rng.uniform();
  double cum = 0.0;
  state.y = py.size() - 1;
  for (std::size_t y = 0; y < py.size(); ++y) {
    cum += py[y];
    if (u < cum) {
      state.y = y;
      break;
    }
  }
  return state;
}

LabelChainState gibbs_step_discriminative(const ModelParams& params, VisibleView v,
                                          LabelChainState state, RngStream& rng) {
  return gibbs_step_discriminative(LabelConditional(params, v), state, rng);
}

namespace {

NegativeSample advance(const ModelParams& params, VisibleVector v, std::size_t z, std::size_t k,
                       RngStream& rng) {
  for (std::size_t s = 0; s < k; ++s) {
    const VisibleVector h = sample_hidden(params, v, z, rng);
    v = sample_visible(params, h, z, rng);
    z = sample_z_given_v(params, v, {}, rng);
  }
  return {std::move(v), z};
}

void require_steps(std::size_t k) {
  if (k == 0) throw std::invalid_argument("contrastive divergence needs k >= 1 Gibbs steps");
}

}  // namespace

std::vector<NegativeSample> run_cd(const ModelParams& params, std::span<const VisibleView> start,
                                   std::span<const std::size_t> z_start, std::size_t k,
                                   std::uint64_t seed, std::uint64_t step) {
  require_steps(k);
  if (start.size() != z_start.size())
    throw std::invalid_argument("CD chain count " + std::to_string(z_start.size()) +
                                " does not match minibatch size " + std::to_string(start.size()));
  std::vector<NegativeSample> out;
  out.reserve(start.size());
  for (std::size_t n = 0; n < start.size(); ++n) {
    RngStream rng(seed, StreamPurpose::kNegative, step, n);
    out.push_back(
        advance(params, VisibleVector(start[n].begin(), start[n].end()), z_start[n], k, rng));
  }
  return out;
}

LabelChainState run_label_cd(const LabelConditional& cond, LabelChainState start, std::size_t k,
                             RngStream& rng) {
  require_steps(k);
  // The starting z is the positive-phase draw, so the first round only
  // resamples y before continuing with full sweeps.
  LabelChainState s = start;
  const Vector py = cond.label_given_z(s.z);
  const double u = rng.uniform();
  double cum = 0.0;
  s.y = py.size() - 1;
  for (std::size_t y = 0; y < py.size(); ++y) {
    cum += py[y];
    if (u < cum) {
      s.y = y;
      break;
    }
  }
  for (std::size_t step = 1; step < k; ++step) s = gibbs_step_discriminative(cond, s, rng);
  return s;
}

PersistentChains::PersistentChains(std::size_t num_chains, std::size_t num_visible,
                                   std::uint64_t seed) {
  particles_.resize(num_chains);
  for (std::size_t j = 0; j < num_chains; ++j) {
    RngStream rng(seed, StreamPurpose::kChainInit, 0, j);
    particles_[j].resize(num_visible);
    for (auto& bit : particles_[j]) bit = rng.bernoulli(0.5) ? 1 : 0;
  }
}

std::vector<NegativeSample> PersistentChains::run(const ModelParams& params, std::size_t k,
                                                  std::uint64_t seed, std::uint64_t step) {
  require_steps(k);
  std::vector<NegativeSample> out;
  out.reserve(particles_.size());
  for (std::size_t j = 0; j < particles_.size(); ++j) {
    RngStream rng(seed, StreamPurpose::kNegative, step, j);
    const std::size_t z = sample_z_given_v(params, particles_[j], {}, rng);
    NegativeSample s = advance(params, particles_[j], z, k, rng);
    particles_[j] = s.v;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace irbm
