#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "irbm/model.hpp"
#include "irbm/rng.hpp"

namespace irbm {

/// Persistent fantasy particle of the generative chain. z never exceeds
/// l+1: draws from the tail are clamped.
struct GibbsChainState {
  VisibleVector v;
  std::size_t z = 1;
  std::uint64_t stream_id = 0;

  bool operator==(const GibbsChainState&) const = default;
};

/// State of the (z, y) chain run with v clamped.
struct LabelChainState {
  std::size_t y = 0;
  std::size_t z = 1;

  bool operator==(const LabelChainState&) const = default;
};

/// One negative-phase particle for the generative gradient.
struct NegativeSample {
  VisibleVector v;
  std::size_t z = 1;
};

/// z ~ p(z | v[, y]) with tail draws clamped to l+1.
std::size_t sample_z_given_v(const ModelParams& params, VisibleView v, Label label,
                             RngStream& rng);

/// h ~ p(h | v, z). Only the materialized units below z are drawn; units past
/// l carry no weights and cannot influence v or y.
VisibleVector sample_hidden(const ModelParams& params, VisibleView v, std::size_t z,
                            RngStream& rng);

/// v ~ p(v | h, z).
VisibleVector sample_visible(const ModelParams& params, std::span<const std::uint8_t> h,
                             std::size_t z, RngStream& rng);

/// One sweep z -> h -> v.
GibbsChainState gibbs_step_generative(const ModelParams& params, GibbsChainState chain,
                                      RngStream& rng);

/// One sweep z ~ p(z | y, v) then y ~ p(y | z, v), v fixed.
LabelChainState gibbs_step_discriminative(const LabelConditional& cond, LabelChainState state,
                                          RngStream& rng);
LabelChainState gibbs_step_discriminative(const ModelParams& params, VisibleView v,
                                          LabelChainState state, RngStream& rng);

/// CD-k started at the data. Each chain starts at (start[n], z_start[n]) and
/// runs k rounds of h -> v -> z, so the first round reuses the positive-phase
/// cutoff. Chain n draws from stream (seed, negative, step, n).
std::vector<NegativeSample> run_cd(const ModelParams& params, std::span<const VisibleView> start,
                                   std::span<const std::size_t> z_start, std::size_t k,
                                   std::uint64_t seed, std::uint64_t step);

/// CD-k for the label chain of one example: starts at (y_start, z_start).
LabelChainState run_label_cd(const LabelConditional& cond, LabelChainState start, std::size_t k,
                             RngStream& rng);

/// Persistent chains for PCD. Only v persists: z is redrawn from p(z | v)
/// under the current hidden ordering at the start of every negative phase.
class PersistentChains {
 public:
  PersistentChains() = default;
  /// Uniform random particles from stream (seed, chain-init, 0, j).
  PersistentChains(std::size_t num_chains, std::size_t num_visible, std::uint64_t seed);

  std::size_t size() const { return particles_.size(); }
  const std::vector<VisibleVector>& particles() const { return particles_; }
  std::vector<VisibleVector>& particles() { return particles_; }

  /// Advance every chain k rounds and return the negative samples.
  std::vector<NegativeSample> run(const ModelParams& params, std::size_t k, std::uint64_t seed,
                                  std::uint64_t step);

  bool operator==(const PersistentChains&) const = default;

 private:
  std::vector<VisibleVector> particles_;
};

}  // namespace irbm
