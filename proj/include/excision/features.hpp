#pragma once

// Excision-force characterisation: force -> recovered velocity -> regime
// model -> five scalar features.

#include <cmath>
#include <cstdint>

#include "excision/error.hpp"
#include "excision/hmm.hpp"
#include "excision/maxwell.hpp"

namespace excision {

struct ExcisionFeatures {
  double amplitude = 0.0;    // N, occupancy-weighted regime force
  double consistency = 1.0;  // 1 / (1 + weighted spread of regime forces)
  double smoothness = 1.0;   // expected self-transition probability
  double energy = 0.0;       // N s
  double confidence = 1.0;   // smoothness * consistency

  friend bool operator==(const ExcisionFeatures&, const ExcisionFeatures&) = default;
};

inline ExcisionFeatures extract_features(const RegimeModel& model, const MaterialParams& material, double duration) {
  model.validate();
  material.validate();
  detail::require(std::isfinite(duration) && duration > 0.0, "extract_features: duration must be positive");
  const auto& pi = model.pi_stat;
  double amp = 0.0;
  for (std::size_t k = 0; k < model.K; ++k) amp += pi[k] * material.eta * model.v[k];
  double var = 0.0;
  double smooth = 0.0;
  for (std::size_t k = 0; k < model.K; ++k) {
    const double d = material.eta * model.v[k] - amp;
    var += pi[k] * d * d;
    smooth += pi[k] * model.Q[k][k];
  }
  ExcisionFeatures f;
  f.amplitude = amp;
  f.consistency = 1.0 / (1.0 + std::sqrt(var));
  f.smoothness = smooth;
  f.energy = amp * duration;
  f.confidence = f.smoothness * f.consistency;
  return f;
}

struct Characterisation {
  ExcisionFeatures features;
  RegimeModel regimes;
};

inline Characterisation characterise_full(const ForceProfile& force, const MaterialParams& material,
                                          const HmmOptions& hmm, std::uint64_t seed) {
  const auto velocity = invert_force(force, material);
  auto regimes = fit_hmm(velocity, hmm, seed);
  auto features = extract_features(regimes, material, force.f.duration());
  return {features, std::move(regimes)};
}

inline ExcisionFeatures characterise(const ForceProfile& force, const MaterialParams& material, std::size_t K,
                                     std::uint64_t seed) {
  HmmOptions opt;
  opt.K = K;
  return characterise_full(force, material, opt, seed).features;
}

}  // namespace excision
