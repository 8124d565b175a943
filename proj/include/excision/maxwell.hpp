#pragma once

// Simulated cutting oracle: blade speed drives a Maxwell element
// (spring E in series with damper eta), (eta/E) f' + f = eta v.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "excision/error.hpp"
#include "excision/random.hpp"
#include "excision/signal.hpp"
#include "excision/trajectory.hpp"

namespace excision {

struct MaterialParams {
  double E = 5.0;    // N / mm
  double eta = 2.0;  // N s / mm

  void validate() const {
    detail::require(std::isfinite(E) && E > 0.0, "material E must be positive");
    detail::require(std::isfinite(eta) && eta > 0.0, "material eta must be positive");
  }
  [[nodiscard]] double relaxation_time() const noexcept { return eta / E; }

  friend bool operator==(const MaterialParams&, const MaterialParams&) = default;
};

/// Excision force profile in newtons.
struct ForceProfile {
  UniformSeries f;
};

struct SimNoise {
  double process_sigma = 0.1;   // mm/s on the drive speed
  double measure_sigma = 0.05;  // N on the recorded force
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(process_sigma >= 0.0 && measure_sigma >= 0.0, "noise stds must be non-negative");
  }

  friend bool operator==(const SimNoise&, const SimNoise&) = default;
};

/// Forward-Euler integration of f' = E (v - f/eta) from f(0) = f0.
inline ForceProfile forward_force(const UniformSeries& velocity, const MaterialParams& material, double f0 = 0.0) {
  material.validate();
  const double dt = velocity.dt();
  const double step = dt * material.E / material.eta;
  if (step >= 2.0)
    throw NumericalError("forward_force unstable: dt*E/eta = " + std::to_string(step) + " >= 2");
  const auto v = velocity.values();
  std::vector<double> f(v.size());
  f[0] = f0;
  for (std::size_t k = 0; k + 1 < v.size(); ++k) f[k + 1] = f[k] + dt * material.E * (v[k] - f[k] / material.eta);
  return {velocity.with_values(std::move(f))};
}

/// v = f'/E + f/eta with f' from finite differences.
inline UniformSeries invert_force(const ForceProfile& force, const MaterialParams& material) {
  material.validate();
  const auto df = differentiate(force.f);
  const auto f = force.f.values();
  std::vector<double> v(f.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = df[i] / material.E + f[i] / material.eta;
  return force.f.with_values(std::move(v));
}

/// Blade-tip speed |(x', y', z')|; orientation does not enter.
inline UniformSeries tip_speed(const PoseTrajectory& traj) {
  traj.validate();
  const auto dx = differentiate(traj.series(Axis::X));
  const auto dy = differentiate(traj.series(Axis::Y));
  const auto dz = differentiate(traj.series(Axis::Z));
  std::vector<double> s(traj.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sqrt(dx[i] * dx[i] + dy[i] * dy[i] + dz[i] * dz[i]);
  return UniformSeries(std::move(s), traj.dt, traj.t0);
}

/// Runs a trajectory through the simulated material: tip speed plus process
/// noise drives the Maxwell element; measurement noise is added to the force.
inline ForceProfile execute_excision(const PoseTrajectory& traj, const MaterialParams& material,
                                     const SimNoise& noise) {
  material.validate();
  noise.validate();
  auto speed = tip_speed(traj).vec();
  if (noise.process_sigma > 0.0) {
    Rng rng = make_rng(noise.seed, stream::kProcessNoise);
    std::normal_distribution<double> g(0.0, noise.process_sigma);
    for (double& v : speed) v += g(rng);
  }
  auto force = forward_force(UniformSeries(std::move(speed), traj.dt, traj.t0), material).f.vec();
  if (noise.measure_sigma > 0.0) {
    Rng rng = make_rng(noise.seed, stream::kMeasureNoise);
    std::normal_distribution<double> g(0.0, noise.measure_sigma);
    for (double& f : force) f += g(rng);
  }
  return {UniformSeries(std::move(force), traj.dt, traj.t0)};
}

}  // namespace excision
