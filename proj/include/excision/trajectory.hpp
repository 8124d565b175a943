#pragma once

// Blade pose trajectories as nominal + behaviour components, and the
// rho-parameterised generator learned from labelled demonstrations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "excision/error.hpp"
#include "excision/random.hpp"
#include "excision/signal.hpp"

namespace excision {

inline constexpr double kRhoMin = 1.0;
inline constexpr double kRhoMax = 10.0;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

/// Sampling grid for generated trajectories.
struct TimeGrid {
  double dt = 0.01;
  double duration = 10.0;

  [[nodiscard]] std::size_t size() const {
    detail::require(dt > 0.0 && duration > 0.0, "TimeGrid needs positive dt and duration");
    return static_cast<std::size_t>(std::llround(duration / dt)) + 1;
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

enum class Axis { X, Y, Z, Roll, Pitch, Yaw };

/// Time-stamped 6-DoF blade poses (mm, rad) on a uniform grid.
struct PoseTrajectory {
  double dt = 0.01;
  double t0 = 0.0;
  std::vector<double> x, y, z, roll, pitch, yaw;

  [[nodiscard]] std::size_t size() const noexcept { return x.size(); }
  [[nodiscard]] double time(std::size_t i) const noexcept { return t0 + dt * static_cast<double>(i); }

  [[nodiscard]] const std::vector<double>& component(Axis a) const {
    switch (a) {
      case Axis::X: return x;
      case Axis::Y: return y;
      case Axis::Z: return z;
      case Axis::Roll: return roll;
      case Axis::Pitch: return pitch;
      case Axis::Yaw: return yaw;
    }
    throw InvalidParameter("unknown axis");
  }
  std::vector<double>& component(Axis a) {
    return const_cast<std::vector<double>&>(std::as_const(*this).component(a));
  }

  [[nodiscard]] UniformSeries series(Axis a) const { return UniformSeries(component(a), dt, t0); }

  void validate() const {
    detail::require(dt > 0.0 && std::isfinite(dt), "trajectory dt must be positive");
    detail::require(x.size() >= 2, "trajectory needs at least 2 samples");
    for (Axis a : {Axis::Y, Axis::Z, Axis::Roll, Axis::Pitch, Axis::Yaw})
      detail::require(component(a).size() == x.size(), "trajectory components differ in length");
    for (Axis a : {Axis::X, Axis::Y, Axis::Z, Axis::Roll, Axis::Pitch, Axis::Yaw}) {
      for (double v : component(a)) detail::require(std::isfinite(v), "trajectory contains non-finite values");
    }
    for (Axis a : {Axis::Roll, Axis::Pitch, Axis::Yaw}) {
      for (double v : component(a))
        detail::require(v > -std::numbers::pi && v <= std::numbers::pi, "trajectory angle outside (-pi, pi]");
    }
  }

  friend bool operator==(const PoseTrajectory&, const PoseTrajectory&) = default;
};

/// Low-frequency cutting path; same layout as a measured trajectory.
struct NominalTrajectory : PoseTrajectory {
  NominalTrajectory() = default;
  explicit NominalTrajectory(PoseTrajectory p) : PoseTrajectory(std::move(p)) {}
};

/// Scaling of the depth behaviour component onto x, y and pitch.
struct CouplingCoefficients {
  double cx = 0.2;
  double cy = 0.13;
  double cbeta = -1.2;

  friend bool operator==(const CouplingCoefficients&, const CouplingCoefficients&) = default;
};

/// Index of the apex of the nominal y parabola: the extremum lying
/// farthest from the midpoint of its endpoints.
inline std::size_t apex_index(std::span<const double> y) {
  detail::require(!y.empty(), "apex_index of empty series");
  const double mid = 0.5 * (y.front() + y.back());
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const auto pick = (std::abs(*hi - mid) >= std::abs(*lo - mid)) ? hi : lo;
  return static_cast<std::size_t>(pick - y.begin());
}

struct Decomposition {
  NominalTrajectory nominal;
  UniformSeries z_b;
};

/// Splits a measured trajectory into low-passed nominal axes and the depth
/// behaviour residual z_b = z_m - z_n.
inline Decomposition decompose(const PoseTrajectory& measured, double cutoff_hz) {
  measured.validate();
  PoseTrajectory nom;
  nom.dt = measured.dt;
  nom.t0 = measured.t0;
  for (Axis a : {Axis::X, Axis::Y, Axis::Z, Axis::Roll, Axis::Pitch, Axis::Yaw})
    nom.component(a) = lowpass_butterworth(measured.series(a), cutoff_hz).vec();
  std::vector<double> zb(measured.size());
  for (std::size_t i = 0; i < zb.size(); ++i) zb[i] = measured.z[i] - nom.z[i];
  return {NominalTrajectory(std::move(nom)), UniformSeries(std::move(zb), measured.dt, measured.t0)};
}

/// Applies the coupling model: x = x_n + cx zb, y = y_n +/- cy zb (sign
/// inverted from the y apex onward), pitch = pitch_n + cbeta zb, z = z_n + zb.
inline PoseTrajectory behaviour_to_pose(const NominalTrajectory& nominal, const UniformSeries& z_b,
                                        const CouplingCoefficients& coeffs) {
  const std::size_t n = nominal.size();
  if (z_b.size() != n)
    throw InvalidParameter("behaviour_to_pose: z_b has " + std::to_string(z_b.size()) + " samples, nominal has " +
                           std::to_string(n));
  const std::size_t apex = apex_index(nominal.y);
  PoseTrajectory out = nominal;
  for (std::size_t i = 0; i < n; ++i) {
    const double b = z_b[i];
    const double sy = i < apex ? 1.0 : -1.0;
    out.x[i] = nominal.x[i] + coeffs.cx * b;
    out.y[i] = nominal.y[i] + sy * coeffs.cy * b;
    out.z[i] = nominal.z[i] + b;
    out.pitch[i] = wrap_angle(nominal.pitch[i] + coeffs.cbeta * b);
  }
  return out;
}

/// Least-squares (through the origin) slopes of the x, signed y and pitch
/// residuals against z_b.
inline CouplingCoefficients fit_coupling(const PoseTrajectory& measured, const NominalTrajectory& nominal,
                                         const UniformSeries& z_b) {
  const std::size_t n = z_b.size();
  detail::require(measured.size() == n && nominal.size() == n, "fit_coupling: length mismatch");
  if (!(stddev(z_b.values()) > 0.0))
    throw SingularFit("fit_coupling: z_b has zero variance, coupling slopes are unidentifiable");
  const std::size_t apex = apex_index(nominal.y);
  double zz = 0.0, xz = 0.0, yz = 0.0, pz = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double b = z_b[i];
    const double sy = i < apex ? 1.0 : -1.0;
    zz += b * b;
    xz += (measured.x[i] - nominal.x[i]) * b;
    yz += sy * (measured.y[i] - nominal.y[i]) * b;
    pz += wrap_angle(measured.pitch[i] - nominal.pitch[i]) * b;
  }
  return {xz / zz, yz / zz, pz / zz};
}

// ---------------------------------------------------------------------------
// Behaviour model

/// value = slope * rho + intercept
struct LinearMap {
  double slope = 0.0;
  double intercept = 0.0;
  [[nodiscard]] double operator()(double rho) const noexcept { return slope * rho + intercept; }

  friend bool operator==(const LinearMap&, const LinearMap&) = default;
};

inline LinearMap fit_line(std::span<const double> xs, std::span<const double> ys) {
  detail::require(xs.size() == ys.size() && xs.size() >= 2, "fit_line needs >= 2 paired points");
  const double mx = mean(xs), my = mean(ys);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw SingularFit("fit_line: regressor has zero variance");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

/// Linear maps from rho to the AR(2) parameters and z_b amplitude (std).
struct BehaviourModel {
  RbfConfig rbf = RbfConfig::uniform(50);
  LinearMap a1, a2, c, sigma_eps, amplitude;

  [[nodiscard]] Ar2Params ar_at(double rho) const {
    return {a1(rho), a2(rho), c(rho), sigma_eps(rho)};
  }
};

struct Demonstration {
  PoseTrajectory trajectory;
  double rho = 1.0;
};

using DemonstrationSet = std::vector<Demonstration>;

inline void validate_demonstrations(const DemonstrationSet& demos) {
  std::set<double> labels;
  for (const auto& d : demos) {
    if (!(d.rho >= kRhoMin && d.rho <= kRhoMax))
      throw InvalidParameter("demonstration label " + std::to_string(d.rho) + " outside [1, 10]");
    labels.insert(d.rho);
  }
  if (labels.size() < 2) throw InvalidParameter("demonstration set needs at least 2 distinct labels");
}

/// Per demonstration: decompose, RBF-encode z_b, fit AR(2); then regress
/// each AR parameter and std(z_b) on the label.
inline BehaviourModel fit_behaviour_model(const DemonstrationSet& demos, const RbfConfig& rbf, double cutoff_hz) {
  validate_demonstrations(demos);
  rbf.validate();
  std::vector<double> rho, a1, a2, c, sig, amp;
  for (std::size_t k = 0; k < demos.size(); ++k) {
    try {
      const auto dec = decompose(demos[k].trajectory, cutoff_hz);
      const auto theta = rbf_encode(dec.z_b, rbf);
      const auto ar = fit_ar2(theta);
      rho.push_back(demos[k].rho);
      a1.push_back(ar.a1);
      a2.push_back(ar.a2);
      c.push_back(ar.c);
      sig.push_back(ar.sigma_eps);
      amp.push_back(stddev(dec.z_b.values()));
    } catch (const SingularFit& e) {
      throw SingularFit("demonstration " + std::to_string(k) + " (rho=" + std::to_string(demos[k].rho) +
                        "): " + e.what());
    }
  }
  BehaviourModel m;
  m.rbf = rbf;
  m.a1 = fit_line(rho, a1);
  m.a2 = fit_line(rho, a2);
  m.c = fit_line(rho, c);
  m.sigma_eps = fit_line(rho, sig);
  m.amplitude = fit_line(rho, amp);
  return m;
}

inline constexpr std::size_t kArBurnIn = 10;

/// Samples a behaviour component z_b of n samples at rho: AR(2) weights from
/// zero initial conditions (burn-in discarded), RBF-decoded and rescaled
/// about its mean to the predicted amplitude.
inline UniformSeries generate_behaviour(const BehaviourModel& model, double rho, std::size_t n, double dt,
                                        std::uint64_t seed, double t0 = 0.0) {
  if (!(rho >= kRhoMin && rho <= kRhoMax))
    throw InvalidParameter("rho " + std::to_string(rho) + " outside [1, 10]");
  const Ar2Params ar = model.ar_at(rho);
  if (!ar.stationary())
    throw NumericalError("behaviour model predicts a nonstationary AR(2) pair at rho=" + std::to_string(rho) +
                         " (a1=" + std::to_string(ar.a1) + ", a2=" + std::to_string(ar.a2) + ")");
  if (ar.sigma_eps < 0.0)
    throw NumericalError("behaviour model predicts negative innovation std at rho=" + std::to_string(rho));
  const double amp = model.amplitude(rho);
  if (amp < 0.0) throw NumericalError("behaviour model predicts negative amplitude at rho=" + std::to_string(rho));

  const std::size_t nb = model.rbf.size();
  Rng rng = make_rng(seed, stream::kGenerate);
  std::normal_distribution<double> innov(0.0, 1.0);
  std::vector<double> theta;
  theta.reserve(nb);
  double prev1 = 0.0, prev2 = 0.0;
  for (std::size_t i = 0; i < kArBurnIn + nb; ++i) {
    const double next = ar.c + ar.a1 * prev1 + ar.a2 * prev2 + ar.sigma_eps * innov(rng);
    prev2 = prev1;
    prev1 = next;
    if (i >= kArBurnIn) theta.push_back(next);
  }
  auto zb = rbf_decode(theta, model.rbf, n, dt, t0).vec();
  const double m = mean(zb);
  const double s = stddev(zb);
  if (s > 0.0) {
    for (double& v : zb) v = m + (v - m) * (amp / s);
  }
  return UniformSeries(std::move(zb), dt, t0);
}

/// Full pose trajectory for behaviour parameter rho on a fixed nominal path.
inline PoseTrajectory generate(const BehaviourModel& model, double rho, const NominalTrajectory& nominal,
                               const CouplingCoefficients& coeffs, std::uint64_t seed) {
  nominal.validate();
  const auto zb = generate_behaviour(model, rho, nominal.size(), nominal.dt, seed, nominal.t0);
  return behaviour_to_pose(nominal, zb, coeffs);
}

// ---------------------------------------------------------------------------
// Synthetic demonstrations

/// Shape of the synthetic excision used in place of recorded demonstrations.
struct SynthShape {
  double x_travel = 30.0;        // mm, linear
  double y_apex = 15.0;          // mm, parabola height
  double z_depth = 4.0;          // mm, dish depth
  double pitch_base = 0.35;      // rad
  double pitch_drift = 0.03;     // rad over the cut
  double saw_amplitude = 1.0;    // mm, sawing amplitude at rho = 1
  double saw_floor = 0.1;        // amplitude fraction remaining at rho = 10
  double saw_freq_hz = 1.8;
  double phase_diffusion = 2.0;  // rad / sqrt(s) at rho = 1
  double ragged_floor = 0.2;     // raggedness fraction remaining at rho = 10

  friend bool operator==(const SynthShape&, const SynthShape&) = default;
};

/// Analytic nominal cut: linear x, parabolic y, shallow-dish z, near-constant pitch.
inline NominalTrajectory synth_nominal(const TimeGrid& grid, const SynthShape& shape = {}) {
  const std::size_t n = grid.size();
  PoseTrajectory p;
  p.dt = grid.dt;
  p.t0 = 0.0;
  p.x.resize(n);
  p.y.resize(n);
  p.z.resize(n);
  p.pitch.resize(n);
  p.roll.assign(n, 0.0);
  p.yaw.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n - 1);
    const double s = 2.0 * u - 1.0;
    p.x[i] = shape.x_travel * u;
    p.y[i] = shape.y_apex * (1.0 - s * s);
    p.z[i] = -shape.z_depth * (1.0 - s * s);
    p.pitch[i] = shape.pitch_base + shape.pitch_drift * s;
  }
  return NominalTrajectory(std::move(p));
}

/// Sawing oscillation whose amplitude and raggedness shrink linearly in rho.
inline std::vector<double> synth_sawing(double rho, std::size_t n, double dt, Rng& rng,
                                        const SynthShape& shape = {}) {
  const double u = (rho - kRhoMin) / (kRhoMax - kRhoMin);
  const double amp = shape.saw_amplitude * (1.0 - (1.0 - shape.saw_floor) * u);
  const double ragged = 1.0 - (1.0 - shape.ragged_floor) * u;
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> ph(0.0, 2.0 * std::numbers::pi);
  double phase = ph(rng);
  const double am_phase = ph(rng);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = dt * static_cast<double>(i);
    const double envelope = 1.0 + 0.3 * ragged * std::sin(2.0 * std::numbers::pi * 0.23 * t + am_phase);
    out[i] = amp * envelope * std::sin(phase);
    phase += 2.0 * std::numbers::pi * shape.saw_freq_hz * dt + ragged * shape.phase_diffusion * std::sqrt(dt) * g(rng);
  }
  return out;
}

/// n demonstrations with labels evenly spaced on [1, 10], built from the
/// analytic nominal plus a sawing component coupled onto x, y, pitch.
inline DemonstrationSet synth_demonstrations(std::size_t n, const TimeGrid& grid, std::uint64_t seed,
                                             const SynthShape& shape = {}) {
  detail::require(n >= 2, "synth_demonstrations needs n >= 2");
  const auto nominal = synth_nominal(grid, shape);
  const CouplingCoefficients coeffs{};
  Rng rng = make_rng(seed, stream::kDemo);
  DemonstrationSet demos;
  demos.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double rho = kRhoMin + (kRhoMax - kRhoMin) * static_cast<double>(k) / static_cast<double>(n - 1);
    auto zb = synth_sawing(rho, nominal.size(), grid.dt, rng, shape);
    demos.push_back({behaviour_to_pose(nominal, UniformSeries(std::move(zb), grid.dt), coeffs), rho});
  }
  return demos;
}

}  // namespace excision
