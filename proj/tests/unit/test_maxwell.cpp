#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "excision/maxwell.hpp"
#include "oracles.hpp"

using namespace excision;

namespace {

const BehaviourModel& default_model() {
  static const BehaviourModel m =
      fit_behaviour_model(synth_demonstrations(10, TimeGrid{}, 7), RbfConfig::uniform(50), 0.6);
  return m;
}

/// Smooth random velocity: a few low-frequency tones with seeded phases.
std::vector<double> smooth_velocity(std::size_t n, double dt, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> ph(0.0, 2 * std::numbers::pi), amp(0.5, 2.0);
  const double a1 = amp(rng), a2 = amp(rng), p1 = ph(rng), p2 = ph(rng);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = dt * static_cast<double>(i);
    v[i] = 3.0 + a1 * std::sin(2 * std::numbers::pi * 0.2 * t + p1) + a2 * std::sin(2 * std::numbers::pi * 0.5 * t + p2);
  }
  return v;
}

}  // namespace

TEST(ForwardForce, SteadyStateIsEtaTimesSpeed) {
  const MaterialParams m{5.0, 2.0};
  const auto f = forward_force(UniformSeries(std::vector<double>(2000, 4.0), 0.01), m);
  EXPECT_NEAR(f.f.values().back(), m.eta * 4.0, 0.01 * m.eta * 4.0);
}

TEST(ForwardForce, SteadyStateForRandomMaterials) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0.5, 10.0);
  for (int k = 0; k < 20; ++k) {
    const MaterialParams m{u(rng), u(rng)};
    const double dt = std::min(0.01, 0.5 * m.eta / m.E);
    const double v = u(rng);
    const auto n = static_cast<std::size_t>(std::ceil(6.0 * m.relaxation_time() / dt)) + 2;
    const auto f = forward_force(UniformSeries(std::vector<double>(n, v), dt), m);
    EXPECT_NEAR(f.f.values().back(), m.eta * v, 0.01 * m.eta * v);
  }
}

TEST(ForwardForce, RelaxesExponentially) {
  const MaterialParams m{5.0, 2.0};
  const double dt = 0.001;
  const auto f = forward_force(UniformSeries(std::vector<double>(3000, 0.0), dt), m, 1.0);
  for (std::size_t i = 0; i < f.f.size(); i += 100) {
    const double exact = std::exp(-m.E * dt * static_cast<double>(i) / m.eta);
    EXPECT_NEAR(f.f[i], exact, 0.01 * exact + 1e-12);
  }
}

TEST(ForwardForce, MatchesFineStepReference) {
  const MaterialParams m{5.0, 2.0};
  const double dt = 0.01;
  const std::size_t n = 1001;
  auto v = [](double t) { return 2.0 + std::sin(2 * std::numbers::pi * 0.5 * t); };
  std::vector<double> vs(n);
  for (std::size_t i = 0; i < n; ++i) vs[i] = v(dt * static_cast<double>(i));
  const auto f = forward_force(UniformSeries(vs, dt), m).f.vec();
  // Reference: RK4 at dt/100 with the continuous velocity.
  std::vector<double> ref(n);
  double y = 0.0;
  const double h = dt / 100;
  auto rhs = [&](double t, double fy) { return m.E * (v(t) - fy / m.eta); };
  for (std::size_t i = 0; i < n; ++i) {
    ref[i] = y;
    for (int s = 0; s < 100; ++s) {
      const double t = dt * static_cast<double>(i) + h * s;
      const double k1 = rhs(t, y), k2 = rhs(t + h / 2, y + h * k1 / 2), k3 = rhs(t + h / 2, y + h * k2 / 2),
                   k4 = rhs(t + h, y + h * k3);
      y += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6;
    }
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (f[i] - ref[i]) * (f[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  EXPECT_LT(std::sqrt(num / den), 0.01);
}

TEST(ForwardForce, IsLinearInSpeed) {
  const MaterialParams m{};
  const auto v = smooth_velocity(500, 0.01, 3);
  std::vector<double> v2(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) v2[i] = 2.0 * v[i];
  const auto a = forward_force(UniformSeries(v, 0.01), m).f.vec();
  const auto b = forward_force(UniformSeries(v2, 0.01), m).f.vec();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b[i], 2.0 * a[i]);
}

TEST(ForwardForce, UnstableStepIsRejected) {
  EXPECT_THROW(forward_force(UniformSeries(std::vector<double>(10, 1.0), 1.0), MaterialParams{5.0, 2.0}),
               NumericalError);
}

TEST(InvertForce, ConstantForceGivesConstantSpeed) {
  const MaterialParams m{};
  const auto v = invert_force({UniformSeries(std::vector<double>(100, m.eta * 3.0), 0.01)}, m);
  for (double x : v.values()) EXPECT_NEAR(x, 3.0, 1e-9);
}

TEST(InvertForce, ZeroForceGivesZeroSpeed) {
  const auto v = invert_force({UniformSeries(std::vector<double>(50, 0.0), 0.01)}, MaterialParams{});
  for (double x : v.values()) EXPECT_EQ(x, 0.0);
}

TEST(InvertForce, InvertsForwardOnSmoothInputs) {
  const MaterialParams m{};
  for (std::uint32_t seed = 0; seed < 20; ++seed) {
    const auto v = smooth_velocity(1001, 0.01, seed);
    const auto back = invert_force(forward_force(UniformSeries(v, 0.01), m), m).vec();
    EXPECT_LT(oracle::rmse(back, v, 1, 1), 0.02 * oracle::range(v)) << "seed " << seed;
  }
}

TEST(TipSpeed, IsNormOfPositionDerivative) {
  auto p = synth_nominal(TimeGrid{});
  const auto s = tip_speed(p);
  // Interior samples: x linear at 3 mm/s plus parabolic y and z.
  const std::size_t i = 250;
  const double dx = (p.x[i + 1] - p.x[i - 1]) / (2 * p.dt);
  const double dy = (p.y[i + 1] - p.y[i - 1]) / (2 * p.dt);
  const double dz = (p.z[i + 1] - p.z[i - 1]) / (2 * p.dt);
  EXPECT_NEAR(s[i], std::sqrt(dx * dx + dy * dy + dz * dz), 1e-12);
}

TEST(ExecuteExcision, StationaryToolGivesZeroForce) {
  PoseTrajectory p;
  p.x.assign(300, 1.0);
  p.y.assign(300, 2.0);
  p.z.assign(300, -0.5);
  p.roll.assign(300, 0.0);
  p.pitch.assign(300, 0.2);
  p.yaw.assign(300, 0.0);
  const auto f = execute_excision(p, MaterialParams{}, SimNoise{0.0, 0.0, 1});
  for (double v : f.f.values()) EXPECT_EQ(v, 0.0);
}

TEST(ExecuteExcision, IsDeterministic) {
  const auto t = generate(default_model(), 4.0, synth_nominal(TimeGrid{}), {}, 3);
  const SimNoise nz{0.1, 0.05, 17};
  EXPECT_EQ(execute_excision(t, MaterialParams{}, nz).f.vec(), execute_excision(t, MaterialParams{}, nz).f.vec());
}

TEST(ExecuteExcision, IgnoresRollAndYaw) {
  auto a = generate(default_model(), 4.0, synth_nominal(TimeGrid{}), {}, 3);
  auto b = a;
  for (std::size_t i = 0; i < b.size(); ++i) {
    b.roll[i] = 0.3 * std::sin(0.01 * static_cast<double>(i));
    b.yaw[i] = -0.7;
  }
  const SimNoise nz{0.0, 0.0, 1};
  EXPECT_EQ(execute_excision(a, MaterialParams{}, nz).f.vec(), execute_excision(b, MaterialParams{}, nz).f.vec());
}

TEST(ExecuteExcision, SawingSpreadsForce) {
  const auto nom = synth_nominal(TimeGrid{});
  int wins = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const SimNoise nz{0.1, 0.05, s};
    const auto f1 = execute_excision(generate(default_model(), 1.0, nom, {}, s), MaterialParams{}, nz).f.vec();
    const auto f10 = execute_excision(generate(default_model(), 10.0, nom, {}, s), MaterialParams{}, nz).f.vec();
    wins += oracle::sd(f1) > oracle::sd(f10);
  }
  EXPECT_GE(wins, 18);
}
