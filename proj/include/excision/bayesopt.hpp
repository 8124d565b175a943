#pragma once

// One-dimensional Bayesian optimisation over rho: Matérn GP surrogate,
// Expected Improvement, dense-grid acquisition maximisation.

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "excision/error.hpp"
#include "excision/signal.hpp"

namespace excision {

struct KernelParams {
  double nu = 2.5;
  double length_scale = 1.0;
  double signal_var = 1.0;

  void validate() const {
    if (nu != 0.5 && nu != 1.5 && nu != 2.5)
      throw InvalidParameter("Matérn nu=" + std::to_string(nu) + " unsupported; closed forms exist for 0.5, 1.5, 2.5");
    detail::require(std::isfinite(length_scale) && length_scale > 0.0, "kernel length-scale must be positive");
    detail::require(std::isfinite(signal_var) && signal_var >= 0.0, "kernel signal variance must be >= 0");
  }

  friend bool operator==(const KernelParams&, const KernelParams&) = default;
};

/// Matérn covariance in closed form for half-integer nu.
inline double matern_kernel(double rho_i, double rho_j, const KernelParams& p) {
  p.validate();
  const double r = std::abs(rho_i - rho_j) / p.length_scale;
  if (p.nu == 0.5) return p.signal_var * std::exp(-r);
  if (p.nu == 1.5) {
    const double s = std::sqrt(3.0) * r;
    return p.signal_var * (1.0 + s) * std::exp(-s);
  }
  const double s = std::sqrt(5.0) * r;
  return p.signal_var * (1.0 + s + 5.0 * r * r / 3.0) * std::exp(-s);
}

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

struct Observation {
  double rho = 0.0;
  double y = 0.0;
};

struct Posterior {
  double mean = 0.0;
  double std = 0.0;
};

inline constexpr double kGramJitter = 1e-8;

/// GP conditioned on observations. Targets are centred (and, with
/// `standardise`, scaled to unit variance) before conditioning; posterior
/// moments are reported back in raw units.
class GpModel {
 public:
  GpModel(std::vector<Observation> obs, KernelParams kernel, double noise_var = 1e-2, bool standardise = true)
      : obs_(std::move(obs)), kernel_(kernel), noise_var_(noise_var) {
    kernel_.validate();
    if (obs_.empty()) throw InvalidParameter("GpModel needs at least one observation");
    detail::require(std::isfinite(noise_var_) && noise_var_ >= 0.0, "GP noise variance must be >= 0");
    std::vector<double> ys;
    for (const auto& o : obs_) {
      detail::require(std::isfinite(o.rho) && std::isfinite(o.y), "GP observations must be finite");
      ys.push_back(o.y);
    }
    y_mean_ = mean(ys);
    const double s = stddev(ys);
    y_scale_ = (standardise && s > 0.0) ? s : 1.0;

    const auto n = static_cast<Eigen::Index>(obs_.size());
    Eigen::MatrixXd gram(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        gram(i, j) = matern_kernel(obs_[static_cast<std::size_t>(i)].rho, obs_[static_cast<std::size_t>(j)].rho, kernel_);
    gram.diagonal().array() += noise_var_;
    chol_.compute(gram);
    // Jitter only when the factor is missing or near-singular, so noiseless fits interpolate exactly.
    const double diag_max = gram.diagonal().maxCoeff();
    if (chol_.info() != Eigen::Success ||
        chol_.matrixLLT().diagonal().array().square().minCoeff() < kGramJitter * diag_max) {
      gram.diagonal().array() += kGramJitter;
      chol_.compute(gram);
    }
    if (chol_.info() != Eigen::Success)
      throw NumericalError("GP gram matrix is not positive definite after jitter (n=" + std::to_string(n) +
                           ", noise_var=" + std::to_string(noise_var_) + "); check for duplicate rho with zero noise");
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = (ys[static_cast<std::size_t>(i)] - y_mean_) / y_scale_;
    alpha_ = chol_.solve(y);
  }

  [[nodiscard]] const std::vector<Observation>& observations() const noexcept { return obs_; }
  [[nodiscard]] const KernelParams& kernel() const noexcept { return kernel_; }
  [[nodiscard]] double noise_var() const noexcept { return noise_var_; }
  [[nodiscard]] double y_mean() const noexcept { return y_mean_; }
  [[nodiscard]] double y_scale() const noexcept { return y_scale_; }

  /// Posterior in the normalised target space.
  [[nodiscard]] Posterior posterior_normalised(double rho) const {
    const auto n = static_cast<Eigen::Index>(obs_.size());
    Eigen::VectorXd kstar(n);
    for (Eigen::Index i = 0; i < n; ++i) kstar(i) = matern_kernel(rho, obs_[static_cast<std::size_t>(i)].rho, kernel_);
    const double m = kstar.dot(alpha_);
    const Eigen::VectorXd v = chol_.matrixL().solve(kstar);
    const double var = matern_kernel(rho, rho, kernel_) - v.squaredNorm();
    return {m, std::sqrt(std::max(var, 0.0))};
  }

  [[nodiscard]] Posterior posterior(double rho) const {
    const auto p = posterior_normalised(rho);
    return {y_mean_ + y_scale_ * p.mean, y_scale_ * p.std};
  }

 private:
  std::vector<Observation> obs_;
  KernelParams kernel_;
  double noise_var_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
};

inline Posterior gp_posterior(const GpModel& model, double rho) { return model.posterior(rho); }

/// alpha = (m - best - eps) Phi(Z) + s phi(Z), with Z = (m - best - eps)/s
/// for s > 0 and Z = 0 when s = 0.
inline double expected_improvement(double mean, double std, double best, double epsilon) {
  detail::require(std >= 0.0, "expected_improvement: std must be >= 0");
  const double d = mean - best - epsilon;
  const double z = std > 0.0 ? d / std : 0.0;
  return d * normal_cdf(z) + std * normal_pdf(z);
}

// ---------------------------------------------------------------------------
// BO loop

struct BoConfig {
  double epsilon = 2.0;
  double rho_lo = 1.0;
  double rho_hi = 10.0;
  std::size_t grid_points = 1000;
  KernelParams kernel{};
  double noise_var = 1e-2;

  void validate() const {
    kernel.validate();
    detail::require(rho_lo >= 1.0 && rho_hi <= 10.0 && rho_lo < rho_hi, "BO domain must lie inside [1, 10]");
    detail::require(grid_points >= 2, "BO grid needs at least 2 points");
    detail::require(std::isfinite(epsilon), "BO epsilon must be finite");
    detail::require(noise_var >= 0.0, "BO noise variance must be >= 0");
  }

  [[nodiscard]] double grid_at(std::size_t j) const {
    return rho_lo + (rho_hi - rho_lo) * static_cast<double>(j) / static_cast<double>(grid_points - 1);
  }

  friend bool operator==(const BoConfig&, const BoConfig&) = default;
};

struct BoRecord {
  std::size_t iter = 0;
  double rho = 0.0;
  double y = 0.0;
  double incumbent_rho = 0.0;
  double incumbent_y = 0.0;
};

struct BoState {
  std::vector<BoRecord> history;
  double epsilon = 2.0;
  std::size_t budget = 0;
  std::optional<std::string> failure;  // set when an objective evaluation aborted the run

  [[nodiscard]] bool empty() const noexcept { return history.empty(); }
  [[nodiscard]] Observation incumbent() const {
    detail::require(!history.empty(), "BoState has no observations");
    return {history.back().incumbent_rho, history.back().incumbent_y};
  }
  [[nodiscard]] std::vector<Observation> observations() const {
    std::vector<Observation> o;
    for (const auto& r : history) o.push_back({r.rho, r.y});
    return o;
  }
};

/// EI in normalised target units, so epsilon is independent of the objective's scale.
inline double acquisition(const GpModel& model, double rho, double best_raw, double epsilon) {
  const auto p = model.posterior_normalised(rho);
  const double best = (best_raw - model.y_mean()) / model.y_scale();
  return expected_improvement(p.mean, p.std, best, epsilon);
}

/// Grid argmax of EI; ties (to 1e-12 relative) go to the smaller rho. A
/// winner coinciding with an observed rho moves to the nearest unobserved
/// neighbouring grid point, upward first.
inline double propose_next(const GpModel& model, const BoState& state, const BoConfig& cfg) {
  cfg.validate();
  const double best = state.incumbent().y;
  std::size_t arg = 0;
  double best_ei = acquisition(model, cfg.grid_at(0), best, cfg.epsilon);
  for (std::size_t j = 1; j < cfg.grid_points; ++j) {
    const double ei = acquisition(model, cfg.grid_at(j), best, cfg.epsilon);
    if (ei > best_ei + 1e-12 * std::max(1.0, std::abs(best_ei))) {
      best_ei = ei;
      arg = j;
    }
  }
  auto observed = [&](double rho) {
    for (const auto& r : state.history)
      if (r.rho == rho) return true;
    return false;
  };
  if (!observed(cfg.grid_at(arg))) return cfg.grid_at(arg);
  for (std::size_t step = 1; step < cfg.grid_points; ++step) {
    if (arg + step < cfg.grid_points && !observed(cfg.grid_at(arg + step))) return cfg.grid_at(arg + step);
    if (arg >= step && !observed(cfg.grid_at(arg - step))) return cfg.grid_at(arg - step);
  }
  throw InvalidParameter("propose_next: every grid point has already been observed");
}

using Objective = std::function<double(double rho)>;
/// Called after each observation with the GP fitted to the history so far.
using BoObserver = std::function<void(const BoState&, const GpModel&)>;

/// Sequential BO: evaluate init_rho, then budget-1 proposals. An objective
/// failure stops the loop; the partial history is returned with `failure` set.
inline BoState run_bo(const Objective& objective, std::size_t budget, double init_rho, const BoConfig& cfg,
                      const BoObserver& observer = {}) {
  cfg.validate();
  detail::require(budget >= 1, "BO budget must be >= 1");
  if (!(init_rho >= cfg.rho_lo && init_rho <= cfg.rho_hi))
    throw InvalidParameter("initial rho " + std::to_string(init_rho) + " outside the BO domain");
  BoState state;
  state.epsilon = cfg.epsilon;
  state.budget = budget;
  double rho = init_rho;
  for (std::size_t iter = 1; iter <= budget; ++iter) {
    double y;
    try {
      y = objective(rho);
    } catch (const std::exception& e) {
      state.failure = "iteration " + std::to_string(iter) + " at rho=" + std::to_string(rho) + ": " + e.what();
      return state;
    }
    BoRecord rec{iter, rho, y, rho, y};
    if (!state.history.empty()) {
      const auto inc = state.incumbent();
      if (!(y > inc.y)) {
        rec.incumbent_rho = inc.rho;
        rec.incumbent_y = inc.y;
      }
    }
    state.history.push_back(rec);
    const GpModel gp(state.observations(), cfg.kernel, cfg.noise_var);
    if (observer) observer(state, gp);
    if (iter < budget) rho = propose_next(gp, state, cfg);
  }
  return state;
}

}  // namespace excision
