#pragma once

// Signal primitives shared by the trajectory model and the force pipeline:
// a uniformly sampled series, a first-order low-pass, finite differences,
// normalised Gaussian RBF encoding and AR(2) regression.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "excision/error.hpp"

namespace excision {

/// Uniformly sampled real signal. Construction enforces length >= 2,
/// dt > 0 and finite samples.
class UniformSeries {
 public:
  UniformSeries(std::vector<double> values, double dt, double t0 = 0.0)
      : values_(std::move(values)), dt_(dt), t0_(t0) {
    detail::require(values_.size() >= 2,
                    "UniformSeries needs at least 2 samples, got " + std::to_string(values_.size()));
    detail::require(std::isfinite(dt_) && dt_ > 0.0, "UniformSeries dt must be positive and finite");
    detail::require(std::isfinite(t0_), "UniformSeries t0 must be finite");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i]))
        throw InvalidParameter("UniformSeries sample " + std::to_string(i) + " is not finite");
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] double dt() const noexcept { return dt_; }
  [[nodiscard]] double t0() const noexcept { return t0_; }
  [[nodiscard]] double time(std::size_t i) const noexcept { return t0_ + dt_ * static_cast<double>(i); }
  [[nodiscard]] double duration() const noexcept { return dt_ * static_cast<double>(values_.size() - 1); }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
  [[nodiscard]] const std::vector<double>& vec() const noexcept { return values_; }
  [[nodiscard]] double operator[](std::size_t i) const noexcept { return values_[i]; }

  /// Same grid, new samples.
  [[nodiscard]] UniformSeries with_values(std::vector<double> v) const {
    return UniformSeries(std::move(v), dt_, t0_);
  }

 private:
  std::vector<double> values_;
  double dt_;
  double t0_;
};

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Population standard deviation.
inline double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

// ---------------------------------------------------------------------------
// Filtering and differentiation

/// Causal first-order Butterworth low-pass, bilinear transform with the
/// cutoff prewarped so the discrete magnitude is exactly 1/sqrt(2) at
/// cutoff_hz. The filter state starts at rest on the first sample, so a
/// constant input passes through unchanged.
inline UniformSeries lowpass_butterworth(const UniformSeries& series, double cutoff_hz) {
  const double nyquist = 0.5 / series.dt();
  if (!(cutoff_hz > 0.0))
    throw InvalidParameter("lowpass cutoff must be positive, got " + std::to_string(cutoff_hz));
  if (!(cutoff_hz < nyquist))
    throw InvalidParameter("lowpass cutoff " + std::to_string(cutoff_hz) + " Hz is at/above Nyquist " +
                           std::to_string(nyquist) + " Hz");

  const double k = std::tan(std::numbers::pi * cutoff_hz * series.dt());
  const double b = k / (1.0 + k);
  const double a = (k - 1.0) / (k + 1.0);

  const auto x = series.values();
  std::vector<double> y(x.size());
  double x_prev = x[0];
  double y_prev = x[0];
  for (std::size_t n = 0; n < x.size(); ++n) {
    y[n] = b * (x[n] + x_prev) - a * y_prev;
    x_prev = x[n];
    y_prev = y[n];
  }
  return series.with_values(std::move(y));
}

/// Central differences in the interior, first-order one-sided at both ends.
inline UniformSeries differentiate(const UniformSeries& series) {
  const std::size_t n = series.size();
  if (n < 3) throw InvalidParameter("differentiate needs at least 3 samples, got " + std::to_string(n));
  const auto v = series.values();
  const double dt = series.dt();
  std::vector<double> d(n);
  d.front() = (v[1] - v[0]) / dt;
  d.back() = (v[n - 1] - v[n - 2]) / dt;
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (v[i + 1] - v[i - 1]) / (2.0 * dt);
  return series.with_values(std::move(d));
}

// ---------------------------------------------------------------------------
// Normalised Gaussian RBF encoding

/// Basis placement over normalised time [0, 1]: psi_i(s) = exp(-h_i (s - c_i)^2).
struct RbfConfig {
  std::vector<double> centres;
  std::vector<double> widths;

  [[nodiscard]] std::size_t size() const noexcept { return centres.size(); }

  /// n centres spread uniformly on [0,1]; neighbouring bases cross at 0.5.
  static RbfConfig uniform(std::size_t n) {
    detail::require(n >= 2, "RBF basis count must be >= 2");
    RbfConfig cfg;
    cfg.centres.resize(n);
    const double spacing = 1.0 / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) cfg.centres[i] = spacing * static_cast<double>(i);
    const double h = std::numbers::ln2 / ((spacing / 2.0) * (spacing / 2.0));
    cfg.widths.assign(n, h);
    return cfg;
  }

  /// Checks count, width positivity and centre range. Centre ordering is
  /// checked by the encoder, where coincident centres surface as a singular fit.
  void validate() const {
    detail::require(centres.size() >= 2, "RBF basis count must be >= 2");
    detail::require(widths.size() == centres.size(), "RBF widths and centres differ in length");
    for (double h : widths) detail::require(std::isfinite(h) && h > 0.0, "RBF widths must be positive");
    for (double c : centres) detail::require(std::isfinite(c), "RBF centres must be finite");
  }
};

namespace detail {

/// Row-normalised design matrix: entry (k, i) = psi_i(s_k) / sum_j psi_j(s_k).
inline Eigen::MatrixXd rbf_design(const RbfConfig& cfg, std::size_t n_samples) {
  const auto nb = static_cast<Eigen::Index>(cfg.size());
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(n_samples), nb);
  const double denom = n_samples > 1 ? static_cast<double>(n_samples - 1) : 1.0;
  for (Eigen::Index k = 0; k < phi.rows(); ++k) {
    const double s = static_cast<double>(k) / denom;
    // Shift exponents by their minimum so far-away bases never underflow to 0/0.
    double min_e = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < nb; ++i) {
      const double d = s - cfg.centres[static_cast<std::size_t>(i)];
      min_e = std::min(min_e, cfg.widths[static_cast<std::size_t>(i)] * d * d);
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < nb; ++i) {
      const double d = s - cfg.centres[static_cast<std::size_t>(i)];
      const double psi = std::exp(-(cfg.widths[static_cast<std::size_t>(i)] * d * d - min_e));
      phi(k, i) = psi;
      total += psi;
    }
    phi.row(k) /= total;
  }
  return phi;
}

}  // namespace detail

/// Least-squares weights of the normalised-RBF reconstruction of `series`.
inline std::vector<double> rbf_encode(const UniformSeries& series, const RbfConfig& config) {
  config.validate();
  const std::size_t nb = config.size();
  if (series.size() < nb)
    throw InvalidParameter("rbf_encode needs at least " + std::to_string(nb) + " samples, got " +
                           std::to_string(series.size()));
  for (std::size_t i = 1; i < nb; ++i) {
    if (!(config.centres[i] > config.centres[i - 1]))
      throw SingularFit("RBF design is rank-deficient: centres " + std::to_string(i - 1) + " and " +
                        std::to_string(i) + " are not strictly increasing");
  }
  const Eigen::MatrixXd phi = detail::rbf_design(config, series.size());
  const Eigen::Map<const Eigen::VectorXd> z(series.values().data(), static_cast<Eigen::Index>(series.size()));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(phi);
  qr.setThreshold(1e-12);
  if (qr.rank() < phi.cols())
    throw SingularFit("RBF design is rank-deficient (rank " + std::to_string(qr.rank()) + " of " +
                      std::to_string(phi.cols()) + ")");
  const Eigen::VectorXd theta = qr.solve(z);
  return {theta.data(), theta.data() + theta.size()};
}

/// Evaluates sum(psi_i theta_i) / sum(psi_i) on n_samples uniform points of [0,1],
/// returned on the physical grid (dt, t0).
inline UniformSeries rbf_decode(std::span<const double> theta, const RbfConfig& config, std::size_t n_samples,
                                double dt = 1.0, double t0 = 0.0) {
  config.validate();
  if (theta.size() != config.size())
    throw InvalidParameter("rbf_decode: weight count " + std::to_string(theta.size()) + " != basis count " +
                           std::to_string(config.size()));
  detail::require(n_samples >= 2, "rbf_decode needs n_samples >= 2");
  const Eigen::MatrixXd phi = detail::rbf_design(config, n_samples);
  const Eigen::Map<const Eigen::VectorXd> w(theta.data(), static_cast<Eigen::Index>(theta.size()));
  const Eigen::VectorXd z = phi * w;
  return UniformSeries({z.data(), z.data() + z.size()}, dt, t0);
}

// ---------------------------------------------------------------------------
// AR(2)

struct Ar2Params {
  double a1 = 0.0;
  double a2 = 0.0;
  double c = 0.0;
  double sigma_eps = 0.0;

  /// Roots of 1 - a1 L - a2 L^2 lie outside the unit circle.
  [[nodiscard]] bool stationary() const noexcept {
    return a2 > -1.0 && a2 < 1.0 - a1 && a2 < 1.0 + a1;
  }
};

/// Ordinary least squares for theta_i = c + a1 theta_{i-1} + a2 theta_{i-2}.
///
/// When the lag-2 column is collinear with the intercept and lag-1 columns
/// (an exactly first-order sequence) the regression drops to AR(1) with
/// a2 = 0, the minimal model reproducing the data. A constant sequence
/// leaves even AR(1) unidentified and is reported as a singular fit.
inline Ar2Params fit_ar2(std::span<const double> theta) {
  const std::size_t n = theta.size();
  if (n < 8) throw InvalidParameter("fit_ar2 needs at least 8 weights, got " + std::to_string(n));
  for (double v : theta) detail::require(std::isfinite(v), "fit_ar2: weights must be finite");

  const auto m = static_cast<Eigen::Index>(n - 2);
  Eigen::MatrixXd design(m, 3);
  Eigen::VectorXd target(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = static_cast<std::size_t>(r) + 2;
    design(r, 0) = 1.0;
    design(r, 1) = theta[i - 1];
    design(r, 2) = theta[i - 2];
    target(r) = theta[i];
  }

  const double scale = std::max(1.0, design.cwiseAbs().maxCoeff());
  auto solve = [&](const Eigen::MatrixXd& a) -> std::pair<bool, Eigen::VectorXd> {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-10 / scale);
    if (qr.rank() < a.cols()) return {false, {}};
    return {true, qr.solve(target)};
  };

  Ar2Params p;
  Eigen::VectorXd resid;
  if (auto [ok, coef] = solve(design); ok) {
    p.c = coef(0);
    p.a1 = coef(1);
    p.a2 = coef(2);
    resid = target - design * coef;
  } else if (auto [ok1, coef1] = solve(design.leftCols(2)); ok1) {
    p.c = coef1(0);
    p.a1 = coef1(1);
    p.a2 = 0.0;
    resid = target - design.leftCols(2) * coef1;
  } else {
    throw SingularFit(
        "fit_ar2: weight sequence is constant, so the lagged regressors are collinear with the "
        "intercept and no autoregression is identifiable");
  }
  const double dof = std::max<double>(1.0, static_cast<double>(m) - 3.0);
  p.sigma_eps = std::sqrt(resid.squaredNorm() / dof);
  return p;
}

}  // namespace excision
