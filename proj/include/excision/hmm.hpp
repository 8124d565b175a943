#pragma once

// Gaussian-emission hidden Markov model over scalar blade velocity,
// fitted by Baum-Welch with scaled forward-backward recursions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "excision/error.hpp"
#include "excision/random.hpp"
#include "excision/signal.hpp"

namespace excision {

using Matrix = std::vector<std::vector<double>>;

struct StationaryResult {
  std::vector<double> pi;
  bool fallback = false;  // Q reducible; pi is the empirical occupancy
};

namespace detail {

inline bool irreducible(const Matrix& q) {
  const std::size_t k = q.size();
  for (std::size_t s = 0; s < k; ++s) {
    std::vector<bool> seen(k, false);
    std::vector<std::size_t> stack{s};
    seen[s] = true;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < k; ++j) {
        if (q[i][j] > 0.0 && !seen[j]) {
          seen[j] = true;
          stack.push_back(j);
        }
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) return false;
  }
  return true;
}

inline void check_stochastic(const Matrix& q) {
  detail::require(!q.empty(), "transition matrix is empty");
  for (const auto& row : q) {
    detail::require(row.size() == q.size(), "transition matrix must be square");
    double s = 0.0;
    for (double v : row) {
      detail::require(std::isfinite(v) && v >= 0.0, "transition matrix has negative or non-finite entries");
      s += v;
    }
    detail::require(std::abs(s - 1.0) < 1e-9, "transition matrix rows must sum to 1");
  }
}

}  // namespace detail

/// Left eigenvector of Q for eigenvalue 1, normalised to sum 1. A reducible Q
/// has no unique answer; `occupancy` (if given, else uniform) is returned
/// with the fallback flag set.
inline StationaryResult stationary_distribution(const Matrix& q, std::optional<std::vector<double>> occupancy = {}) {
  detail::check_stochastic(q);
  const std::size_t k = q.size();
  if (k == 1) return {{1.0}, false};
  if (!detail::irreducible(q)) {
    std::vector<double> pi = occupancy.value_or(std::vector<double>(k, 1.0 / static_cast<double>(k)));
    detail::require(pi.size() == k, "occupancy length must match transition matrix");
    const double s = std::accumulate(pi.begin(), pi.end(), 0.0);
    for (double& v : pi) v /= s;
    return {std::move(pi), true};
  }
  const auto kk = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd a(kk, kk);
  for (Eigen::Index i = 0; i < kk; ++i)
    for (Eigen::Index j = 0; j < kk; ++j)
      a(i, j) = q[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] - (i == j ? 1.0 : 0.0);
  a.row(kk - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(kk);
  rhs(kk - 1) = 1.0;
  const Eigen::VectorXd pi = a.fullPivLu().solve(rhs);
  std::vector<double> out(pi.data(), pi.data() + pi.size());
  for (double& v : out) v = std::max(v, 0.0);
  const double s = std::accumulate(out.begin(), out.end(), 0.0);
  for (double& v : out) v /= s;
  return {std::move(out), false};
}

/// Cutting regimes recovered from velocity, sorted ascending by v.
struct RegimeModel {
  std::size_t K = 1;
  std::vector<double> v;       // mm/s
  std::vector<double> sigma2;  // (mm/s)^2
  Matrix Q;
  std::vector<double> pi_stat;
  bool pi_fallback = false;
  std::vector<double> occupancy;  // mean posterior state occupancy
  double log_likelihood = 0.0;
  std::size_t iterations = 0;

  void validate() const {
    detail::require(K >= 1 && v.size() == K && sigma2.size() == K && Q.size() == K && pi_stat.size() == K,
                    "RegimeModel has inconsistent sizes");
    detail::check_stochastic(Q);
    for (double s : sigma2) detail::require(s > 0.0, "RegimeModel variances must be positive");
    for (double x : v) detail::require(std::isfinite(x), "RegimeModel velocities must be finite");
  }
};

struct HmmOptions {
  std::size_t K = 3;
  std::size_t max_iter = 200;
  double tol = 1e-6;
  std::size_t restarts = 3;

  friend bool operator==(const HmmOptions&, const HmmOptions&) = default;
};

/// Log-likelihood per EM iteration of the winning start; used to audit monotonicity.
struct HmmTrace {
  std::vector<double> log_likelihood;
};

namespace detail {

struct HmmState {
  std::vector<double> init;
  Matrix trans;
  std::vector<double> mu, var;
};

struct EmOutcome {
  HmmState state;
  std::vector<double> occupancy;
  std::vector<double> ll_history;
  bool empty_regime = false;
};

inline EmOutcome run_em(std::span<const double> x, HmmState st, const HmmOptions& opt, double var_floor) {
  const std::size_t n = x.size();
  const std::size_t k = st.mu.size();
  std::vector<double> alpha(n * k), beta(n * k), b(n * k), scale(n), bshift(n);
  EmOutcome out;
  double prev_ll = -std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < opt.max_iter + 1; ++iter) {
    // Emissions, shifted per sample by the max log-density to avoid underflow.
    for (std::size_t t = 0; t < n; ++t) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        const double d = x[t] - st.mu[j];
        const double lb = -0.5 * (std::log(2.0 * std::numbers::pi * st.var[j]) + d * d / st.var[j]);
        b[t * k + j] = lb;
        mx = std::max(mx, lb);
      }
      bshift[t] = mx;
      for (std::size_t j = 0; j < k; ++j) b[t * k + j] = std::exp(b[t * k + j] - mx);
    }
    // Forward.
    double ll = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        double a;
        if (t == 0) {
          a = st.init[j];
        } else {
          a = 0.0;
          for (std::size_t i = 0; i < k; ++i) a += alpha[(t - 1) * k + i] * st.trans[i][j];
        }
        a *= b[t * k + j];
        alpha[t * k + j] = a;
        s += a;
      }
      if (!(s > 0.0) || !std::isfinite(s)) {
        out.empty_regime = true;
        return out;
      }
      scale[t] = s;
      for (std::size_t j = 0; j < k; ++j) alpha[t * k + j] /= s;
      ll += std::log(s) + bshift[t];
    }
    out.ll_history.push_back(ll);
    out.state = st;
    const bool converged = iter > 0 && ll - prev_ll < opt.tol;
    if (converged || iter == opt.max_iter) break;
    prev_ll = ll;

    // Backward.
    for (std::size_t j = 0; j < k; ++j) beta[(n - 1) * k + j] = 1.0;
    for (std::size_t t = n - 1; t-- > 0;) {
      for (std::size_t i = 0; i < k; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += st.trans[i][j] * b[(t + 1) * k + j] * beta[(t + 1) * k + j];
        beta[t * k + i] = s / scale[t + 1];
      }
    }
    // E-step accumulators.
    std::vector<double> gsum(k, 0.0), gsum_head(k, 0.0), gx(k, 0.0);
    Matrix xsum(k, std::vector<double>(k, 0.0));
    std::vector<double> gamma0(k);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t j = 0; j < k; ++j) {
        const double g = alpha[t * k + j] * beta[t * k + j];
        gsum[j] += g;
        gx[j] += g * x[t];
        if (t + 1 < n) gsum_head[j] += g;
        if (t == 0) gamma0[j] = g;
      }
      if (t + 1 < n) {
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j)
            xsum[i][j] += alpha[t * k + i] * st.trans[i][j] * b[(t + 1) * k + j] * beta[(t + 1) * k + j] /
                          scale[t + 1];
      }
    }
    // M-step.
    HmmState next = st;
    const double g0 = std::accumulate(gamma0.begin(), gamma0.end(), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      if (gsum[j] < 1e-8 * static_cast<double>(n)) {
        out.empty_regime = true;
        return out;
      }
      next.init[j] = gamma0[j] / g0;
      next.mu[j] = gx[j] / gsum[j];
    }
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double d = x[t] - next.mu[j];
        acc += alpha[t * k + j] * beta[t * k + j] * d * d;
      }
      next.var[j] = std::max(acc / gsum[j], var_floor);
    }
    for (std::size_t i = 0; i < k; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < k; ++j) row += xsum[i][j];
      for (std::size_t j = 0; j < k; ++j)
        next.trans[i][j] = row > 0.0 ? xsum[i][j] / row : (i == j ? 1.0 : 0.0);
    }
    out.occupancy.assign(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) out.occupancy[j] = gsum[j] / static_cast<double>(n);
    st = std::move(next);
  }
  if (out.occupancy.empty()) out.occupancy.assign(k, 1.0 / static_cast<double>(k));
  return out;
}

/// Quantile-split initialisation. Start 0 uses equal-mass bins; later starts
/// draw the cut quantiles at random.
inline HmmState initial_state(const std::vector<double>& sorted, std::size_t k, std::size_t attempt, Rng& rng,
                              double var_floor) {
  const std::size_t n = sorted.size();
  std::vector<double> cuts(k + 1);
  cuts[0] = 0.0;
  cuts[k] = 1.0;
  if (attempt == 0) {
    for (std::size_t j = 1; j < k; ++j) cuts[j] = static_cast<double>(j) / static_cast<double>(k);
  } else {
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (std::size_t j = 1; j < k; ++j) cuts[j] = u(rng);
    std::sort(cuts.begin() + 1, cuts.end() - 1);
  }
  HmmState st;
  st.init.assign(k, 1.0 / static_cast<double>(k));
  st.trans.assign(k, std::vector<double>(k, k > 1 ? 0.1 / static_cast<double>(k - 1) : 1.0));
  for (std::size_t j = 0; j < k; ++j) st.trans[j][j] = k > 1 ? 0.9 : 1.0;
  const double overall = stddev(sorted);
  for (std::size_t j = 0; j < k; ++j) {
    auto lo = static_cast<std::size_t>(std::floor(cuts[j] * static_cast<double>(n)));
    auto hi = static_cast<std::size_t>(std::floor(cuts[j + 1] * static_cast<double>(n)));
    hi = std::min(std::max(hi, lo + 1), n);
    lo = std::min(lo, hi - 1);
    std::span<const double> bin(sorted.data() + lo, hi - lo);
    st.mu.push_back(mean(bin));
    const double s = stddev(bin);
    st.var.push_back(std::max(s > 0.0 ? s * s : overall * overall / static_cast<double>(k * k), var_floor));
  }
  return st;
}

}  // namespace detail

/// Baum-Welch fit of a K-regime Gaussian HMM. Runs `restarts` seeded starts
/// and keeps the highest likelihood; a start that empties a regime is
/// re-drawn up to 3 times before the fit is declared failed.
inline RegimeModel fit_hmm(const UniformSeries& velocity, const HmmOptions& opt, std::uint64_t seed,
                           HmmTrace* trace = nullptr) {
  const std::size_t n = velocity.size();
  const std::size_t k = opt.K;
  if (k < 1) throw InvalidParameter("fit_hmm: K must be >= 1");
  if (n < 10 * k)
    throw InvalidParameter("fit_hmm: K=" + std::to_string(k) + " needs at least " + std::to_string(10 * k) +
                           " samples, got " + std::to_string(n));
  detail::require(opt.tol > 0.0, "fit_hmm: tol must be positive");
  const auto x = velocity.values();
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double s = stddev(x);
  const double var_floor = std::max(1e-6 * s * s, 1e-12);

  Rng rng = make_rng(seed, stream::kHmm);
  std::optional<detail::EmOutcome> best;
  std::size_t attempt = 0;
  const std::size_t starts = std::max<std::size_t>(opt.restarts, 1);
  for (std::size_t start = 0; start < starts; ++start) {
    std::size_t redraws = 0;
    while (true) {
      auto init = detail::initial_state(sorted, k, attempt++, rng, var_floor);
      auto res = detail::run_em(x, std::move(init), opt, var_floor);
      if (!res.empty_regime) {
        if (!best || res.ll_history.back() > best->ll_history.back()) best = std::move(res);
        break;
      }
      if (++redraws > 3) break;
    }
  }
  if (!best)
    throw NumericalError("fit_hmm: every EM start emptied a regime (K=" + std::to_string(k) +
                         "); the velocity signal does not support this many regimes");

  // Canonical order: ascending regime velocity.
  const auto& st = best->state;
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return st.mu[a] < st.mu[b]; });
  RegimeModel m;
  m.K = k;
  m.Q.assign(k, std::vector<double>(k));
  for (std::size_t a = 0; a < k; ++a) {
    m.v.push_back(st.mu[order[a]]);
    m.sigma2.push_back(st.var[order[a]]);
    m.occupancy.push_back(best->occupancy[order[a]]);
    for (std::size_t b = 0; b < k; ++b) m.Q[a][b] = st.trans[order[a]][order[b]];
    const double row = std::accumulate(m.Q[a].begin(), m.Q[a].end(), 0.0);
    for (double& q : m.Q[a]) q /= row;
  }
  auto stat = stationary_distribution(m.Q, m.occupancy);
  m.pi_stat = std::move(stat.pi);
  m.pi_fallback = stat.fallback;
  m.log_likelihood = best->ll_history.back();
  m.iterations = best->ll_history.size();
  if (trace) trace->log_likelihood = best->ll_history;
  return m;
}

}  // namespace excision
