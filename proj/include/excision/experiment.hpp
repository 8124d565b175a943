#pragma once

// End-to-end runs: behaviour model -> generate -> simulate -> characterise ->
// score, driven by BO or by an exhaustive (rho, seed) sweep.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "excision/bayesopt.hpp"
#include "excision/config.hpp"
#include "excision/features.hpp"
#include "excision/io.hpp"
#include "excision/maxwell.hpp"
#include "excision/scoring.hpp"
#include "excision/trajectory.hpp"

namespace excision {

/// Wraps a failure with the pipeline stage it came from. The original
/// exception is nested inside.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  [[nodiscard]] const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

template <class F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    std::throw_with_nested(StageError(stage, e.what()));
  }
}

/// Innermost exception of a nested chain.
inline std::exception_ptr root_cause(std::exception_ptr p) {
  for (;;) {
    try {
      std::rethrow_exception(p);
    } catch (const std::nested_exception& n) {
      if (!n.nested_ptr()) return p;
      p = n.nested_ptr();
    } catch (...) {
      return p;
    }
  }
}

inline DemonstrationSet load_or_synth_demos(const RunConfig& cfg) {
  if (!cfg.demos_dir.empty()) return io::load_demonstrations(cfg.demos_dir);
  return synth_demonstrations(cfg.demo_count, cfg.grid, cfg.demo_seed, cfg.shape);
}

inline ExpertDataset load_dataset(const DatasetSource& src, const FeatureBox& box) {
  if (!src.path.empty()) return io::read_ratings_csv(std::filesystem::path(src.path));
  const auto p = parse_profile(src.profile);
  if (!p) throw InvalidParameter("dataset profile '" + src.profile + "' is not one of A-D");
  return synth_expert_dataset(*p, src.n, src.seed, box);
}

struct TrialResult {
  double rho = 0.0;
  std::uint64_t seed = 0;
  Characterisation characterisation;
};

/// Everything a trial needs, built once from a validated config.
class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (!cfg_.model_path.empty()) {
      model_ = in_stage("fit-model", [&] { return io::behaviour_model_from_json(io::read_json(cfg_.model_path)); });
      nominal_ = synth_nominal(cfg_.grid, cfg_.shape);
    } else {
      const auto demos = in_stage("demonstrations", [&] { return load_or_synth_demos(cfg_); });
      model_ = in_stage("fit-model", [&] {
        return fit_behaviour_model(demos, RbfConfig::uniform(cfg_.rbf_basis), cfg_.cutoff_hz);
      });
      // Recorded demonstrations carry their own cut; the smoothest one supplies the nominal.
      nominal_ = cfg_.demos_dir.empty()
                     ? synth_nominal(cfg_.grid, cfg_.shape)
                     : decompose(std::max_element(demos.begin(), demos.end(),
                                                  [](const auto& a, const auto& b) { return a.rho < b.rho; })
                                     ->trajectory,
                                 cfg_.cutoff_hz)
                           .nominal;
    }
    spec_ = cfg_.objective_spec();
    in_stage("datasets", [&] {
      for (const auto& [id, src] : cfg_.datasets) datasets_.emplace(id, load_dataset(src, cfg_.expert_box));
      if (spec_.kind == ObjectiveSpec::Kind::Expert && !datasets_.contains(spec_.dataset_id))
        datasets_.emplace(spec_.dataset_id, load_dataset(cfg_.dataset_source(spec_.dataset_id), cfg_.expert_box));
      for (const auto& [id, d] : datasets_)
        if (cfg_.knn_k > d.size()) throw InvalidParameter("objective.k exceeds the size of dataset '" + id + "'");
    });
  }

  [[nodiscard]] const RunConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const BehaviourModel& model() const noexcept { return model_; }
  [[nodiscard]] const NominalTrajectory& nominal() const noexcept { return nominal_; }
  [[nodiscard]] const DatasetRegistry& datasets() const noexcept { return datasets_; }
  [[nodiscard]] const ObjectiveSpec& objective_spec() const noexcept { return spec_; }

  /// generate -> simulate -> characterise; one seed feeds every stage.
  [[nodiscard]] TrialResult run_trial(double rho, std::uint64_t seed) const {
    const auto traj = in_stage("generate", [&] { return generate(model_, rho, nominal_, cfg_.coupling, seed); });
    const auto force = in_stage("simulate", [&] { return execute_excision(traj, cfg_.material, cfg_.noise(seed)); });
    auto ch = in_stage("characterise", [&] { return characterise_full(force, cfg_.material, cfg_.hmm, seed); });
    return {rho, seed, std::move(ch)};
  }

  [[nodiscard]] double score(const ExcisionFeatures& f) const {
    return in_stage("score", [&] { return evaluate_objective(spec_, f, datasets_); });
  }

  [[nodiscard]] double objective(double rho, std::uint64_t seed) const {
    return score(run_trial(rho, seed).characterisation.features);
  }

  /// Dataset used for contour export: the objective's, else the first configured one.
  [[nodiscard]] const ExpertDataset* contour_dataset() const {
    if (spec_.kind == ObjectiveSpec::Kind::Expert) return &datasets_.at(spec_.dataset_id);
    return datasets_.empty() ? nullptr : &datasets_.begin()->second;
  }

 private:
  RunConfig cfg_;
  BehaviourModel model_;
  NominalTrajectory nominal_;
  ObjectiveSpec spec_;
  DatasetRegistry datasets_;
};

// ---------------------------------------------------------------------------
// Optimise

struct OptimiseResult {
  BoState state;
  std::vector<TrialResult> trials;
  std::exception_ptr error;  // objective failure that ended the run early
};

inline nlohmann::json trials_document(const std::vector<TrialResult>& trials, const BoState& state) {
  auto doc = nlohmann::json::array();
  for (std::size_t i = 0; i < trials.size(); ++i) {
    auto j = io::features_document(trials[i].characterisation);
    j["iter"] = i + 1;
    j["rho"] = trials[i].rho;
    j["seed"] = trials[i].seed;
    if (i < state.history.size()) j["y"] = state.history[i].y;
    doc.push_back(std::move(j));
  }
  return doc;
}

/// Runs BO over rho. With an output directory, writes history.csv,
/// posterior/iter_NN.csv and trials.json after every iteration so that a
/// failed run leaves its partial results behind.
inline OptimiseResult optimise(const Pipeline& pipe, const std::optional<std::filesystem::path>& out_dir = {}) {
  const auto& cfg = pipe.config();
  OptimiseResult res;
  const auto objective = [&](double rho) {
    try {
      auto t = pipe.run_trial(rho, cfg.seed);
      const double y = pipe.score(t.characterisation.features);
      res.trials.push_back(std::move(t));
      return y;
    } catch (...) {
      res.error = std::current_exception();
      throw;
    }
  };
  const auto observer = [&](const BoState& s, const GpModel& gp) {
    if (!out_dir) return;
    io::write_history_csv(*out_dir / "history.csv", s);
    io::write_posterior_csv(*out_dir / "posterior" / fmt::format("iter_{:02d}.csv", s.history.size()), gp, s, cfg.bo);
    io::write_json(*out_dir / "trials.json", trials_document(res.trials, s));
  };
  res.state = run_bo(objective, cfg.budget, cfg.init_rho, cfg.bo, observer);
  if (out_dir && res.state.history.empty()) io::write_history_csv(*out_dir / "history.csv", res.state);
  return res;
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepCell {
  double rho = 0.0;
  std::uint64_t seed = 0;
  ExcisionFeatures features;
  bool ok = true;
  std::string error;
};

/// Every (rho, seed) cell of the configured grid, seeds 0..sweep_seeds-1
/// offset by the run seed. Cells run on `threads` workers; output order is
/// rho-major regardless of scheduling. Failed cells are flagged and the
/// sweep carries on.
inline std::vector<SweepCell> sweep(const Pipeline& pipe, std::size_t threads = 0) {
  const auto& cfg = pipe.config();
  std::vector<SweepCell> cells;
  for (double rho : cfg.sweep_rho)
    for (std::size_t s = 0; s < cfg.sweep_seeds; ++s) cells.push_back({rho, cfg.seed + s, {}, true, {}});
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      auto& c = cells[i];
      try {
        c.features = pipe.run_trial(c.rho, c.seed).characterisation.features;
      } catch (const std::exception& e) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        c.features = {nan, nan, nan, nan, nan};
        c.ok = false;
        c.error = e.what();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  return cells;
}

inline void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepCell>& cells) {
  auto out = io::open_out(path);
  out << "rho,seed,amplitude,consistency,smoothness,energy,confidence,error\n";
  for (const auto& c : cells) {
    const auto& f = c.features;
    out << io::num(c.rho) << ',' << c.seed << ',' << io::num(f.amplitude) << ',' << io::num(f.consistency) << ','
        << io::num(f.smoothness) << ',' << io::num(f.energy) << ',' << io::num(f.confidence) << ','
        << (c.ok ? 0 : 1) << '\n';
  }
  io::check_written(out, path);
}

/// k-NN score over a points x points grid spanning the dataset's feature range.
inline void write_contour_csv(const std::filesystem::path& path, const ExpertDataset& d, std::size_t points,
                              std::size_t k) {
  double alo = std::numeric_limits<double>::infinity(), ahi = -alo, clo = alo, chi = -alo;
  for (const auto& r : d.records()) {
    alo = std::min(alo, r.amplitude);
    ahi = std::max(ahi, r.amplitude);
    clo = std::min(clo, r.consistency);
    chi = std::max(chi, r.consistency);
  }
  auto out = io::open_out(path);
  out << "amplitude,consistency,score\n";
  for (std::size_t i = 0; i < points; ++i) {
    const double a = alo + (ahi - alo) * static_cast<double>(i) / static_cast<double>(points - 1);
    for (std::size_t j = 0; j < points; ++j) {
      const double c = clo + (chi - clo) * static_cast<double>(j) / static_cast<double>(points - 1);
      out << io::num(a) << ',' << io::num(c) << ',' << io::num(knn_predict(d, a, c, k)) << '\n';
    }
  }
  io::check_written(out, path);
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  detail::require(x.size() == y.size() && x.size() >= 2, "pearson needs two equal-length samples");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace excision
