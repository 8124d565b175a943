#pragma once

// Run configuration: every tunable of the pipeline in one JSON-backed tree.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "excision/bayesopt.hpp"
#include "excision/error.hpp"
#include "excision/hmm.hpp"
#include "excision/maxwell.hpp"
#include "excision/scoring.hpp"
#include "excision/trajectory.hpp"

namespace excision {

using json = nlohmann::json;

/// Where an expert dataset comes from: a ratings CSV, or a synthetic profile.
struct DatasetSource {
  std::string path;     // ratings CSV; empty when synthetic
  std::string profile;  // "A".."D" when synthetic
  std::size_t n = 15;
  std::uint64_t seed = 11;

  friend bool operator==(const DatasetSource&, const DatasetSource&) = default;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::uint64_t demo_seed = 7;

  double cutoff_hz = 0.6;
  CouplingCoefficients coupling{};
  std::size_t rbf_basis = 50;
  TimeGrid grid{};
  std::size_t demo_count = 10;
  SynthShape shape{};
  std::string demos_dir;   // load recorded demonstrations instead of synthesising
  std::string model_path;  // load a fitted behaviour model instead of fitting

  MaterialParams material{};
  double process_sigma = 0.1;
  double measure_sigma = 0.05;
  HmmOptions hmm{};

  BoConfig bo{};
  std::size_t budget = 6;
  double init_rho = 1.0;

  std::string objective = "smoothness";  // feature name, or "expert:<dataset id>"
  std::size_t knn_k = 1;
  std::map<std::string, DatasetSource> datasets;
  FeatureBox expert_box{};

  std::vector<double> sweep_rho{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::size_t sweep_seeds = 3;
  std::size_t contour_points = 25;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

  [[nodiscard]] SimNoise noise(std::uint64_t s) const { return {process_sigma, measure_sigma, s}; }

  /// "smoothness" -> single feature; "expert:A" -> expert dataset "A".
  [[nodiscard]] ObjectiveSpec objective_spec() const {
    constexpr std::string_view prefix = "expert:";
    if (objective.rfind(prefix, 0) == 0) return ObjectiveSpec::expert(objective.substr(prefix.size()), knn_k);
    const auto f = parse_feature(objective);
    if (!f) throw InvalidParameter("unknown objective '" + objective + "'");
    return ObjectiveSpec::single(*f);
  }

  /// Dataset lookup; ids not listed but naming a profile ("A".."D") resolve
  /// to a synthetic dataset of 15 trials.
  [[nodiscard]] DatasetSource dataset_source(const std::string& id) const {
    if (const auto it = datasets.find(id); it != datasets.end()) return it->second;
    if (parse_profile(id)) return DatasetSource{"", id, 15, 11};
    throw LookupError("unknown expert dataset id '" + id + "'");
  }

  void validate() const {
    detail::require(cutoff_hz > 0.0 && cutoff_hz < 0.5 / grid.dt, "cutoff_hz must lie in (0, Nyquist)");
    detail::require(rbf_basis >= 2, "rbf.basis must be >= 2");
    detail::require(grid.size() >= rbf_basis, "time grid must have at least as many samples as RBF bases");
    detail::require(demo_count >= 2, "demo.count must be >= 2");
    material.validate();
    noise(0).validate();
    if (!(grid.dt * material.E / material.eta < 2.0))
      throw NumericalError("material and grid.dt give an unstable integrator: dt*E/eta = " +
                           std::to_string(grid.dt * material.E / material.eta) + " >= 2");
    detail::require(hmm.K >= 1 && hmm.max_iter >= 1 && hmm.tol > 0.0, "invalid HMM options");
    detail::require(grid.size() >= 10 * hmm.K, "time grid too short for the requested HMM regime count");
    bo.validate();
    detail::require(budget >= 1, "bo.budget must be >= 1");
    detail::require(init_rho >= bo.rho_lo && init_rho <= bo.rho_hi, "bo.init_rho must lie inside the BO domain");
    const auto spec = objective_spec();
    if (spec.kind == ObjectiveSpec::Kind::Expert) (void)dataset_source(spec.dataset_id);
    detail::require(knn_k >= 1, "objective.k must be >= 1");
    for (const auto& [id, src] : datasets) {
      detail::require(!src.path.empty() || parse_profile(src.profile).has_value(),
                      "dataset '" + id + "' needs a path or a profile A-D");
      detail::require(src.path.empty() ? src.n >= 5 : true, "dataset '" + id + "' needs n >= 5");
    }
    expert_box.validate();
    detail::require(!sweep_rho.empty(), "sweep.rho must not be empty");
    for (double r : sweep_rho) detail::require(r >= kRhoMin && r <= kRhoMax, "sweep.rho values must lie in [1, 10]");
    detail::require(sweep_seeds >= 1, "sweep.seeds must be >= 1");
    detail::require(contour_points >= 2, "sweep.contour_points must be >= 2");
  }
};

inline json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["cutoff_hz"] = c.cutoff_hz;
  j["coupling"] = {{"cx", c.coupling.cx}, {"cy", c.coupling.cy}, {"cbeta", c.coupling.cbeta}};
  j["rbf"] = {{"basis", c.rbf_basis}};
  j["grid"] = {{"dt", c.grid.dt}, {"duration", c.grid.duration}};
  j["demo"] = {{"count", c.demo_count},
               {"seed", c.demo_seed},
               {"dir", c.demos_dir},
               {"model", c.model_path},
               {"shape",
                {{"x_travel", c.shape.x_travel},
                 {"y_apex", c.shape.y_apex},
                 {"z_depth", c.shape.z_depth},
                 {"pitch_base", c.shape.pitch_base},
                 {"pitch_drift", c.shape.pitch_drift},
                 {"saw_amplitude", c.shape.saw_amplitude},
                 {"saw_floor", c.shape.saw_floor},
                 {"saw_freq_hz", c.shape.saw_freq_hz},
                 {"phase_diffusion", c.shape.phase_diffusion},
                 {"ragged_floor", c.shape.ragged_floor}}}};
  j["material"] = {{"E", c.material.E}, {"eta", c.material.eta}};
  j["noise"] = {{"process_sigma", c.process_sigma}, {"measure_sigma", c.measure_sigma}};
  j["hmm"] = {{"K", c.hmm.K}, {"max_iter", c.hmm.max_iter}, {"tol", c.hmm.tol}, {"restarts", c.hmm.restarts}};
  j["bo"] = {{"epsilon", c.bo.epsilon},
             {"nu", c.bo.kernel.nu},
             {"length_scale", c.bo.kernel.length_scale},
             {"signal_var", c.bo.kernel.signal_var},
             {"noise_var", c.bo.noise_var},
             {"rho_lo", c.bo.rho_lo},
             {"rho_hi", c.bo.rho_hi},
             {"grid_points", c.bo.grid_points},
             {"budget", c.budget},
             {"init_rho", c.init_rho}};
  j["objective"] = {{"name", c.objective}, {"k", c.knn_k}};
  json ds = json::object();
  for (const auto& [id, s] : c.datasets) ds[id] = {{"path", s.path}, {"profile", s.profile}, {"n", s.n}, {"seed", s.seed}};
  j["datasets"] = ds;
  j["expert_box"] = {{"amplitude_lo", c.expert_box.amplitude_lo},
                     {"amplitude_hi", c.expert_box.amplitude_hi},
                     {"consistency_lo", c.expert_box.consistency_lo},
                     {"consistency_hi", c.expert_box.consistency_hi}};
  j["sweep"] = {{"rho", c.sweep_rho}, {"seeds", c.sweep_seeds}, {"contour_points", c.contour_points}};
  return j;
}

namespace detail {

template <typename T>
void read_key(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidParameter("config key '" + where + key + "': " + e.what());
  }
}

inline const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw InvalidParameter(std::string("config section '") + key + "' must be an object");
  return j.at(key);
}

}  // namespace detail

/// Missing keys keep their defaults; the result is validated.
inline RunConfig config_from_json(const json& j) {
  using detail::read_key;
  using detail::section;
  if (!j.is_object()) throw InvalidParameter("config document must be a JSON object");
  RunConfig c;
  read_key(j, "seed", c.seed, "");
  read_key(j, "cutoff_hz", c.cutoff_hz, "");
  const auto& cp = section(j, "coupling");
  read_key(cp, "cx", c.coupling.cx, "coupling.");
  read_key(cp, "cy", c.coupling.cy, "coupling.");
  read_key(cp, "cbeta", c.coupling.cbeta, "coupling.");
  read_key(section(j, "rbf"), "basis", c.rbf_basis, "rbf.");
  const auto& g = section(j, "grid");
  read_key(g, "dt", c.grid.dt, "grid.");
  read_key(g, "duration", c.grid.duration, "grid.");
  const auto& d = section(j, "demo");
  read_key(d, "count", c.demo_count, "demo.");
  read_key(d, "seed", c.demo_seed, "demo.");
  read_key(d, "dir", c.demos_dir, "demo.");
  read_key(d, "model", c.model_path, "demo.");
  const auto& sh = section(d, "shape");
  read_key(sh, "x_travel", c.shape.x_travel, "demo.shape.");
  read_key(sh, "y_apex", c.shape.y_apex, "demo.shape.");
  read_key(sh, "z_depth", c.shape.z_depth, "demo.shape.");
  read_key(sh, "pitch_base", c.shape.pitch_base, "demo.shape.");
  read_key(sh, "pitch_drift", c.shape.pitch_drift, "demo.shape.");
  read_key(sh, "saw_amplitude", c.shape.saw_amplitude, "demo.shape.");
  read_key(sh, "saw_floor", c.shape.saw_floor, "demo.shape.");
  read_key(sh, "saw_freq_hz", c.shape.saw_freq_hz, "demo.shape.");
  read_key(sh, "phase_diffusion", c.shape.phase_diffusion, "demo.shape.");
  read_key(sh, "ragged_floor", c.shape.ragged_floor, "demo.shape.");
  const auto& m = section(j, "material");
  read_key(m, "E", c.material.E, "material.");
  read_key(m, "eta", c.material.eta, "material.");
  const auto& nz = section(j, "noise");
  read_key(nz, "process_sigma", c.process_sigma, "noise.");
  read_key(nz, "measure_sigma", c.measure_sigma, "noise.");
  const auto& h = section(j, "hmm");
  read_key(h, "K", c.hmm.K, "hmm.");
  read_key(h, "max_iter", c.hmm.max_iter, "hmm.");
  read_key(h, "tol", c.hmm.tol, "hmm.");
  read_key(h, "restarts", c.hmm.restarts, "hmm.");
  const auto& b = section(j, "bo");
  read_key(b, "epsilon", c.bo.epsilon, "bo.");
  read_key(b, "nu", c.bo.kernel.nu, "bo.");
  read_key(b, "length_scale", c.bo.kernel.length_scale, "bo.");
  read_key(b, "signal_var", c.bo.kernel.signal_var, "bo.");
  read_key(b, "noise_var", c.bo.noise_var, "bo.");
  read_key(b, "rho_lo", c.bo.rho_lo, "bo.");
  read_key(b, "rho_hi", c.bo.rho_hi, "bo.");
  read_key(b, "grid_points", c.bo.grid_points, "bo.");
  read_key(b, "budget", c.budget, "bo.");
  read_key(b, "init_rho", c.init_rho, "bo.");
  const auto& o = section(j, "objective");
  read_key(o, "name", c.objective, "objective.");
  read_key(o, "k", c.knn_k, "objective.");
  for (const auto& [id, v] : section(j, "datasets").items()) {
    DatasetSource s;
    if (v.is_string()) {
      s.path = v.get<std::string>();
    } else {
      const std::string where = "datasets." + id + ".";
      read_key(v, "path", s.path, where);
      read_key(v, "profile", s.profile, where);
      read_key(v, "n", s.n, where);
      read_key(v, "seed", s.seed, where);
    }
    c.datasets[id] = s;
  }
  const auto& eb = section(j, "expert_box");
  read_key(eb, "amplitude_lo", c.expert_box.amplitude_lo, "expert_box.");
  read_key(eb, "amplitude_hi", c.expert_box.amplitude_hi, "expert_box.");
  read_key(eb, "consistency_lo", c.expert_box.consistency_lo, "expert_box.");
  read_key(eb, "consistency_hi", c.expert_box.consistency_hi, "expert_box.");
  const auto& sw = section(j, "sweep");
  read_key(sw, "rho", c.sweep_rho, "sweep.");
  read_key(sw, "seeds", c.sweep_seeds, "sweep.");
  read_key(sw, "contour_points", c.contour_points, "sweep.");
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw InvalidParameter("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace excision
