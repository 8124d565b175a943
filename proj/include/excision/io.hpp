#pragma once

// File schemas: trajectory, force, ratings, run-history, GP posterior and
// sweep CSVs; demonstration sidecars, features and behaviour-model JSON.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "excision/bayesopt.hpp"
#include "excision/error.hpp"
#include "excision/features.hpp"
#include "excision/scoring.hpp"
#include "excision/trajectory.hpp"

namespace excision::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr double kTimeStepTolerance = 1e-6;

/// Shortest representation that parses back to the same double.
inline std::string num(double v) { return fmt::format("{}", v); }

// ---------------------------------------------------------------------------
// Generic CSV

/// Numeric columns of a CSV keyed by header name.
struct CsvTable {
  std::vector<std::string> header;
  std::map<std::string, std::vector<double>, std::less<>> columns;
  std::size_t rows = 0;

  [[nodiscard]] const std::vector<double>& col(std::string_view name) const {
    const auto it = columns.find(name);
    if (it == columns.end()) throw SchemaError("missing column '" + std::string(name) + "'");
    return it->second;
  }
};

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Parses a numeric CSV and checks that every `required` column is present.
inline CsvTable read_csv(std::istream& in, const std::vector<std::string>& required, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  CsvTable t;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") != std::string::npos) break;
  }
  if (lineno == 0 || line.find_first_not_of(" \t\r") == std::string::npos)
    throw InvalidParameter(source + ": file is empty");
  t.header = split_fields(line);
  for (const auto& r : required) {
    if (std::find(t.header.begin(), t.header.end(), r) == t.header.end())
      throw SchemaError(source + ": header (line " + std::to_string(lineno) + ") is missing column '" + r + "'");
  }
  std::vector<std::vector<double>*> sinks;
  for (const auto& h : t.header) sinks.push_back(&t.columns[h]);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (fields.size() != t.header.size())
      throw SchemaError(source + ": line " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                        " fields, header has " + std::to_string(t.header.size()));
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const char* s = fields[i].c_str();
      char* end = nullptr;
      const double v = std::strtod(s, &end);
      if (fields[i].empty() || end != s + fields[i].size())
        throw SchemaError(source + ": line " + std::to_string(lineno) + " column '" + t.header[i] +
                          "' is not a number: '" + fields[i] + "'");
      sinks[i]->push_back(v);
    }
    ++t.rows;
  }
  return t;
}

inline CsvTable read_csv_file(const fs::path& path, const std::vector<std::string>& required) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csv(in, required, path.string());
}

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

inline void check_written(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

/// Checks finiteness and a uniform time step; returns (t0, dt).
inline std::pair<double, double> uniform_time(const std::vector<double>& t, const std::string& source) {
  if (t.size() < 2) throw InvalidParameter(source + ": need at least 2 samples, got " + std::to_string(t.size()));
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(dt > 0.0)) throw SchemaError(source + ": time column must be strictly increasing");
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (std::abs((t[i] - t[i - 1]) - dt) > kTimeStepTolerance)
      throw SchemaError(source + ": non-uniform time step at data row " + std::to_string(i + 1) + " (line " +
                        std::to_string(i + 2) + ")");
  }
  return {t.front(), dt};
}

// ---------------------------------------------------------------------------
// Trajectories and demonstrations

inline void write_trajectory_csv(std::ostream& out, const PoseTrajectory& p) {
  out << "t,x,y,z,roll,pitch,yaw\n";
  for (std::size_t i = 0; i < p.size(); ++i) {
    out << num(p.time(i)) << ',' << num(p.x[i]) << ',' << num(p.y[i]) << ',' << num(p.z[i]) << ','
        << num(p.roll[i]) << ',' << num(p.pitch[i]) << ',' << num(p.yaw[i]) << '\n';
  }
}

inline void write_trajectory_csv(const fs::path& path, const PoseTrajectory& p) {
  auto out = open_out(path);
  write_trajectory_csv(out, p);
  check_written(out, path);
}

inline PoseTrajectory read_trajectory_csv(std::istream& in, const std::string& source) {
  const auto t = read_csv(in, {"t", "x", "y", "z", "roll", "pitch", "yaw"}, source);
  const auto [t0, dt] = uniform_time(t.col("t"), source);
  PoseTrajectory p;
  p.t0 = t0;
  p.dt = dt;
  p.x = t.col("x");
  p.y = t.col("y");
  p.z = t.col("z");
  p.roll = t.col("roll");
  p.pitch = t.col("pitch");
  p.yaw = t.col("yaw");
  try {
    p.validate();
  } catch (const InvalidParameter& e) {
    throw SchemaError(source + ": " + e.what());
  }
  return p;
}

inline PoseTrajectory read_trajectory_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_trajectory_csv(in, path.string());
}

/// Writes demo_NN.csv plus a demo_NN.json sidecar carrying the label.
inline std::vector<fs::path> write_demonstrations(const fs::path& dir, const DemonstrationSet& demos) {
  std::vector<fs::path> written;
  for (std::size_t k = 0; k < demos.size(); ++k) {
    const std::string stem = fmt::format("demo_{:02d}", k + 1);
    const auto csv = dir / (stem + ".csv");
    write_trajectory_csv(csv, demos[k].trajectory);
    const json meta = {{"rho", demos[k].rho}, {"trajectory", stem + ".csv"}};
    const auto side = dir / (stem + ".json");
    auto out = open_out(side);
    out << meta.dump(2) << '\n';
    check_written(out, side);
    written.push_back(csv);
    written.push_back(side);
  }
  return written;
}

/// Loads every sidecar in `dir` (sorted by name) and the trajectory it names.
inline DemonstrationSet load_demonstrations(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("demonstration directory " + dir.string() + " does not exist");
  std::vector<fs::path> sidecars;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") sidecars.push_back(e.path());
  std::sort(sidecars.begin(), sidecars.end());
  DemonstrationSet demos;
  for (const auto& side : sidecars) {
    std::ifstream in(side);
    if (!in) throw IoError("cannot open " + side.string());
    json meta;
    try {
      in >> meta;
    } catch (const json::parse_error& e) {
      throw SchemaError(side.string() + ": invalid JSON: " + e.what());
    }
    if (!meta.contains("rho") || !meta["rho"].is_number())
      throw SchemaError(side.string() + ": missing numeric key 'rho'");
    const std::string file =
        meta.contains("trajectory") ? meta["trajectory"].get<std::string>() : side.stem().string() + ".csv";
    demos.push_back({read_trajectory_csv(dir / file), meta["rho"].get<double>()});
  }
  if (demos.empty()) throw InvalidParameter("no demonstration sidecars found in " + dir.string());
  validate_demonstrations(demos);
  return demos;
}

// ---------------------------------------------------------------------------
// Force profiles

inline void write_force_csv(std::ostream& out, const ForceProfile& f) {
  out << "t,f\n";
  for (std::size_t i = 0; i < f.f.size(); ++i) out << num(f.f.time(i)) << ',' << num(f.f[i]) << '\n';
}

inline void write_force_csv(const fs::path& path, const ForceProfile& f) {
  auto out = open_out(path);
  write_force_csv(out, f);
  check_written(out, path);
}

inline ForceProfile read_force_csv(std::istream& in, const std::string& source) {
  const auto t = read_csv(in, {"t", "f"}, source);
  const auto [t0, dt] = uniform_time(t.col("t"), source);
  const auto& f = t.col("f");
  for (std::size_t i = 0; i < f.size(); ++i)
    if (!std::isfinite(f[i])) throw SchemaError(source + ": non-finite force on line " + std::to_string(i + 2));
  return {UniformSeries(f, dt, t0)};
}

inline ForceProfile read_force_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_force_csv(in, path.string());
}

// ---------------------------------------------------------------------------
// Expert ratings

inline void write_ratings_csv(const fs::path& path, const ExpertDataset& d) {
  auto out = open_out(path);
  out << "amplitude,consistency,score\n";
  for (const auto& r : d.records()) out << num(r.amplitude) << ',' << num(r.consistency) << ',' << num(r.score) << '\n';
  check_written(out, path);
}

inline ExpertDataset read_ratings_csv(std::istream& in, const std::string& source) {
  const auto t = read_csv(in, {"amplitude", "consistency", "score"}, source);
  std::vector<RatingRecord> recs;
  for (std::size_t i = 0; i < t.rows; ++i) {
    const RatingRecord r{t.col("amplitude")[i], t.col("consistency")[i], t.col("score")[i]};
    const std::string where = source + ": line " + std::to_string(i + 2);
    if (!std::isfinite(r.amplitude) || !std::isfinite(r.consistency) || !std::isfinite(r.score))
      throw SchemaError(where + " has non-finite values");
    if (r.amplitude < 0.0) throw SchemaError(where + ": amplitude must be >= 0");
    if (!(r.consistency > 0.0 && r.consistency <= 1.0)) throw SchemaError(where + ": consistency must lie in (0, 1]");
    recs.push_back(r);
  }
  if (recs.empty()) throw InvalidParameter(source + ": ratings file has no records");
  return ExpertDataset(std::move(recs));
}

inline ExpertDataset read_ratings_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_ratings_csv(in, path.string());
}

// ---------------------------------------------------------------------------
// BO outputs

inline void write_history_csv(const fs::path& path, const BoState& s) {
  auto out = open_out(path);
  out << "iter,rho,y,incumbent_rho,incumbent_y\n";
  for (const auto& r : s.history)
    out << r.iter << ',' << num(r.rho) << ',' << num(r.y) << ',' << num(r.incumbent_rho) << ','
        << num(r.incumbent_y) << '\n';
  check_written(out, path);
}

inline std::vector<BoRecord> read_history_csv(const fs::path& path) {
  const auto t = read_csv_file(path, {"iter", "rho", "y", "incumbent_rho", "incumbent_y"});
  std::vector<BoRecord> out;
  for (std::size_t i = 0; i < t.rows; ++i)
    out.push_back({static_cast<std::size_t>(t.col("iter")[i]), t.col("rho")[i], t.col("y")[i],
                   t.col("incumbent_rho")[i], t.col("incumbent_y")[i]});
  return out;
}

/// GP posterior and EI over the acquisition grid.
inline void write_posterior_csv(const fs::path& path, const GpModel& gp, const BoState& s, const BoConfig& cfg) {
  auto out = open_out(path);
  out << "rho,mean,std,ei\n";
  const double best = s.incumbent().y;
  for (std::size_t j = 0; j < cfg.grid_points; ++j) {
    const double rho = cfg.grid_at(j);
    const auto p = gp.posterior(rho);
    out << num(rho) << ',' << num(p.mean) << ',' << num(p.std) << ',' << num(acquisition(gp, rho, best, cfg.epsilon))
        << '\n';
  }
  check_written(out, path);
}

// ---------------------------------------------------------------------------
// JSON documents

inline json to_json(const ExcisionFeatures& f) {
  return {{"amplitude", f.amplitude},
          {"consistency", f.consistency},
          {"smoothness", f.smoothness},
          {"energy", f.energy},
          {"confidence", f.confidence}};
}

inline ExcisionFeatures features_from_json(const json& j) {
  ExcisionFeatures f;
  try {
    f.amplitude = j.at("amplitude").get<double>();
    f.consistency = j.at("consistency").get<double>();
    f.smoothness = j.at("smoothness").get<double>();
    f.energy = j.at("energy").get<double>();
    f.confidence = j.at("confidence").get<double>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("features document: ") + e.what());
  }
  return f;
}

inline json to_json(const RegimeModel& m) {
  return {{"K", m.K}, {"v", m.v}, {"sigma2", m.sigma2}, {"Q", m.Q}, {"pi_stat", m.pi_stat},
          {"pi_fallback", m.pi_fallback}, {"log_likelihood", m.log_likelihood}};
}

/// Features plus the regime model they were derived from.
inline json features_document(const Characterisation& c) {
  json j = to_json(c.features);
  j["regime_model"] = to_json(c.regimes);
  return j;
}

inline json to_json(const BehaviourModel& m) {
  auto map = [](const LinearMap& l) { return json{{"slope", l.slope}, {"intercept", l.intercept}}; };
  return {{"rbf", {{"centres", m.rbf.centres}, {"widths", m.rbf.widths}}},
          {"a1", map(m.a1)},
          {"a2", map(m.a2)},
          {"c", map(m.c)},
          {"sigma_eps", map(m.sigma_eps)},
          {"amplitude", map(m.amplitude)}};
}

inline BehaviourModel behaviour_model_from_json(const json& j) {
  auto map = [&](const char* key) {
    const auto& o = j.at(key);
    return LinearMap{o.at("slope").get<double>(), o.at("intercept").get<double>()};
  };
  try {
    BehaviourModel m;
    m.rbf.centres = j.at("rbf").at("centres").get<std::vector<double>>();
    m.rbf.widths = j.at("rbf").at("widths").get<std::vector<double>>();
    m.rbf.validate();
    m.a1 = map("a1");
    m.a2 = map("a2");
    m.c = map("c");
    m.sigma_eps = map("sigma_eps");
    m.amplitude = map("amplitude");
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("behaviour model document: ") + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  check_written(out, path);
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": invalid JSON: " + e.what());
  }
}

}  // namespace excision::io
