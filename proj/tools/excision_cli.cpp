// excision: command-line runner for demonstration synthesis, model fitting,
// simulated excisions, characterisation, BO runs and sweeps.
//
// Exit codes: 0 ok, 2 invalid input, 3 numerical failure, 4 I/O failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "excision/excision.hpp"

namespace fs = std::filesystem;
using namespace excision;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

RunConfig load(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

int exit_code_for(std::exception_ptr p) {
  try {
    std::rethrow_exception(root_cause(p));
  } catch (const IoError&) {
    return 4;
  } catch (const NumericalError&) {
    return 3;
  } catch (const InvalidParameter&) {
    return 2;
  } catch (...) {
    return 1;
  }
}

void print_chain(const std::exception& e, int depth = 0) {
  std::cerr << (depth == 0 ? "error: " : "  caused by: ") << e.what() << '\n';
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    print_chain(inner, depth + 1);
  } catch (...) {
  }
}

void emit_json(const std::string& out, const nlohmann::json& j) {
  if (out.empty() || out == "-")
    std::cout << j.dump(2) << '\n';
  else
    io::write_json(out, j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated robotic excision: learn sawing behaviour, score cuts, optimise rho"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "run seed (overrides config)");
  app.fallthrough();

  // demo-synth
  auto* demo = app.add_subcommand("demo-synth", "write synthetic labelled demonstrations");
  std::string demo_out = "demos";
  std::optional<std::size_t> demo_count;
  std::optional<std::uint64_t> demo_seed;
  demo->add_option("--out", demo_out, "output directory");
  demo->add_option("--count", demo_count, "number of demonstrations");
  demo->add_option("--demo-seed", demo_seed, "demonstration seed");

  // fit-model
  auto* fit = app.add_subcommand("fit-model", "fit the behaviour model from demonstrations");
  std::string fit_out = "model.json", fit_demos;
  std::optional<double> fit_cutoff;
  fit->add_option("--out", fit_out, "model JSON path");
  fit->add_option("--demos", fit_demos, "demonstration directory (default: synthesise)");
  fit->add_option("--cutoff-hz", fit_cutoff, "nominal/behaviour split frequency");

  // generate
  auto* gen = app.add_subcommand("generate", "generate a trajectory for one rho");
  double gen_rho = 1.0;
  std::string gen_out = "trajectory.csv", gen_model;
  gen->add_option("--rho", gen_rho, "sawing parameter in [1, 10]")->required();
  gen->add_option("--out", gen_out, "trajectory CSV path");
  gen->add_option("--model", gen_model, "behaviour model JSON (default: fit on the fly)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "run a trajectory through the simulated material");
  std::string sim_in, sim_out = "force.csv";
  std::optional<double> sim_E, sim_eta;
  sim->add_option("--trajectory", sim_in, "trajectory CSV")->required();
  sim->add_option("--out", sim_out, "force CSV path");
  sim->add_option("--E", sim_E, "material stiffness (N/mm)");
  sim->add_option("--eta", sim_eta, "material viscosity (N s/mm)");

  // characterise
  auto* chr = app.add_subcommand("characterise", "extract excision features from a force profile");
  std::string chr_in, chr_out = "-";
  std::optional<std::size_t> chr_k;
  chr->add_option("--force", chr_in, "force CSV")->required();
  chr->add_option("--out", chr_out, "features JSON path ('-' for stdout)");
  chr->add_option("--K", chr_k, "number of cutting regimes");

  // optimise
  auto* opt = app.add_subcommand("optimise", "Bayesian optimisation of rho");
  std::string opt_out = "optimise", opt_objective;
  std::optional<std::size_t> opt_budget;
  std::optional<double> opt_init, opt_eps;
  opt->add_option("--out", opt_out, "output directory");
  opt->add_option("--objective", opt_objective, "feature name or expert:<dataset id>");
  opt->add_option("--budget", opt_budget, "number of objective evaluations");
  opt->add_option("--init-rho", opt_init, "first rho evaluated");
  opt->add_option("--epsilon", opt_eps, "EI exploration margin");

  // sweep
  auto* swp = app.add_subcommand("sweep", "evaluate features over a (rho, seed) grid");
  std::string swp_out = "sweep", swp_objective;
  std::optional<std::size_t> swp_seeds, swp_threads;
  swp->add_option("--out", swp_out, "output directory");
  swp->add_option("--seeds", swp_seeds, "seeds per rho");
  swp->add_option("--threads", swp_threads, "worker threads (default: hardware)");
  swp->add_option("--objective", swp_objective, "expert:<id> selects the contour dataset");

  // expert-synth
  auto* exs = app.add_subcommand("expert-synth", "write a synthetic expert ratings CSV");
  std::string exs_profile = "A", exs_out = "ratings.csv";
  std::size_t exs_n = 15;
  std::optional<std::uint64_t> exs_seed;
  exs->add_option("--profile", exs_profile, "expert profile A-D");
  exs->add_option("--n", exs_n, "number of rated trials");
  exs->add_option("--out", exs_out, "ratings CSV path");
  exs->add_option("--dataset-seed", exs_seed, "dataset seed (default: --seed, else 11)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*demo) {
      RunConfig cfg = load(g);
      if (demo_count) cfg.demo_count = *demo_count;
      if (demo_seed) cfg.demo_seed = *demo_seed;
      cfg.validate();
      const auto demos = synth_demonstrations(cfg.demo_count, cfg.grid, cfg.demo_seed, cfg.shape);
      io::write_demonstrations(demo_out, demos);
      fmt::print("wrote {} demonstrations to {}\n", demos.size(), demo_out);
    } else if (*fit) {
      RunConfig cfg = load(g);
      if (!fit_demos.empty()) cfg.demos_dir = fit_demos;
      if (fit_cutoff) cfg.cutoff_hz = *fit_cutoff;
      cfg.validate();
      const auto demos = in_stage("demonstrations", [&] { return load_or_synth_demos(cfg); });
      const auto model = in_stage("fit-model", [&] {
        return fit_behaviour_model(demos, RbfConfig::uniform(cfg.rbf_basis), cfg.cutoff_hz);
      });
      io::write_json(fit_out, io::to_json(model));
      fmt::print("fitted behaviour model on {} demonstrations -> {}\n", demos.size(), fit_out);
    } else if (*gen) {
      RunConfig cfg = load(g);
      if (!gen_model.empty()) cfg.model_path = gen_model;
      const Pipeline pipe(cfg);
      const auto traj = in_stage("generate", [&] {
        return generate(pipe.model(), gen_rho, pipe.nominal(), cfg.coupling, cfg.seed);
      });
      io::write_trajectory_csv(gen_out, traj);
      fmt::print("trajectory for rho={} -> {}\n", gen_rho, gen_out);
    } else if (*sim) {
      RunConfig cfg = load(g);
      if (sim_E) cfg.material.E = *sim_E;
      if (sim_eta) cfg.material.eta = *sim_eta;
      cfg.validate();
      const auto traj = io::read_trajectory_csv(fs::path(sim_in));
      const auto force = in_stage("simulate", [&] { return execute_excision(traj, cfg.material, cfg.noise(cfg.seed)); });
      io::write_force_csv(sim_out, force);
      fmt::print("force profile ({} samples) -> {}\n", force.f.size(), sim_out);
    } else if (*chr) {
      RunConfig cfg = load(g);
      if (chr_k) cfg.hmm.K = *chr_k;
      cfg.validate();
      const auto force = io::read_force_csv(fs::path(chr_in));
      const auto ch = in_stage("characterise", [&] { return characterise_full(force, cfg.material, cfg.hmm, cfg.seed); });
      emit_json(chr_out, io::features_document(ch));
    } else if (*opt) {
      RunConfig cfg = load(g);
      if (!opt_objective.empty()) cfg.objective = opt_objective;
      if (opt_budget) cfg.budget = *opt_budget;
      if (opt_init) cfg.init_rho = *opt_init;
      if (opt_eps) cfg.bo.epsilon = *opt_eps;
      const Pipeline pipe(cfg);
      io::write_json(fs::path(opt_out) / "config.json", to_json(pipe.config()));
      const auto res = optimise(pipe, fs::path(opt_out));
      for (const auto& r : res.state.history)
        fmt::print("iter {:2d}  rho={:.4f}  y={:.6g}  incumbent rho={:.4f} y={:.6g}\n", r.iter, r.rho, r.y,
                   r.incumbent_rho, r.incumbent_y);
      if (res.error) {
        std::cerr << "optimise stopped early (" << res.state.history.size() << " of " << cfg.budget
                  << " evaluations kept in " << opt_out << ")\n";
        std::rethrow_exception(res.error);
      }
    } else if (*swp) {
      RunConfig cfg = load(g);
      if (swp_seeds) cfg.sweep_seeds = *swp_seeds;
      if (!swp_objective.empty()) cfg.objective = swp_objective;
      const Pipeline pipe(cfg);
      const auto cells = sweep(pipe, swp_threads.value_or(0));
      write_sweep_csv(fs::path(swp_out) / "sweep.csv", cells);
      std::size_t failed = 0;
      for (const auto& c : cells) {
        if (!c.ok) {
          ++failed;
          std::cerr << fmt::format("cell rho={} seed={} failed: {}\n", c.rho, c.seed, c.error);
        }
      }
      if (const auto* d = pipe.contour_dataset())
        write_contour_csv(fs::path(swp_out) / "contour.csv", *d, cfg.contour_points, cfg.knn_k);
      fmt::print("{} cells ({} failed) -> {}\n", cells.size(), failed, swp_out);
    } else if (*exs) {
      const auto p = parse_profile(exs_profile);
      if (!p) throw InvalidParameter("unknown expert profile '" + exs_profile + "'");
      RunConfig cfg = load(g);
      const std::uint64_t s = exs_seed ? *exs_seed : (g.seed ? *g.seed : 11);
      io::write_ratings_csv(exs_out, synth_expert_dataset(*p, exs_n, s, cfg.expert_box));
      fmt::print("expert {} ({} trials) -> {}\n", exs_profile, exs_n, exs_out);
    }
  } catch (const std::exception& e) {
    print_chain(e);
    return exit_code_for(std::current_exception());
  }
  return 0;
}
