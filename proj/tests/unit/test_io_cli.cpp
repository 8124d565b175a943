#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "excision/excision.hpp"
#include "oracles.hpp"

using namespace excision;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("excision_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(EXCISION_CLI) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Csv, ReportsMissingColumnByName) {
  std::istringstream in("t,x,y,z,roll,yaw\n0,1,2,3,0,0\n");
  try {
    (void)io::read_trajectory_csv(in, "demo.csv");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("'pitch'"), std::string::npos);
  }
}

TEST(Csv, ReportsBadValueWithLineNumber) {
  std::istringstream in("t,f\n0,1\n0.01,2\n0.02,abc\n");
  try {
    (void)io::read_force_csv(in, "force.csv");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
}

TEST(Csv, EmptyFileIsInvalidParameter) {
  std::istringstream in("");
  EXPECT_THROW((void)io::read_force_csv(in, "e.csv"), InvalidParameter);
}

TEST(Csv, RejectsNonUniformTime) {
  std::istringstream in("t,f\n0,1\n0.01,2\n0.03,3\n0.04,3\n");
  EXPECT_THROW((void)io::read_force_csv(in, "f.csv"), SchemaError);
  std::istringstream ok("t,f\n0,1\n0.0100000004,2\n0.02,3\n");
  EXPECT_NO_THROW((void)io::read_force_csv(ok, "f.csv"));
}

TEST(Csv, ForceRoundTripIsExact) {
  const auto dir = scratch("force");
  const ForceProfile f{UniformSeries({0.1, 1.0 / 3.0, 2e-17, -4.5}, 0.01)};
  io::write_force_csv(dir / "f.csv", f);
  const auto back = io::read_force_csv(dir / "f.csv");
  EXPECT_EQ(back.f.vec(), f.f.vec());
  EXPECT_NEAR(back.f.dt(), 0.01, 1e-15);
}

TEST(Csv, RatingsValidateRanges) {
  std::istringstream bad("amplitude,consistency,score\n10,1.5,3\n");
  EXPECT_THROW((void)io::read_ratings_csv(bad, "r.csv"), SchemaError);
  const auto dir = scratch("ratings");
  const auto d = synth_expert_dataset(ExpertProfile::B, 15, 2);
  io::write_ratings_csv(dir / "r.csv", d);
  const auto back = io::read_ratings_csv(dir / "r.csv");
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(back.records()[i].score, d.records()[i].score);
}

TEST(Demos, WriteLoadRoundTrip) {
  const auto dir = scratch("demos");
  const auto demos = synth_demonstrations(10, TimeGrid{}, 7);
  io::write_demonstrations(dir, demos);
  const auto back = io::load_demonstrations(dir);
  ASSERT_EQ(back.size(), demos.size());
  for (std::size_t k = 0; k < demos.size(); ++k) {
    EXPECT_EQ(back[k].rho, demos[k].rho);
    EXPECT_EQ(back[k].trajectory.x, demos[k].trajectory.x);
    EXPECT_EQ(back[k].trajectory.pitch, demos[k].trajectory.pitch);
    EXPECT_NEAR(back[k].trajectory.dt, demos[k].trajectory.dt, 1e-12);
  }
}

TEST(Model, JsonRoundTrip) {
  const auto m = fit_behaviour_model(synth_demonstrations(10, TimeGrid{}, 7), RbfConfig::uniform(50), 0.6);
  const auto back = io::behaviour_model_from_json(nlohmann::json::parse(io::to_json(m).dump()));
  EXPECT_EQ(back.a1, m.a1);
  EXPECT_EQ(back.amplitude, m.amplitude);
  EXPECT_EQ(back.rbf.centres, m.rbf.centres);
}

TEST(Config, RoundTripIsIdentity) {
  RunConfig c;
  c.seed = 99;
  c.objective = "expert:mine";
  c.datasets["mine"] = DatasetSource{"", "C", 20, 5};
  c.bo.kernel.nu = 1.5;
  c.sweep_rho = {1.5, 9.5};
  const auto back = config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(back, c);
  EXPECT_EQ(config_from_json(nlohmann::json::object()), RunConfig{});
}

TEST(Config, RejectsInvalidValues) {
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"cutoff_hz": 80})")), InvalidParameter);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"bo": {"nu": 2.0}})")), InvalidParameter);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"objective": {"name": "expert:nobody"}})")), LookupError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"seed": "one"})")), InvalidParameter);
}

TEST(Cli, DemoSynthWritesLabelledSetReproducibly) {
  const auto dir = scratch("cli_demo");
  ASSERT_EQ(cli("demo-synth --out " + (dir / "a").string()), 0);
  ASSERT_EQ(cli("demo-synth --out " + (dir / "b").string()), 0);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    if (e.path().extension() != ".csv") continue;
    ++n;
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / e.path().filename()));
  }
  EXPECT_EQ(n, 10u);
  const auto demos = io::load_demonstrations(dir / "a");
  for (std::size_t k = 0; k < demos.size(); ++k) EXPECT_EQ(demos[k].rho, 1.0 + static_cast<double>(k));
}

TEST(Cli, CharacteriseReportsSchemaAndEmptyFiles) {
  const auto dir = scratch("cli_char");
  spit(dir / "bad.csv", "time,f\n0,1\n0.01,1\n");
  spit(dir / "empty.csv", "");
  EXPECT_EQ(cli("characterise --force " + (dir / "bad.csv").string()), 2);
  EXPECT_EQ(cli("characterise --force " + (dir / "empty.csv").string()), 2);
  EXPECT_EQ(cli("characterise --force " + (dir / "missing.csv").string()), 4);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("generate --rho 12"), 2);
  EXPECT_EQ(cli("no-such-command"), 2);
  EXPECT_EQ(cli("simulate --trajectory /nonexistent/t.csv"), 4);
  const auto dir = scratch("cli_unstable");
  ASSERT_EQ(cli("generate --rho 2 --out " + (dir / "t.csv").string()), 0);
  EXPECT_EQ(cli("simulate --E 500 --eta 1 --trajectory " + (dir / "t.csv").string() + " --out " +
                (dir / "f.csv").string()),
            3);
}

TEST(Cli, PipelineCommandsChain) {
  const auto dir = scratch("cli_chain");
  const auto d = dir.string();
  ASSERT_EQ(cli("fit-model --out " + d + "/model.json"), 0);
  ASSERT_EQ(cli("generate --rho 10 --model " + d + "/model.json --out " + d + "/t.csv"), 0);
  ASSERT_EQ(cli("simulate --trajectory " + d + "/t.csv --out " + d + "/f.csv"), 0);
  ASSERT_EQ(cli("characterise --force " + d + "/f.csv --out " + d + "/features.json"), 0);
  const auto j = io::read_json(dir / "features.json");
  const auto f = io::features_from_json(j);
  EXPECT_EQ(j.at("regime_model").at("K").get<int>(), 3);
  EXPECT_GT(f.smoothness, 0.9);
  ASSERT_EQ(cli("expert-synth --profile D --out " + d + "/r.csv"), 0);
  EXPECT_EQ(io::read_ratings_csv(dir / "r.csv").size(), 15u);
}

TEST(Cli, OptimiseOutputsAreReingestible) {
  const auto dir = scratch("cli_opt");
  ASSERT_EQ(cli("optimise --budget 3 --out " + dir.string()), 0);
  const auto hist = io::read_history_csv(dir / "history.csv");
  ASSERT_EQ(hist.size(), 3u);
  for (int i = 1; i <= 3; ++i) {
    const auto t = io::read_csv_file(dir / "posterior" / fmt::format("iter_{:02d}.csv", i), {"rho", "mean", "std", "ei"});
    EXPECT_EQ(t.rows, 1000u);
  }
  EXPECT_EQ(io::read_json(dir / "trials.json").size(), 3u);
  RunConfig expected;
  expected.budget = 3;
  EXPECT_EQ(load_config(dir / "config.json"), expected);
}

TEST(Cli, OptimiseBudgetOne) {
  const auto dir = scratch("cli_opt1");
  ASSERT_EQ(cli("optimise --budget 1 --out " + dir.string()), 0);
  EXPECT_EQ(io::read_history_csv(dir / "history.csv").size(), 1u);
}

TEST(Cli, OptimiseFailureKeepsPartialOutputs) {
  // AR pair turns nonstationary above rho ~ 5, so the first trial succeeds
  // and a later proposal fails.
  const auto dir = scratch("cli_optfail");
  auto m = Pipeline(RunConfig{}).model();
  m.a1 = {0.3, -0.5};
  m.a2 = {0.0, 0.0};
  io::write_json(dir / "m.json", io::to_json(m));
  spit(dir / "cfg.json", R"({"demo": {"model": ")" + (dir / "m.json").string() + R"("}})");
  EXPECT_EQ(cli("--config " + (dir / "cfg.json").string() + " optimise --budget 4 --out " + (dir / "o").string()), 3);
  const auto hist = io::read_history_csv(dir / "o" / "history.csv");
  ASSERT_GE(hist.size(), 1u);
  EXPECT_LT(hist.size(), 4u);
  EXPECT_EQ(hist[0].rho, 1.0);
}

TEST(Cli, SweepWritesLongFormatAndContour) {
  const auto dir = scratch("cli_sweep");
  ASSERT_EQ(cli("sweep --objective expert:A --out " + dir.string()), 0);
  const auto t = io::read_csv_file(dir / "sweep.csv", {"rho", "seed", "amplitude", "consistency", "smoothness",
                                                        "energy", "confidence"});
  EXPECT_EQ(t.rows, 30u);
  const auto c = io::read_csv_file(dir / "contour.csv", {"amplitude", "consistency", "score"});
  EXPECT_EQ(c.rows, 25u * 25u);
}

TEST(Pipeline, SweepOrderIsIndependentOfThreads) {
  RunConfig cfg;
  cfg.sweep_rho = {1, 5, 10};
  cfg.sweep_seeds = 2;
  const Pipeline pipe(cfg);
  const auto a = sweep(pipe, 1), b = sweep(pipe, 3);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].rho, b[i].rho);
    EXPECT_EQ(a[i].features, b[i].features);
  }
}

TEST(Pipeline, FailedCellsAreFlagged) {
  RunConfig cfg;
  cfg.sweep_rho = {1, 10};
  cfg.sweep_seeds = 1;
  auto pipe = Pipeline(cfg);
  // A model whose AR pair is nonstationary at high rho fails only those cells.
  RunConfig bad = cfg;
  const auto dir = scratch("pipe_bad");
  auto m = pipe.model();
  m.a1 = {0.3, -0.5};
  m.a2 = {0.0, 0.0};
  io::write_json(dir / "m.json", io::to_json(m));
  bad.model_path = (dir / "m.json").string();
  const auto cells = sweep(Pipeline(bad), 2);
  EXPECT_TRUE(cells[0].ok);
  EXPECT_FALSE(cells[1].ok);
  EXPECT_TRUE(std::isnan(cells[1].features.smoothness));
}

TEST(Pipeline, StageIsNamedOnFailure) {
  RunConfig cfg;
  const Pipeline pipe(cfg);
  try {
    (void)pipe.run_trial(0.0, 1);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "generate");
    try {
      std::rethrow_exception(root_cause(std::current_exception()));
    } catch (const InvalidParameter&) {
      SUCCEED();
    }
  }
}
