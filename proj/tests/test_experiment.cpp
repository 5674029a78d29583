#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "kslab/errors.hpp"
#include "kslab/experiment.hpp"

using namespace kslab;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "kslab_test_experiment" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

ExperimentConfig small_config(const std::string& out) {
  ExperimentConfig c;
  c.n = 12;
  c.depth = 5;
  c.model.k = 39.0;
  c.samples = 5;
  c.out = scratch(out).string();
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> file_lines(const std::filesystem::path& manifest) {
  std::vector<std::string> out;
  std::istringstream in(slurp(manifest));
  for (std::string line; std::getline(in, line);)
    if (line.rfind("file ", 0) == 0) out.push_back(line);
  return out;
}

}  // namespace

TEST(Digest, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Initial, Profiles) {
  Grid g = build_grid(16);
  InitialSpec s;
  s.kind = InitialSpec::Kind::zero;
  for (double v : initial_state(s, g, 1)) EXPECT_EQ(v, 0.0);

  s.kind = InitialSpec::Kind::sine;
  s.modes = 2;
  s.amplitude = 3.0;
  auto y = initial_state(s, g, 1);
  for (std::size_t j = 0; j < g.size(); ++j)
    EXPECT_DOUBLE_EQ(y[j], 3.0 * std::sin(2.0 * std::numbers::pi * g.x_points[j]));

  s.kind = InitialSpec::Kind::random;
  s.modes = 4;
  s.amplitude = 1.0;
  EXPECT_EQ(initial_state(s, g, 7), initial_state(s, g, 7));
  EXPECT_NE(initial_state(s, g, 7), initial_state(s, g, 8));
}

TEST(Initial, FileProfile) {
  Grid g = build_grid(8);
  auto dir = scratch("initial");
  std::filesystem::create_directories(dir);
  InitialSpec s;
  s.kind = InitialSpec::Kind::file;
  s.path = (dir / "y0.txt").string();
  {
    std::ofstream out(s.path);
    for (int j = 0; j < 8; ++j) out << j << "\n";
  }
  auto y = initial_state(s, g, 0);
  EXPECT_EQ(y[5], 5.0);
  {
    std::ofstream out(s.path);
    out << "1 2 3\n";
  }
  EXPECT_THROW(initial_state(s, g, 0), InvalidArgument);
}

TEST(Instance, TargetsMaskedAndReduced) {
  ExperimentConfig c = small_config("instance");
  c.targets.kind = TargetSpec::Kind::random;
  c.targets.value = 1.0;
  c.targets.form = TargetSpec::Form::reduced;
  Instance in = build_instance(c);
  const auto& od1 = in.problem.masks[Region::Od1];
  for (std::size_t l = 0; l <= in.tree.depth(); ++l)
    for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
      auto r = in.reduced_targets.y_d1.node(l, i);
      for (std::size_t j = 0; j < in.grid.size(); ++j)
        if (od1[j] == 0.0) EXPECT_EQ(r[j], 0.0);
    }
  // rho^{-1} at the default weights is below the double range
  for (double v : in.problem.targets.y_d1.data()) EXPECT_EQ(v, 0.0);

  c.targets.kind = TargetSpec::Kind::constant;
  c.targets.form = TargetSpec::Form::physical;
  in = build_instance(c);
  bool infinite = false;
  for (double v : in.reduced_targets.y_d0.data()) infinite |= std::isinf(v);
  EXPECT_TRUE(infinite);
  EXPECT_EQ(in.problem.targets.y_d0.node(0, 0)[6], 1.0);
}

TEST(Run, SimulateZeroDataGivesZeroTables) {
  ExperimentConfig c = small_config("simulate_zero");
  c.initial.kind = InitialSpec::Kind::zero;
  RunRecord r = run_experiment("simulate", c);
  EXPECT_TRUE(r.ok);
  std::istringstream energy(slurp(r.out_dir / "energy.csv"));
  std::string line;
  std::getline(energy, line);
  EXPECT_EQ(line, "level,time,mean_square");
  std::size_t rows = 0;
  while (std::getline(energy, line)) {
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "0");
    ++rows;
  }
  EXPECT_EQ(rows, c.depth + 1);
}

TEST(Run, ManifestMatchesFilesOnDisk) {
  ExperimentConfig c = small_config("manifest");
  RunRecord r = run_experiment("nullcontrol", c);
  const auto lines = file_lines(r.out_dir / "manifest.txt");
  ASSERT_EQ(lines.size(), r.files.size());
  std::set<std::string> names;
  for (const auto& f : r.files) {
    EXPECT_EQ(sha256_hex(slurp(r.out_dir / f.name)), f.sha256) << f.name;
    names.insert(f.name);
  }
  for (const char* n : {"config.ini", "report.txt", "sweep.csv"}) EXPECT_TRUE(names.count(n)) << n;
  const std::string report = slurp(r.out_dir / "report.txt");
  EXPECT_EQ(report.find("time"), std::string::npos);
  EXPECT_NE(report.find("status: ok"), std::string::npos);
}

TEST(Run, RecordedConfigParsesBack) {
  ExperimentConfig c = small_config("config_back");
  RunRecord r = run_experiment("simulate", c);
  ExperimentConfig back = parse_config(r.out_dir / "config.ini");
  EXPECT_EQ(back.n, c.n);
  EXPECT_EQ(back.model.k, c.model.k);
  EXPECT_EQ(sha256_hex(slurp(r.out_dir / "config.ini")), r.config_sha256);
}

TEST(Run, StackelbergDigestsReproducible) {
  ExperimentConfig a = small_config("repro_a");
  ExperimentConfig b = small_config("repro_b");
  RunRecord ra = run_experiment("stackelberg", a);
  RunRecord rb = run_experiment("stackelberg", b);
  EXPECT_EQ(file_lines(ra.out_dir / "manifest.txt"), file_lines(rb.out_dir / "manifest.txt"));
  const std::string report = slurp(ra.out_dir / "report.txt");
  EXPECT_NE(report.find("empirical_C_T"), std::string::npos);
  EXPECT_NE(report.find("terminal_energy"), std::string::npos);
}

TEST(Run, SeedChangesDigests) {
  ExperimentConfig a = small_config("seed_a");
  ExperimentConfig b = small_config("seed_b");
  b.seed = 2;
  RunRecord ra = run_experiment("simulate", a);
  RunRecord rb = run_experiment("simulate", b);
  EXPECT_NE(ra.files[1].sha256, rb.files[1].sha256);
}

TEST(Run, FailedStagePersistsPartialOutputs) {
  ExperimentConfig c = small_config("failed");
  c.targets.kind = TargetSpec::Kind::constant;
  c.targets.value = 1.0;
  try {
    run_experiment("stackelberg", c);
    FAIL() << "expected a stage failure";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "validate");
    EXPECT_NE(std::string(e.what()).find("weighted norm"), std::string::npos);
    EXPECT_EQ(exit_code(e), 2);
  }
  const auto dir = std::filesystem::path(c.out);
  const std::string report = slurp(dir / "report.txt");
  EXPECT_NE(report.find("failed_stage: validate"), std::string::npos);
  EXPECT_NE(slurp(dir / "manifest.txt").find("status failed"), std::string::npos);
}

TEST(Run, SolverFailureExitCode) {
  ExperimentConfig c = small_config("solver_failure");
  c.solver.saddle.max_iter = 1;
  c.solver.saddle.stall_floor = 1e-300;
  try {
    run_experiment("saddle", c);
    FAIL() << "expected a stage failure";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "picard");
    EXPECT_EQ(exit_code(e), 3);
  }
}

TEST(Run, ShallowTreeRejectedByCarlemanCheck) {
  ExperimentConfig c = small_config("shallow");
  c.depth = 3;
  try {
    run_experiment("carleman-check", c);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(exit_code(e), 2);
  }
}

TEST(Run, UnknownSubcommand) {
  EXPECT_THROW(run_experiment("plot", small_config("unknown")), InvalidArgument);
}

TEST(Run, ExitCodes) {
  EXPECT_EQ(exit_code(ValidationError({"x"})), 2);
  EXPECT_EQ(exit_code(ParseError(1, "x")), 2);
  EXPECT_EQ(exit_code(ViolatedGeometry("O-D-overlap")), 2);
  EXPECT_EQ(exit_code(SolverError("x")), 3);
  EXPECT_EQ(exit_code(StageError("sweep", "x")), 3);
  EXPECT_EQ(exit_code(StageError("validate", "x", true)), 2);
}
