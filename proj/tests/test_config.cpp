#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "kslab/config.hpp"
#include "kslab/errors.hpp"

using namespace kslab;

namespace {

std::vector<std::string> issues_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ValidationError& e) {
    return e.issues();
  }
  return {};
}

bool mentions(const std::vector<std::string>& issues, const std::string& needle) {
  for (const auto& s : issues)
    if (s.find(needle) != std::string::npos) return true;
  return false;
}

std::size_t parse_error_line(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "kslab_test_config";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  ExperimentConfig c = parse_config_text("");
  EXPECT_EQ(c.n, 24u);
  EXPECT_EQ(c.depth, 7u);
  EXPECT_EQ(c.model.k, 40.0);
  EXPECT_EQ(c.regions.size(), 6u);
  EXPECT_FALSE(c.lambda.has_value());
  EXPECT_EQ(carleman_params(c).lambda, 4.0);
  EXPECT_EQ(c.penalty.schedule.back(), 1e-6);
}

TEST(Config, MinimalConfigAccepted) {
  ExperimentConfig c = parse_config_text("# small\n[grid]\nn = 16\n\n[run]\nseed = 9\n");
  EXPECT_EQ(c.n, 16u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.depth, 7u);
}

TEST(Config, RoundTripDefault) {
  ExperimentConfig c;
  const std::string text = serialize(c);
  EXPECT_EQ(serialize(parse_config_text(text)), text);
}

TEST(Config, RoundTripNonDefault) {
  const auto table = scratch("a.table");
  {
    std::ofstream out(table);
    out << "2 2\n0.1 0.2\n0.3 0.4\n";
  }
  ExperimentConfig c;
  c.n = 31;
  c.depth = 4;
  c.model.T = 0.1 + 0.2;  // not exactly representable in short form
  c.model.b = CoefficientField(2, 3, {0.1, -0.2, 1.0 / 3.0, 4.0, 5.0, -6.0});
  c.model.a = read_coefficient_table(table);
  c.a_file = table.string();
  c.game = {2e3, 3e3, 4e3};
  c.lambda = 7.25;
  c.mu = 1.5;
  c.targets.kind = TargetSpec::Kind::random;
  c.targets.value = 0.125;
  c.targets.form = TargetSpec::Form::reduced;
  c.initial.kind = InitialSpec::Kind::sine;
  c.initial.modes = 3;
  c.initial.amplitude = 2.0 / 3.0;
  c.penalty.schedule = {0.5, 1e-3};
  c.penalty.cg_tol = 1e-9;
  c.penalty.cg_max_iter = 77;
  c.solver.saddle.tol = 1e-11;
  c.solver.adjoint.max_iter = 55;
  c.seed = 18446744073709551615ULL;
  c.out = "runs/x";
  c.samples = 12;
  validate(c);

  const std::string text = serialize(c);
  ExperimentConfig back = parse_config_text(text);
  EXPECT_EQ(serialize(back), text);
  EXPECT_EQ(back.model.T, c.model.T);
  EXPECT_EQ(back.model.b, c.model.b);
  EXPECT_EQ(back.model.a, c.model.a);
  EXPECT_EQ(back.initial.amplitude, c.initial.amplitude);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(*back.lambda, 7.25);
}

TEST(Config, FileCoefficientResolvedAgainstConfigDirectory) {
  const auto table = scratch("b.table");
  {
    std::ofstream out(table);
    out << "1 2 0.5 -0.5\n";
  }
  const auto cfg = scratch("rel.ini");
  {
    std::ofstream out(cfg);
    out << "[model]\nb = file:b.table\n";
  }
  ExperimentConfig c = parse_config(cfg);
  EXPECT_EQ(c.model.b.cols(), 2u);
  EXPECT_EQ(c.model.b.values()[1], -0.5);
  EXPECT_TRUE(std::filesystem::path(c.b_file).is_absolute());
}

TEST(Config, OverlappingControlRegions) {
  auto issues = issues_of("[regions]\nD = 0.3, 0.45\n");
  EXPECT_TRUE(mentions(issues, "O-D-overlap"));
}

TEST(Config, NonPositivePenalty) {
  auto issues = issues_of("[game]\ndelta2 = 0\n");
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_TRUE(mentions(issues, "game.delta2"));
}

TEST(Config, AllViolationsReported) {
  auto issues = issues_of(
      "[grid]\nn = 4\n[model]\nT = -1\n[game]\nbeta = 0\n[penalty]\ncg_tol = 2\n"
      "schedule = 1e-3, 1e-2\n[carleman]\nmu = 0.5\n[run]\nsamples = 0\n");
  for (const char* field : {"grid.n", "model.T", "game.beta", "penalty.cg_tol", "penalty:",
                            "carleman.mu", "run.samples"})
    EXPECT_TRUE(mentions(issues, field)) << field;
}

TEST(Config, IntervalAndWeightRegion) {
  EXPECT_TRUE(mentions(issues_of("[regions]\nO = 0.5, 0.2\n"), "regions.O"));
  EXPECT_TRUE(mentions(issues_of("[regions]\nO = 0.02, 0.5\nOd0 = 0.02, 0.7\nB = 0.05, 0.15\n"),
                       "regions.B"));
}

TEST(Config, ToleranceRange) {
  EXPECT_TRUE(mentions(issues_of("[solver]\nsaddle_tol = 0\n"), "solver.saddle_tol"));
  EXPECT_TRUE(mentions(issues_of("[solver]\nadjoint_tol = 1\n"), "solver.adjoint_tol"));
}

TEST(Config, MissingFilesAreValidationIssues) {
  EXPECT_TRUE(mentions(issues_of("[targets]\nspec = file:/nonexistent/t.txt\n"), "targets.spec"));
  EXPECT_TRUE(mentions(issues_of("[initial]\nprofile = file:/nonexistent/y0.txt\n"),
                       "initial.profile"));
}

TEST(Config, ParseErrorsCarryLine) {
  EXPECT_EQ(parse_error_line("[grid]\n\nn = x\n"), 3u);
  EXPECT_EQ(parse_error_line("n = 3\n"), 1u);
  EXPECT_EQ(parse_error_line("[grid]\nsize = 3\n"), 2u);
  EXPECT_EQ(parse_error_line("[nope]\nn = 3\n"), 2u);
  EXPECT_EQ(parse_error_line("[grid]\nn = 12\nn = 13\n"), 3u);
  EXPECT_EQ(parse_error_line("[grid\n"), 1u);
  EXPECT_EQ(parse_error_line("[grid]\nn 12\n"), 2u);
  EXPECT_EQ(parse_error_line("[targets]\nspec = sometimes\n"), 2u);
  EXPECT_EQ(parse_error_line("[model]\na = table 2 2 1 2 3\n"), 2u);
  EXPECT_EQ(parse_error_line("[regions]\nO = 0.1\n"), 2u);
}

TEST(Config, ParseErrorNamesField) {
  try {
    parse_config_text("[game]\nbeta = lots\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("game.beta"), std::string::npos);
  }
}
