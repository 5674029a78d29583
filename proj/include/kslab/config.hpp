#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kslab/carleman.hpp"
#include "kslab/control.hpp"

namespace kslab {

/// Tracking targets. `form` says whether the values are the targets y_d
/// themselves (physical) or rho y_d (reduced).
struct TargetSpec {
  enum class Kind { zero, constant, random, file };
  enum class Form { physical, reduced };
  Kind kind = Kind::zero;
  Form form = Form::physical;
  double value = 0.0;  // constant value or random scale
  std::string path;    // file: lines "<component> <level> <node> v_1 ... v_n"
};

/// y0 = amplitude * profile.
///   random:M  sum_{m<=M} xi_m / m sin(m pi x), xi_m standard normal
///   sine:m    sin(m pi x)
///   file      whitespace-separated values, one per interior grid point
struct InitialSpec {
  enum class Kind { zero, random, sine, file };
  Kind kind = Kind::random;
  std::size_t modes = 4;
  double amplitude = 1.0;
  std::string path;
};

struct ExperimentConfig {
  std::size_t n = 24;
  std::size_t depth = 7;
  ModelParams model = default_model();
  std::string a_file;  // set when model.a was read from a table file
  std::string b_file;
  GameParams game;
  std::vector<std::pair<Region, Interval>> regions = default_regions();
  std::optional<double> lambda;  // unset: 2 (T + T^2)
  double mu = 2.0;
  TargetSpec targets;
  InitialSpec initial;
  PenalizedConfig penalty;
  SolverOptions solver;
  std::uint64_t seed = 1;
  std::string out = "out";
  std::size_t samples = 100;

  static ModelParams default_model();
  static std::vector<std::pair<Region, Interval>> default_regions();
};

CarlemanParams carleman_params(const ExperimentConfig& config);
Interval region_interval(const ExperimentConfig& config, Region r);

/// Every violated constraint, each prefixed by its section.field.
std::vector<std::string> validation_issues(const ExperimentConfig& config);

/// Throws ValidationError with all issues.
void validate(const ExperimentConfig& config);

/// Line-oriented format: "[section]" headers, "key = value" pairs, '#'
/// comments. Relative file paths are resolved against `base_dir`.
/// Throws ParseError on malformed text, ValidationError on constraint
/// violations.
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::filesystem::path& base_dir = {});
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Canonical text; numbers with 17 significant digits.
std::string serialize(const ExperimentConfig& config);

/// Piecewise-constant table file: "rows cols" followed by rows*cols values.
CoefficientField read_coefficient_table(const std::filesystem::path& path);

}  // namespace kslab
