#pragma once

#include <exception>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "kslab/config.hpp"
#include "kslab/pipeline.hpp"

namespace kslab {

/// Grid, tree and game data built from a config. `targets` are the
/// physical y_d, `reduced_targets` are rho y_d (possibly infinite).
struct Instance {
  Grid grid;
  BinomialTree tree;
  GameProblem problem;
  Targets reduced_targets;
  CarlemanParams carleman;
  Interval b;
};

Instance build_instance(const ExperimentConfig& config);

/// y0 from the initial-state spec on the given grid.
std::vector<double> initial_state(const InitialSpec& spec, const Grid& grid, std::uint64_t seed);

struct ManifestEntry {
  std::string name;
  std::string sha256;
  std::size_t bytes = 0;
};

struct RunRecord {
  std::string subcommand;
  std::string version;
  std::string config_sha256;
  std::filesystem::path out_dir;
  bool ok = true;
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage
  std::vector<ManifestEntry> files;                     // manifest.txt itself excluded
};

const std::vector<std::string>& subcommands();

/// Runs one subcommand and writes config.ini, report.txt, the CSV tables
/// and manifest.txt into config.out. On failure the outputs produced so far
/// and a report naming the stage are written before the StageError is
/// rethrown.
RunRecord run_experiment(const std::string& subcommand, const ExperimentConfig& config);

std::string sha256_hex(const std::string& bytes);

/// 0 success, 2 validation failure, 3 solver failure.
int exit_code(const std::exception& e);

const char* version();

}  // namespace kslab
