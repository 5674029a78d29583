// Command-line front end: kslab <subcommand> --config <path> [overrides].

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>

#include "kslab/errors.hpp"
#include "kslab/experiment.hpp"

namespace {

void override_final_epsilon(kslab::PenalizedConfig& p, double eps) {
  std::vector<double> schedule;
  for (double e : p.schedule)
    if (e > eps) schedule.push_back(e);
  schedule.push_back(eps);
  p.schedule = schedule;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic KS-KdV robust Stackelberg control lab"};
  app.set_version_flag("--version", kslab::version());
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> n, depth;
  std::optional<double> eps;

  for (const auto& name : kslab::subcommands()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--n", n, "interior grid points");
    sub->add_option("--depth", depth, "tree depth");
    sub->add_option("--eps", eps, "final penalty epsilon");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string subcommand = app.get_subcommands().front()->get_name();

  try {
    kslab::ExperimentConfig config = kslab::parse_config(config_path);
    if (seed) config.seed = *seed;
    if (out) config.out = *out;
    if (n) config.n = *n;
    if (depth) config.depth = *depth;
    if (eps) override_final_epsilon(config.penalty, *eps);
    kslab::validate(config);

    const kslab::RunRecord r = kslab::run_experiment(subcommand, config);
    std::cout << subcommand << ": ok, " << r.files.size() << " files in "
              << r.out_dir.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "kslab " << subcommand << ": " << e.what() << "\n";
    return kslab::exit_code(e);
  }
}
