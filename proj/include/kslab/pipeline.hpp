#pragma once

#include <string>
#include <vector>

#include "kslab/carleman.hpp"
#include "kslab/control.hpp"

namespace kslab {

/// y_d = rho^{-1} r nodewise, evaluated as sign(r) exp(log|r| - log rho);
/// entries below the double range become 0.
Targets targets_from_reduced(const Targets& reduced, const WeightModel& weights,
                             const BinomialTree& tree);

/// r = rho y_d nodewise in log space; entries above the double range become
/// +-inf.
Targets reduced_from_targets(const Targets& targets, const WeightModel& weights,
                             const BinomialTree& tree);

struct PipelineInputs {
  GameProblem problem;      // f, g and targets are ignored; the sweep starts at zero
  Targets reduced_targets;  // r_i = rho y_d^i; defines the weighted target norm
  PenalizedConfig penalty;
  SolverOptions solver;
  CarlemanParams carleman;
  Interval b{0.35, 0.45};   // support of the Carleman weight's observation set
};

struct PipelineReport {
  std::string convention = "p(T) = +y(T)/eps; optimum (f, g) = (-p chi_O, -P)";
  LargeParameterCheck large_parameters;
  std::vector<SweepRow> sweep;
  TreeProcess f_hat;
  TreeProcess g_hat;
  SaddleSolution saddle;
  double final_epsilon = 0.0;
  double initial_energy = 0.0;   // E ||y0||^2
  double terminal_energy = 0.0;  // E ||y(T)||^2 at (f_hat, g_hat)
  double value = 0.0;            // J_eps at the final epsilon
  double characterization_f = 0.0;
  double characterization_g = 0.0;
  double control_norm_sq = 0.0;  // ||f_hat||_O^2 + ||g_hat||^2
  double weighted_target_norm = 0.0;
  double estimate_ratio = 0.0;   // control_norm_sq / (initial_energy + weighted_target_norm)
};

/// The game targets are rho^{-1} reduced_targets. Stages: validate,
/// large-parameters, sweep, saddle, estimate. Failures are rethrown as
/// StageError naming the stage.
PipelineReport stackelberg_pipeline(const PipelineInputs& inputs, const BinomialTree& tree,
                                    const Grid& grid);

}  // namespace kslab
