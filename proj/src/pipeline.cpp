#include "kslab/pipeline.hpp"

#include <cmath>
#include <sstream>

#include "kslab/errors.hpp"

namespace kslab {

namespace {

Targets rescale(const Targets& in, const WeightModel& weights, const BinomialTree& tree,
                double sign) {
  Targets out = in;
  for (TreeProcess* p : {&out.y_d0, &out.y_d1, &out.y_d2}) {
    if (p->width() == 0) continue;
    for (std::size_t l = 0; l <= tree.depth(); ++l) {
      const double shift = sign * weights.log_rho(tree.time(l));
      for (double& v : p->level(l)) {
        if (v == 0.0) continue;
        if (std::isinf(shift)) {
          v = shift > 0.0 ? std::copysign(INFINITY, v) : 0.0;
          continue;
        }
        v = std::copysign(std::exp(std::log(std::abs(v)) + shift), v);
      }
    }
  }
  return out;
}

}  // namespace

Targets targets_from_reduced(const Targets& reduced, const WeightModel& weights,
                             const BinomialTree& tree) {
  return rescale(reduced, weights, tree, -1.0);
}

Targets reduced_from_targets(const Targets& targets, const WeightModel& weights,
                             const BinomialTree& tree) {
  return rescale(targets, weights, tree, 1.0);
}

PipelineReport stackelberg_pipeline(const PipelineInputs& inputs, const BinomialTree& tree,
                                    const Grid& grid) {
  PipelineReport rep;
  GameProblem problem = inputs.problem;
  problem.f = TreeProcess();
  problem.g = TreeProcess();

  with_stage("validate", [&] {
    std::vector<std::string> issues;
    auto collect = [&](auto&& check) {
      try {
        check();
      } catch (const Error& e) {
        issues.push_back(e.what());
      }
    };
    collect([&] { validate(problem.params); });
    collect([&] { validate(problem.game); });
    collect([&] { validate(inputs.penalty); });
    collect([&] { validate(inputs.carleman); });
    if (problem.y0.size() != grid.size()) issues.push_back("y0 size does not match the grid");
    const Region regions[3] = {Region::Od0, Region::Od1, Region::Od2};
    const TreeProcess* reduced[3] = {&inputs.reduced_targets.y_d0,
                                     &inputs.reduced_targets.y_d1,
                                     &inputs.reduced_targets.y_d2};
    double norm = 0.0;
    for (int i = 0; i < 3; ++i) {
      if (reduced[i]->width() == 0) continue;
      norm += space_time_norm_sq(tree, grid.h, *reduced[i], problem.masks[regions[i]]);
    }
    if (!std::isfinite(norm)) {
      issues.push_back("targets: weighted norm E sum rho^2 |y_d|^2 chi exceeds the double range");
    }
    rep.weighted_target_norm = norm;
    if (!issues.empty()) throw ValidationError(issues);
    const WeightModel weights(inputs.carleman, construct_kappa(inputs.b), problem.params.T);
    problem.targets = targets_from_reduced(inputs.reduced_targets, weights, tree);
    return 0;
  });

  rep.initial_energy = grid_dot(grid, problem.y0, problem.y0);
  rep.final_epsilon = inputs.penalty.schedule.back();

  rep.large_parameters = with_stage("large-parameters", [&] {
    LargeParameterCheck c = check_large_parameters(problem, tree, grid);
    if (!c.passed) {
      std::ostringstream msg;
      msg << "contraction estimate " << c.estimate << " >= " << c.threshold;
      throw ValidationError({msg.str()});
    }
    return c;
  });

  SweepResult sweep = with_stage("sweep", [&] {
    return epsilon_sweep(problem, inputs.penalty, tree, grid, inputs.solver);
  });
  rep.sweep = sweep.rows;
  rep.f_hat = sweep.last.f;
  rep.g_hat = sweep.last.g;
  rep.value = sweep.last.value;
  rep.characterization_f = sweep.last.characterization_f;
  rep.characterization_g = sweep.last.characterization_g;

  rep.saddle = with_stage("saddle", [&] {
    GameProblem at = problem;
    at.f = rep.f_hat;
    at.g = rep.g_hat;
    return solve_saddle_point(at, tree, grid, inputs.solver.saddle);
  });
  rep.terminal_energy = level_inner(grid.h, rep.saddle.y.y, rep.saddle.y.y, tree.depth());

  with_stage("estimate", [&] {
    rep.control_norm_sq = control_norm_sq(rep.f_hat, tree, grid, &problem.masks[Region::O]) +
                          control_norm_sq(rep.g_hat, tree, grid);
    const double denom = rep.initial_energy + rep.weighted_target_norm;
    if (denom > 0.0) {
      rep.estimate_ratio = rep.control_norm_sq / denom;
    } else if (rep.control_norm_sq > 0.0) {
      throw SolverError("nonzero controls for zero data");
    }
    return 0;
  });
  return rep;
}

}  // namespace kslab
