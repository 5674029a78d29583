#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kslab/game.hpp"

namespace kslab {

struct PenalizedConfig {
  std::vector<double> schedule{1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  double cg_tol = 1e-8;
  std::size_t cg_max_iter = 2000;
};

/// Throws InvalidArgument unless the schedule is nonempty, positive and
/// strictly decreasing and the CG settings are positive.
void validate(const PenalizedConfig& config);

struct AdjointOptions {
  double tol = 1e-12;
  std::size_t max_iter = 200;
  double relaxation = 1.0;
  double stall_floor = 1e-10;  // as in SaddleOptions
};

/// Solution of the coupled adjoint of the optimality system:
/// (p, P) backward with terminal p_T and source K q, q forward from 0 with
/// drift (chi_D / beta - 1 / delta1) p and diffusion -P / delta2.
struct AdjointSolution {
  BackwardSolution p;  // p.z, p.Z, p.state
  TreeProcess q;
  std::size_t iterations = 0;
  double residual = 0.0;
  std::vector<double> trace;
};

AdjointSolution solve_adjoint_system(const TreeProcess& p_terminal, const ModelParams& params,
                                     const GameParams& game, const RegionMask& masks,
                                     const BinomialTree& tree, const Grid& grid,
                                     const AdjointOptions& options = {});

/// Fields: 0 = q forward, 1 = p backward.
CoupledSystem adjoint_system(const TreeProcess& p_terminal, const GameProblem& problem,
                             const Grid& grid);

/// Full first-order system of the penalized leader problem with the leaders
/// eliminated through f = -p chi_O, g = -P.
/// Fields: 0 = y, 1 = z, 2 = p, 3 = q.
CoupledSystem penalized_kkt_system(const GameProblem& problem, double epsilon,
                                   const BinomialTree& tree, const Grid& grid);

struct SolverOptions {
  SaddleOptions saddle{1e-13, 400, 1.0, false, 0.9, 1e-10};
  AdjointOptions adjoint{1e-13, 400, 1.0, 1e-10};
};

/// J_eps = (1/2) E sum dt (||f||_O^2 + ||g||^2) + (1/(2 eps)) E ||y(T)||^2.
struct PenalizedGradient {
  TreeProcess grad_f;  // (f + p) chi_O at levels 0..N-1
  TreeProcess grad_g;  // g + P at levels 0..N-1
  SaddleSolution saddle;
  AdjointSolution adjoint;
  double terminal_energy = 0.0;  // E ||y(T)||^2
  double value = 0.0;            // J_eps
};

/// Gradient at the leaders problem.f, problem.g. Adjoint convention:
/// p(T) = y(T) / eps, so the optimum satisfies (f, g) = (-p chi_O, -P).
PenalizedGradient penalized_gradient(const GameProblem& problem, double epsilon,
                                     const BinomialTree& tree, const Grid& grid,
                                     const SolverOptions& options = {});

/// J_eps at the leaders problem.f, problem.g.
double penalized_value(const GameProblem& problem, double epsilon, const BinomialTree& tree,
                       const Grid& grid, const SolverOptions& options = {});

struct PenalizedResult {
  TreeProcess f;
  TreeProcess g;
  SaddleSolution saddle;
  AdjointSolution adjoint;
  double epsilon = 0.0;
  double value = 0.0;
  double terminal_energy = 0.0;
  double f_norm_sq = 0.0;
  double g_norm_sq = 0.0;
  double characterization_f = 0.0;  // ||f + p chi_O|| / (1 + ||f||)
  double characterization_g = 0.0;  // ||g + P|| / (1 + ||g||)
  std::size_t iterations = 0;
  std::size_t restarts = 0;
  bool converged = false;
  std::vector<double> value_history;  // J_eps after each accepted CG step
};

/// Conjugate gradients on J_eps over (f, g), started from problem.f,
/// problem.g (zero when unset). Stops when both characterization residuals
/// are <= cg_tol at a freshly evaluated gradient. On cg_max_iter the partial
/// result is returned with converged = false.
PenalizedResult minimize_penalized(const GameProblem& problem, double epsilon,
                                   const PenalizedConfig& config, const BinomialTree& tree,
                                   const Grid& grid, const SolverOptions& options = {});

struct SweepRow {
  double epsilon = 0.0;
  double terminal_energy = 0.0;
  double f_norm_sq = 0.0;
  double g_norm_sq = 0.0;
  double value = 0.0;
  double characterization_f = 0.0;
  double characterization_g = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  PenalizedResult last;
};

/// One minimize_penalized per schedule entry, warm-started.
SweepResult epsilon_sweep(const GameProblem& problem, const PenalizedConfig& config,
                          const BinomialTree& tree, const Grid& grid,
                          const SolverOptions& options = {});

/// ||u||^2 over levels 0..N-1 with optional mask.
double control_norm_sq(const TreeProcess& u, const BinomialTree& tree, const Grid& grid,
                       const std::vector<double>* mask = nullptr);

}  // namespace kslab
