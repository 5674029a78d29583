#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kslab/assembly.hpp"
#include "kslab/spde.hpp"

namespace kslab {

struct GameParams {
  double beta = 1e3;    // follower penalty
  double delta1 = 1e3;  // drift disturbance penalty
  double delta2 = 1e3;  // diffusion disturbance penalty
};

/// Throws InvalidArgument unless all three are strictly positive and finite.
void validate(const GameParams& game);

/// Tracking targets for y, y_x and y_xx. A default-constructed process is
/// zero. Values outside the respective observation region are ignored: every
/// use multiplies by the region mask.
struct Targets {
  TreeProcess y_d0;
  TreeProcess y_d1;
  TreeProcess y_d2;
};

/// Named contributions, signed so that they sum to `total`.
struct CostReport {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> terms;

  /// Value of a named term; throws InvalidArgument when absent.
  double term(const std::string& name) const;
};

/// Data of one follower/disturbance game with the leaders (f, g) fixed.
struct GameProblem {
  std::vector<double> y0;
  TreeProcess f;
  TreeProcess g;
  Targets targets;
  ModelParams params;
  RegionMask masks;
  GameParams game;
};

/// D1, D2 and the mask-weighted normal operator
/// K = M0 + D1^T M1 D1 + D2^T M2 D2 of the tracking terms.
struct TrackingOperators {
  BandedOperator d1;
  BandedOperator d2;
  BandedOperator d1t;
  BandedOperator d2t;
  BandedOperator normal;
  std::vector<double> m0;
  std::vector<double> m1;
  std::vector<double> m2;
};

TrackingOperators build_tracking_operators(const Grid& grid, const RegionMask& masks);

/// S = -sum_i D_i^T M_i (D_i y - y_d^i) with D_0 = I, at every node.
TreeProcess tracking_source(const TreeProcess& y, const Targets& targets,
                            const TrackingOperators& ops, const BinomialTree& tree);

/// sum_i D_i^T M_i y_d^i; the affine part of the tracking source.
TreeProcess target_source(const Targets& targets, const TrackingOperators& ops,
                          const BinomialTree& tree, std::size_t width);

/// J_r = tracking/2 + (beta/2)||v||_D^2 - (delta1/2)||psi1||^2 - (delta2/2)||psi2||^2,
/// integrals as E sum_{l<N} dt <., .>_h.
/// Terms: tracking0, tracking1, tracking2, follower, disturbance1, disturbance2.
CostReport evaluate_robust_cost(const ForwardSolution& y, const TreeProcess& v,
                                const TreeProcess& psi1, const TreeProcess& psi2,
                                const Targets& targets, const RegionMask& masks,
                                const GameParams& game, const BinomialTree& tree,
                                const Grid& grid);

/// J = (1/2) E sum dt (||f||_O^2 + ||g||^2). Terms: f, g.
CostReport evaluate_leader_cost(const TreeProcess& f, const TreeProcess& g,
                                const RegionMask& masks, const BinomialTree& tree,
                                const Grid& grid);

/// J_r without the disturbance terms. Terms: tracking0..2, follower.
CostReport evaluate_follower_cost(const ForwardSolution& y, const TreeProcess& v,
                                  const Targets& targets, const RegionMask& masks,
                                  double beta, const BinomialTree& tree, const Grid& grid);

struct SaddleOptions {
  double tol = 1e-12;          // relative change of (z, Z) between iterates
  std::size_t max_iter = 200;
  double relaxation = 1.0;     // initial damping factor, halved on residual growth
  bool check_contraction = true;
  double contraction_threshold = 0.9;
  /// A residual increase below this level is taken as the roundoff floor
  /// and ends the iteration as converged.
  double stall_floor = 1e-10;
};

struct SaddleSolution {
  TreeProcess psi1_star;
  TreeProcess psi2_star;
  TreeProcess v_star;
  ForwardSolution y;
  BackwardSolution adjoint;  // (z, Z) of the follower adjoint
  std::size_t picard_iterations = 0;
  double residual = 0.0;
  std::vector<double> trace;  // relative residual per iteration
};

/// psi1 = z / delta1, psi2 = Z / delta2, v = -z chi_D / beta.
void characterize(const BackwardSolution& adjoint, const RegionMask& masks,
                  const GameParams& game, TreeProcess& psi1, TreeProcess& psi2,
                  TreeProcess& v);

/// Forward inputs of the game state for given disturbances and follower.
ForwardInputs game_forward_inputs(const GameProblem& problem, const TreeProcess& psi1,
                                  const TreeProcess& psi2, const TreeProcess& v);

/// Spectral-radius estimate of the homogeneous Picard map
/// (z, Z) -> adjoint(state(psi(z, Z), v(z))) by power iteration.
double contraction_estimate(const GameProblem& problem, const BinomialTree& tree,
                            const Grid& grid, std::size_t iterations = 30,
                            std::uint64_t seed = 1);

struct LargeParameterCheck {
  double estimate = 0.0;
  double threshold = 0.9;
  bool passed = false;
};

LargeParameterCheck check_large_parameters(const GameProblem& problem,
                                           const BinomialTree& tree, const Grid& grid,
                                           double threshold = 0.9);

/// Picard iteration on the characterized optimality system. Throws
/// InvalidArgument when options.check_contraction is set and the
/// large-parameter check fails, NonContraction when the iteration stalls.
SaddleSolution solve_saddle_point(const GameProblem& problem, const BinomialTree& tree,
                                  const Grid& grid, const SaddleOptions& options = {});

/// Same system solved globally with the sparse direct assembly.
SaddleSolution direct_assembly_solve(const GameProblem& problem, const BinomialTree& tree,
                                     const Grid& grid, double* assembly_residual = nullptr);

/// Coupled system of the saddle point (fields: 0 = y forward, 1 = z backward).
CoupledSystem saddle_system(const GameProblem& problem, const BinomialTree& tree,
                            const Grid& grid);

/// J_r at the given disturbances and follower, re-solving the state.
CostReport robust_cost_at(const GameProblem& problem, const TreeProcess& psi1,
                          const TreeProcess& psi2, const TreeProcess& v,
                          const BinomialTree& tree, const Grid& grid);

struct FirstOrderReport {
  double max_residual = 0.0;
  std::vector<double> residuals;  // per probe
};

/// Centered finite-difference directional derivatives of J_r at the saddle
/// along random unit directions in psi1, psi2 and v separately. Each residual
/// is |slope| / (|curvature| * ||(psi1*, psi2*, v*)||), or |slope| when the
/// denominator vanishes.
FirstOrderReport verify_first_order_conditions(const GameProblem& problem,
                                               const SaddleSolution& saddle,
                                               const BinomialTree& tree, const Grid& grid,
                                               std::size_t n_directions, std::uint64_t seed,
                                               double step = 1e-4);

struct SaddleMarginReport {
  double worst_concave_margin = 0.0;  // min of J* - J(psi* + dpsi, v*)
  double worst_convex_margin = 0.0;   // min of J(psi*, v* + dv) - J*
  std::size_t samples = 0;
  std::size_t violations = 0;
  bool parameters_validated = false;
};

/// Samples random perturbations of size `scale` (relative to the saddle
/// norm, or absolute when the saddle is zero).
SaddleMarginReport verify_saddle_inequalities(const GameProblem& problem,
                                              const SaddleSolution& saddle,
                                              const BinomialTree& tree, const Grid& grid,
                                              std::size_t n_samples, std::uint64_t seed,
                                              double scale = 1.0);

}  // namespace kslab
