#pragma once

#include <optional>
#include <vector>

#include "kslab/banded.hpp"
#include "kslab/spatial.hpp"
#include "kslab/tree.hpp"

namespace kslab {

/// Everything a tree sweep needs, prepared once: the forward drift L, the
/// factorization of I + dt L and the zero-order coefficients sampled per level.
class SpdeContext {
 public:
  /// `drift` replaces the default k D2 + D3 + eta D4.
  SpdeContext(const Grid& grid, const BinomialTree& tree, const ModelParams& params,
              std::optional<BandedOperator> drift = std::nullopt);

  const Grid& grid() const { return grid_; }
  const BinomialTree& tree() const { return tree_; }
  const ModelParams& params() const { return params_; }
  const BandedOperator& drift() const { return drift_; }
  const ShiftedSystem& implicit_step() const { return implicit_; }
  const std::vector<double>& a(std::size_t level) const { return a_[level]; }
  const std::vector<double>& b(std::size_t level) const { return b_[level]; }

  TreeProcess zero_process() const { return TreeProcess(tree_, grid_.size()); }

 private:
  Grid grid_;
  BinomialTree tree_;
  ModelParams params_;
  BandedOperator drift_;
  ShiftedSystem implicit_;
  std::vector<std::vector<double>> a_;
  std::vector<std::vector<double>> b_;
};

/// Data of dy + L y dt = [a y + f chi_O + v chi_D + psi1] dt
///                        + [b y + g + psi2] dW,  y(0) = y0.
/// Processes left default-constructed count as zero. Only levels 0..N-1 of
/// the sources are used.
struct ForwardInputs {
  std::vector<double> y0;
  TreeProcess f;
  TreeProcess g;
  TreeProcess v;
  TreeProcess psi1;
  TreeProcess psi2;
  ModelParams params;
  RegionMask masks;
  std::optional<BandedOperator> drift;

  /// f chi_O + v chi_D + psi1
  TreeProcess drift_source(const BinomialTree& tree, const Grid& grid) const;
  /// g + psi2
  TreeProcess diffusion_source(const BinomialTree& tree, const Grid& grid) const;
};

struct ForwardSolution {
  TreeProcess y;
};

/// Data of dz - L^* z dt = [-a z - b Z + S] dt + Z dW,  z(T) = terminal.
/// The drift is affine in (z, Z) by construction: the zero-order
/// coefficients come from `params`, `source` is the state-independent part.
struct BackwardInputs {
  TreeProcess terminal;  // only level N is read
  TreeProcess source;    // S; default-constructed means zero
  ModelParams params;
  std::optional<BandedOperator> drift;  // forward-convention L; its transpose is used
};

/// Backward sweep output.
///  - `state` is the backward state at every level (level N = terminal,
///    level 0 = value at t = 0).
///  - `z`, `Z` at level l < N solve (I + dt L)^T z = E[state(l+1) | node] and
///    (I + dt L)^T Z = martingale coefficient of state(l+1); these are the
///    values the level-l forward sources pair with. Level N of `z` holds the
///    terminal value, level N of `Z` is zero.
struct BackwardSolution {
  TreeProcess state;
  TreeProcess z;
  TreeProcess Z;
};

/// Implicit in the stiff drift, explicit in a, b and the noise:
/// (I + dt L) y(child+-) = y + dt (a y + F) +- sqrt(dt) (b y + G).
TreeProcess forward_sweep(const SpdeContext& ctx, const std::vector<double>& y0,
                          const TreeProcess* drift_source,
                          const TreeProcess* diffusion_source);

/// Exact discrete adjoint of forward_sweep; state(l) = (1 + dt a) z + dt b Z - dt S.
BackwardSolution backward_sweep(const SpdeContext& ctx, const TreeProcess& terminal,
                                const TreeProcess* source);

ForwardSolution forward_solve(const ForwardInputs& inputs, const BinomialTree& tree,
                              const Grid& grid);

BackwardSolution backward_solve(const BackwardInputs& inputs, const BinomialTree& tree,
                                const Grid& grid);

/// Both sides of
///   E<y(T), z(T)> - E<y(0), z(0)>
///     = E sum_l dt [<F, z> + <y, S> + <G, Z>]
/// and |LHS - RHS| / (1 + |LHS|). Requires both solves to share the model.
struct PairingReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
};

PairingReport ito_pairing_check(const ForwardInputs& fwd_inputs,
                                const ForwardSolution& fwd,
                                const BackwardInputs& bwd_inputs,
                                const BackwardSolution& bwd,
                                const BinomialTree& tree, const Grid& grid);

struct EnergyReport {
  double max_mean_square = 0.0;  // max_l E||y_l||^2
  double h2_integral = 0.0;      // sum_{l=1..N} dt E||D2 y_l||^2
  double data_norm = 0.0;        // ||y0||^2 + squared norms of all sources
  double ratio = 0.0;            // (max_mean_square + h2_integral) / data_norm
};

EnergyReport energy_report(const ForwardInputs& inputs, const ForwardSolution& fwd,
                           const BinomialTree& tree, const Grid& grid);

}  // namespace kslab
