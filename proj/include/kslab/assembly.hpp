#pragma once

#include <cstddef>
#include <vector>

#include "kslab/banded.hpp"
#include "kslab/spde.hpp"
#include "kslab/tree.hpp"

namespace kslab {

/// Linear systems of forward and backward tree equations coupled through
/// banded operators, assembled over all nodes and solved with a sparse LU.
/// Used as a global oracle for the iterative solvers.
///
/// A forward field y follows the forward_sweep recursion with
///   F(node) = drift_data + sum_{drift couplings} op * x_src(node)
///   G(node) = diffusion_data + sum_{diffusion couplings} op * x_src(node).
/// A backward field follows the backward_sweep recursion with
///   S(node) = source_data + sum_{source couplings} op * x_src(node)
///   terminal = terminal_data + sum_{terminal couplings} op * y_src(level N).
/// x_src is a forward value, a backward value z or a backward coefficient Z
/// at the same node.
enum class FieldKind { forward, backward };
enum class Slot { value, martingale };
enum class Role { drift, diffusion, source, terminal };

struct Coupling {
  std::size_t target = 0;
  std::size_t source = 0;
  Role role = Role::drift;
  Slot slot = Slot::value;
  BandedOperator op;
};

struct FieldSpec {
  FieldKind kind = FieldKind::forward;
  std::vector<double> initial;  // forward only; empty means zero
  TreeProcess drift_data;       // forward
  TreeProcess diffusion_data;   // forward
  TreeProcess source_data;      // backward
  TreeProcess terminal_data;    // backward, level N read
};

struct CoupledSystem {
  std::vector<FieldSpec> fields;
  std::vector<Coupling> couplings;
};

/// Forward fields fill `value`. Backward fields fill `value` (z, level N =
/// terminal), `martingale` (Z) and `state` (the full backward state).
struct FieldSolution {
  TreeProcess value;
  TreeProcess martingale;
  TreeProcess state;
};

struct DirectSolveResult {
  std::vector<FieldSolution> fields;
  std::size_t unknowns = 0;
  double residual = 0.0;  // ||M x - r|| / max(||r||, tiny) of the assembled system
};

/// Size guard on (tree nodes) x (grid points).
inline constexpr std::size_t kMaxAssemblyNodesTimesPoints = 200000;

/// Throws InvalidArgument for malformed couplings or when the size guard is
/// exceeded, SolverError when the factorization fails.
DirectSolveResult solve_coupled_direct(const SpdeContext& ctx, const CoupledSystem& system);

/// Diagonal operator with the given entries.
BandedOperator diagonal_operator(const std::vector<double>& entries);

}  // namespace kslab
