#include "kslab/control.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "kslab/errors.hpp"

namespace kslab {

void validate(const PenalizedConfig& config) {
  if (config.schedule.empty()) throw InvalidArgument("penalty schedule is empty");
  for (std::size_t i = 0; i < config.schedule.size(); ++i) {
    const double e = config.schedule[i];
    if (!(e > 0.0) || !std::isfinite(e)) {
      throw InvalidArgument("penalty schedule entries must be positive and finite");
    }
    if (i > 0 && !(e < config.schedule[i - 1])) {
      throw InvalidArgument("penalty schedule must be strictly decreasing");
    }
  }
  if (!(config.cg_tol > 0.0)) throw InvalidArgument("cg_tol must be > 0");
  if (config.cg_max_iter == 0) throw InvalidArgument("cg_max_iter must be >= 1");
}

double control_norm_sq(const TreeProcess& u, const BinomialTree& tree, const Grid& grid,
                       const std::vector<double>* mask) {
  if (u.width() == 0) return 0.0;
  if (mask) return space_time_norm_sq(tree, grid.h, u, *mask);
  return space_time_norm_sq(tree, grid.h, u);
}

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::vector<double> q_drift_coefficient(const RegionMask& masks, const GameParams& game) {
  const auto& chi_d = masks[Region::D];
  std::vector<double> c(chi_d.size());
  for (std::size_t j = 0; j < c.size(); ++j) c[j] = chi_d[j] / game.beta - 1.0 / game.delta1;
  return c;
}

double pair_norm(const TreeProcess& a, const TreeProcess& b, const BinomialTree& tree,
                 const Grid& grid) {
  return std::sqrt(space_time_norm_sq(tree, grid.h, a) + space_time_norm_sq(tree, grid.h, b));
}

}  // namespace

AdjointSolution solve_adjoint_system(const TreeProcess& p_terminal, const ModelParams& params,
                                     const GameParams& game, const RegionMask& masks,
                                     const BinomialTree& tree, const Grid& grid,
                                     const AdjointOptions& options) {
  validate(game);
  if (p_terminal.depth() != tree.depth() || p_terminal.width() != grid.size()) {
    throw InvalidArgument("adjoint terminal does not match tree/grid");
  }
  if (!(options.relaxation > 0.0 && options.relaxation <= 1.0)) {
    throw InvalidArgument("relaxation must be in (0, 1]");
  }
  const SpdeContext ctx(grid, tree, params);
  const TrackingOperators ops = build_tracking_operators(grid, masks);
  const std::vector<double> c = q_drift_coefficient(masks, game);
  const std::vector<double> q0(grid.size(), 0.0);

  auto map = [&](const TreeProcess& pz, const TreeProcess& pZ, TreeProcess* q_out) {
    TreeProcess F = pz;
    F.mask(c);
    TreeProcess G = pZ;
    G.scale(-1.0 / game.delta2);
    TreeProcess q = forward_sweep(ctx, q0, &F, &G);
    TreeProcess S(tree, grid.size());
    for (std::size_t l = 0; l <= tree.depth(); ++l)
      for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i)
        ops.normal.apply(q.node(l, i), S.node(l, i));
    if (q_out) *q_out = std::move(q);
    return backward_sweep(ctx, p_terminal, &S);
  };

  AdjointSolution sol;
  TreeProcess pz(tree, grid.size()), pZ(tree, grid.size());
  double omega = options.relaxation;
  double prev = std::numeric_limits<double>::infinity();
  BackwardSolution next;
  bool converged = false;
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    next = map(pz, pZ, nullptr);
    TreeProcess dz = next.z, dZ = next.Z;
    dz.axpy(-1.0, pz);
    dZ.axpy(-1.0, pZ);
    const double diff = pair_norm(dz, dZ, tree, grid);
    const double scale = pair_norm(next.z, next.Z, tree, grid);
    const double rel = diff == 0.0 ? 0.0 : (scale > 0.0 ? diff / scale : diff);
    sol.trace.push_back(rel);
    sol.iterations = it;
    sol.residual = rel;
    if (rel <= options.tol) {
      converged = true;
      break;
    }
    if (rel > prev && rel <= options.stall_floor) {
      converged = true;
      break;
    }
    if (rel > prev) {
      omega *= 0.5;
      if (omega < 1.0 / 1024.0) {
        throw NonContraction("adjoint Picard iteration stalled at relative change " + sci(rel),
                             sol.trace);
      }
    }
    prev = rel;
    pz.axpy(omega, dz);
    pZ.axpy(omega, dZ);
  }
  if (!converged) {
    throw NonContraction("adjoint Picard iteration reached max_iter = " +
                             std::to_string(options.max_iter) + " at relative change " +
                             std::to_string(sol.residual),
                         sol.trace);
  }
  // One more pass from the converged (p, P) so q and p are consistent.
  sol.p = map(next.z, next.Z, &sol.q);
  return sol;
}

CoupledSystem adjoint_system(const TreeProcess& p_terminal, const GameProblem& problem,
                             const Grid& grid) {
  const TrackingOperators ops = build_tracking_operators(grid, problem.masks);
  CoupledSystem sys;
  FieldSpec q;
  q.kind = FieldKind::forward;
  FieldSpec p;
  p.kind = FieldKind::backward;
  p.terminal_data = p_terminal;
  sys.fields = {q, p};
  sys.couplings.push_back(
      {0, 1, Role::drift, Slot::value,
       diagonal_operator(q_drift_coefficient(problem.masks, problem.game))});
  sys.couplings.push_back(
      {0, 1, Role::diffusion, Slot::martingale,
       diagonal_operator(std::vector<double>(grid.size(), -1.0 / problem.game.delta2))});
  sys.couplings.push_back({1, 0, Role::source, Slot::value, ops.normal});
  return sys;
}

CoupledSystem penalized_kkt_system(const GameProblem& problem, double epsilon,
                                   const BinomialTree& tree, const Grid& grid) {
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
  GameProblem free = problem;
  free.f = TreeProcess();
  free.g = TreeProcess();
  CoupledSystem sys = saddle_system(free, tree, grid);
  const TrackingOperators ops = build_tracking_operators(grid, problem.masks);
  FieldSpec p;
  p.kind = FieldKind::backward;
  FieldSpec q;
  q.kind = FieldKind::forward;
  sys.fields.push_back(p);  // 2
  sys.fields.push_back(q);  // 3
  const std::size_t n = grid.size();
  std::vector<double> minus_chi_o = problem.masks[Region::O];
  for (double& v : minus_chi_o) v = -v;
  sys.couplings.push_back({0, 2, Role::drift, Slot::value, diagonal_operator(minus_chi_o)});
  sys.couplings.push_back({0, 2, Role::diffusion, Slot::martingale,
                           diagonal_operator(std::vector<double>(n, -1.0))});
  sys.couplings.push_back({2, 0, Role::terminal, Slot::value,
                           diagonal_operator(std::vector<double>(n, 1.0 / epsilon))});
  sys.couplings.push_back({2, 3, Role::source, Slot::value, ops.normal});
  sys.couplings.push_back(
      {3, 2, Role::drift, Slot::value,
       diagonal_operator(q_drift_coefficient(problem.masks, problem.game))});
  sys.couplings.push_back(
      {3, 2, Role::diffusion, Slot::martingale,
       diagonal_operator(std::vector<double>(n, -1.0 / problem.game.delta2))});
  return sys;
}

namespace {

TreeProcess masked_copy(const TreeProcess& u, const BinomialTree& tree, const Grid& grid,
                        const std::vector<double>* mask) {
  TreeProcess out = u.width() == 0 ? TreeProcess(tree, grid.size()) : u;
  if (mask) out.mask(*mask);
  return out;
}

TreeProcess terminal_of(const TreeProcess& y, double scale, const BinomialTree& tree) {
  TreeProcess t(tree, y.width());
  auto src = y.level(tree.depth());
  auto dst = t.level(tree.depth());
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = scale * src[i];
  return t;
}

}  // namespace

PenalizedGradient penalized_gradient(const GameProblem& problem, double epsilon,
                                     const BinomialTree& tree, const Grid& grid,
                                     const SolverOptions& options) {
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
  PenalizedGradient out;
  out.saddle = solve_saddle_point(problem, tree, grid, options.saddle);
  const TreeProcess& y = out.saddle.y.y;
  out.terminal_energy = level_inner(grid.h, y, y, tree.depth());
  const TreeProcess pT = terminal_of(y, 1.0 / epsilon, tree);
  out.adjoint = solve_adjoint_system(pT, problem.params, problem.game, problem.masks, tree,
                                     grid, options.adjoint);
  const auto& chi_o = problem.masks[Region::O];
  out.grad_f = masked_copy(problem.f, tree, grid, &chi_o);
  TreeProcess pz = out.adjoint.p.z;
  pz.mask(chi_o);
  out.grad_f.axpy(1.0, pz);
  out.grad_g = masked_copy(problem.g, tree, grid, nullptr);
  out.grad_g.axpy(1.0, out.adjoint.p.Z);
  // Level N carries no control.
  for (TreeProcess* t : {&out.grad_f, &out.grad_g}) {
    auto last = t->level(tree.depth());
    std::fill(last.begin(), last.end(), 0.0);
  }
  out.value = evaluate_leader_cost(problem.f, problem.g, problem.masks, tree, grid).total +
              0.5 / epsilon * out.terminal_energy;
  return out;
}

double penalized_value(const GameProblem& problem, double epsilon, const BinomialTree& tree,
                       const Grid& grid, const SolverOptions& options) {
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
  const SaddleSolution s = solve_saddle_point(problem, tree, grid, options.saddle);
  return evaluate_leader_cost(problem.f, problem.g, problem.masks, tree, grid).total +
         0.5 / epsilon * level_inner(grid.h, s.y.y, s.y.y, tree.depth());
}

namespace {

struct Pair {
  TreeProcess f;
  TreeProcess g;
};

double dot(const Pair& a, const Pair& b, const BinomialTree& tree, const Grid& grid,
           const std::vector<double>& chi_o) {
  return space_time_inner(tree, grid.h, a.f, b.f, chi_o) +
         space_time_inner(tree, grid.h, a.g, b.g);
}

void axpy(Pair& x, double s, const Pair& d) {
  x.f.axpy(s, d.f);
  x.g.axpy(s, d.g);
}

}  // namespace

PenalizedResult minimize_penalized(const GameProblem& problem, double epsilon,
                                   const PenalizedConfig& config, const BinomialTree& tree,
                                   const Grid& grid, const SolverOptions& options) {
  validate(config);
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
  const auto& chi_o = problem.masks[Region::O];

  GameProblem current = problem;
  Pair x{masked_copy(problem.f, tree, grid, &chi_o), masked_copy(problem.g, tree, grid, nullptr)};

  GameProblem homogeneous = problem;
  homogeneous.y0.assign(grid.size(), 0.0);
  homogeneous.targets = Targets{};

  auto hessian = [&](const Pair& d) {
    homogeneous.f = d.f;
    homogeneous.g = d.g;
    PenalizedGradient hg = penalized_gradient(homogeneous, epsilon, tree, grid, options);
    return Pair{std::move(hg.grad_f), std::move(hg.grad_g)};
  };
  auto criteria = [&](const Pair& r, const Pair& at, double& cf, double& cg) {
    cf = std::sqrt(control_norm_sq(r.f, tree, grid, &chi_o)) /
         (1.0 + std::sqrt(control_norm_sq(at.f, tree, grid, &chi_o)));
    cg = std::sqrt(control_norm_sq(r.g, tree, grid)) /
         (1.0 + std::sqrt(control_norm_sq(at.g, tree, grid)));
  };

  PenalizedResult res;
  res.epsilon = epsilon;
  current.f = x.f;
  current.g = x.g;
  PenalizedGradient pg = penalized_gradient(current, epsilon, tree, grid, options);
  Pair r{pg.grad_f, pg.grad_g};
  double value = pg.value;
  res.value_history.push_back(value);
  double cf = 0.0, cg = 0.0;
  criteria(r, x, cf, cg);

  std::size_t it = 0;
  while (!(cf <= config.cg_tol && cg <= config.cg_tol) && it < config.cg_max_iter) {
    Pair d{r.f, r.g};
    d.f.scale(-1.0);
    d.g.scale(-1.0);
    double rr = dot(r, r, tree, grid, chi_o);
    const std::size_t start = it;
    while (it < config.cg_max_iter) {
      const Pair hd = hessian(d);
      const double dhd = dot(d, hd, tree, grid, chi_o);
      if (!(dhd > 0.0)) break;
      const double alpha = rr / dhd;
      axpy(x, alpha, d);
      axpy(r, alpha, hd);
      value -= 0.5 * alpha * rr;
      res.value_history.push_back(value);
      ++it;
      criteria(r, x, cf, cg);
      if (cf <= config.cg_tol && cg <= config.cg_tol) break;
      const double rr_new = dot(r, r, tree, grid, chi_o);
      const double beta = rr_new / rr;
      rr = rr_new;
      d.f.scale(beta);
      d.g.scale(beta);
      axpy(d, -1.0, r);
    }
    // The recurrence residual drifts; the true gradient decides, and CG
    // restarts from it when the check fails.
    current.f = x.f;
    current.g = x.g;
    pg = penalized_gradient(current, epsilon, tree, grid, options);
    r = Pair{pg.grad_f, pg.grad_g};
    value = pg.value;
    criteria(r, x, cf, cg);
    if (cf <= config.cg_tol && cg <= config.cg_tol) break;
    if (it == start) break;  // no progress possible along the gradient
    ++res.restarts;
  }

  res.f = std::move(x.f);
  res.g = std::move(x.g);
  res.saddle = std::move(pg.saddle);
  res.adjoint = std::move(pg.adjoint);
  res.value = value;
  res.terminal_energy = pg.terminal_energy;
  res.f_norm_sq = control_norm_sq(res.f, tree, grid, &chi_o);
  res.g_norm_sq = control_norm_sq(res.g, tree, grid);
  res.characterization_f = cf;
  res.characterization_g = cg;
  res.iterations = it;
  res.converged = cf <= config.cg_tol && cg <= config.cg_tol;
  return res;
}

SweepResult epsilon_sweep(const GameProblem& problem, const PenalizedConfig& config,
                          const BinomialTree& tree, const Grid& grid,
                          const SolverOptions& options) {
  validate(config);
  SweepResult out;
  GameProblem warm = problem;
  for (double eps : config.schedule) {
    PenalizedResult r = minimize_penalized(warm, eps, config, tree, grid, options);
    SweepRow row;
    row.epsilon = eps;
    row.terminal_energy = r.terminal_energy;
    row.f_norm_sq = r.f_norm_sq;
    row.g_norm_sq = r.g_norm_sq;
    row.value = r.value;
    row.characterization_f = r.characterization_f;
    row.characterization_g = r.characterization_g;
    row.iterations = r.iterations;
    row.converged = r.converged;
    out.rows.push_back(row);
    warm.f = r.f;
    warm.g = r.g;
    out.last = std::move(r);
  }
  return out;
}

}  // namespace kslab
