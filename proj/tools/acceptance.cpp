// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.

#include <CLI11.hpp>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

#include "kslab/carleman.hpp"
#include "kslab/config.hpp"
#include "kslab/errors.hpp"
#include "kslab/experiment.hpp"
#include "kslab/pipeline.hpp"
#include "kslab/random.hpp"

using namespace kslab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string fixed(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

TreeProcess random_process(const BinomialTree& t, std::size_t width, std::uint64_t seed,
                           double scale = 1.0) {
  TreeProcess p(t, width);
  Rng(seed).fill_normal(p.data(), scale);
  return p;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  return Rng(seed).normal_vector(n);
}

std::vector<std::pair<Region, Interval>> regions() {
  return {{Region::O, {0.2, 0.5}},    {Region::D, {0.6, 0.8}},  {Region::Od0, {0.3, 0.7}},
          {Region::Od1, {0.55, 0.75}}, {Region::Od2, {0.6, 0.9}}};
}

ModelParams random_model(double T, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams p;
  p.k = 2.0;
  p.eta = 0.05;
  p.T = T;
  std::vector<double> a(6), b(6);
  for (double& v : a) v = rng.uniform(-1.0, 1.0);
  for (double& v : b) v = rng.uniform(-1.0, 1.0);
  p.a = CoefficientField(2, 3, a);
  p.b = CoefficientField(3, 2, b);
  return p;
}

GameProblem random_game(const BinomialTree& t, const Grid& g, std::uint64_t seed) {
  GameProblem p;
  p.params = random_model(t.horizon(), derive_seed(seed, "model"));
  p.masks = region_mask(g, regions());
  p.game = {1e3, 1e3, 1e3};
  p.y0 = random_vector(g.size(), derive_seed(seed, "y0"));
  p.f = random_process(t, g.size(), derive_seed(seed, "f"));
  p.g = random_process(t, g.size(), derive_seed(seed, "g"), 0.5);
  const Region od[3] = {Region::Od0, Region::Od1, Region::Od2};
  TreeProcess* y_d[3] = {&p.targets.y_d0, &p.targets.y_d1, &p.targets.y_d2};
  for (int i = 0; i < 3; ++i) {
    *y_d[i] = random_process(t, g.size(), derive_seed(seed, "target" + std::to_string(i)));
    y_d[i]->mask(p.masks[od[i]]);
  }
  return p;
}

double relative_difference(const TreeProcess& u, const TreeProcess& v, const BinomialTree& t,
                           double h) {
  TreeProcess d = u;
  d.axpy(-1.0, v);
  double num = 0.0, den = 0.0;
  for (std::size_t l = 0; l <= t.depth(); ++l) {
    num += level_inner(h, d, d, l);
    den += level_inner(h, v, v, l);
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

// ---------------------------------------------------------------------------

Outcome duality() {
  const double tol = 1e-10;
  BinomialTree t = build_tree(6, 1.0);
  Grid g = build_grid(16);
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 50; ++k) {
    const std::uint64_t s = derive_seed(1000 + k, "duality");
    ForwardInputs fi;
    fi.params = random_model(1.0, derive_seed(s, "model"));
    fi.masks = region_mask(g, regions());
    fi.y0 = random_vector(g.size(), derive_seed(s, "y0"));
    fi.f = random_process(t, g.size(), derive_seed(s, "f"));
    fi.g = random_process(t, g.size(), derive_seed(s, "g"));
    fi.v = random_process(t, g.size(), derive_seed(s, "v"));
    fi.psi1 = random_process(t, g.size(), derive_seed(s, "psi1"));
    fi.psi2 = random_process(t, g.size(), derive_seed(s, "psi2"));
    BackwardInputs bi;
    bi.params = fi.params;
    bi.terminal = random_process(t, g.size(), derive_seed(s, "terminal"));
    bi.source = random_process(t, g.size(), derive_seed(s, "source"));
    const PairingReport r =
        ito_pairing_check(fi, forward_solve(fi, t, g), bi, backward_solve(bi, t, g), t, g);
    worst = std::max(worst, r.residual);
  }
  return {worst <= tol, "discrete duality: max pairing residual " + sci(worst) +
                            " <= " + sci(tol) + " over 50 instances (n=16, N=6)"};
}

Outcome tree_identities() {
  const double tol = 1e-12;
  double reconstruction = 0.0, tower = 0.0, isometry = 0.0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    const std::size_t N = 1 + k % 10;
    BinomialTree t = build_tree(N, 0.5 + 0.1 * static_cast<double>(k % 7));
    const std::size_t w = 2;
    TreeProcess p = random_process(t, w, derive_seed(k, "tree"));

    for (std::size_t l = 1; l <= N; ++l) {
      const auto m = conditional_expectation(p, l);
      const auto z = martingale_coefficient(p, t, l);
      for (std::size_t i = 0; i < BinomialTree::level_size(l - 1); ++i)
        for (std::size_t c = 0; c < w; ++c) {
          const double up = p.node(l, BinomialTree::up_child(i))[c];
          const double down = p.node(l, BinomialTree::down_child(i))[c];
          reconstruction = std::max(
              {reconstruction, std::abs(m[i * w + c] + z[i * w + c] * t.sqrt_dt() - up),
               std::abs(m[i * w + c] - z[i * w + c] * t.sqrt_dt() - down)});
        }
    }

    // tower: iterate conditional expectations from the leaves to level l and
    // compare with the leaf mean by enumeration
    for (std::size_t c = 0; c < w; ++c) {
      double leaf_mean = 0.0;
      for (std::size_t i = 0; i < BinomialTree::level_size(N); ++i)
        leaf_mean += p.node(N, i)[c];
      leaf_mean /= static_cast<double>(BinomialTree::level_size(N));
      TreeProcess q = p;
      for (std::size_t l = N; l >= 1; --l) {
        const auto m = conditional_expectation(q, l);
        std::copy(m.begin(), m.end(), q.level(l - 1).begin());
        tower = std::max(tower, std::abs(expectation(q, l - 1)[c] - leaf_mean));
      }
    }

    // isometry: M_N = sum Z_l dW_l along every path, Z = first component of p
    double lhs = 0.0;
    const std::size_t leaves = BinomialTree::level_size(N);
    for (std::size_t leaf = 0; leaf < leaves; ++leaf) {
      double m = 0.0;
      std::size_t node = 0;
      for (std::size_t l = 0; l < N; ++l) {
        // bit (N-1-l) of the leaf index selects the branch taken at level l
        const bool down = (leaf >> (N - 1 - l)) & 1u;
        m += (down ? -1.0 : 1.0) * p.node(l, node)[0] * t.sqrt_dt();
        node = down ? BinomialTree::down_child(node) : BinomialTree::up_child(node);
      }
      lhs += m * m / static_cast<double>(leaves);
    }
    double rhs = 0.0;
    for (std::size_t l = 0; l < N; ++l) {
      double s = 0.0;
      for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) s += std::pow(p.node(l, i)[0], 2);
      rhs += s / static_cast<double>(BinomialTree::level_size(l)) * t.dt();
    }
    isometry = std::max(isometry, std::abs(lhs - rhs));
  }
  const double worst = std::max({reconstruction, tower, isometry});
  return {worst <= tol, "tree identities: reconstruction " + sci(reconstruction) + ", tower " +
                            sci(tower) + ", isometry " + sci(isometry) + " <= " + sci(tol) +
                            " on 100 processes (N=1..10)"};
}

Outcome operator_accuracy() {
  const double d4_tol = 1e-10, spatial_factor = 3.5, temporal_order = 0.9;
  auto sample = [](const Grid& g, const std::function<double(double)>& f) {
    std::vector<double> v(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) v[j] = f(g.x_points[j]);
    return v;
  };

  Grid g20 = build_grid(20);
  const auto d4 = build_derivative_operator(g20, 4).apply(
      sample(g20, [](double x) { return x * x * (1 - x) * (1 - x); }));
  double d4_err = 0.0;
  for (std::size_t i = 1; i + 1 < g20.size(); ++i) d4_err = std::max(d4_err, std::abs(d4[i] - 24.0));

  // sin^2(pi x) is clamped at both ends; exact derivatives of (1 - cos 2 pi x) / 2
  const double w = 2 * std::numbers::pi;
  auto exact = [w](int m, double x) {
    switch (m) {
      case 1: return 0.5 * w * std::sin(w * x);
      case 2: return 0.5 * w * w * std::cos(w * x);
      case 3: return -0.5 * w * w * w * std::sin(w * x);
      default: return -0.5 * std::pow(w, 4) * std::cos(w * x);
    }
  };
  double worst_factor = INFINITY;
  for (int m = 1; m <= 4; ++m) {
    double prev = 0.0;
    for (std::size_t n : {31u, 63u, 127u}) {
      Grid g = build_grid(n);
      const auto out = build_derivative_operator(g, m).apply(
          sample(g, [w](double x) { return 0.5 * (1 - std::cos(w * x)); }));
      double err = 0.0;
      for (std::size_t i = 2; i + 2 < n; ++i) err = std::max(err, std::abs(out[i] - exact(m, g.x_points[i])));
      if (prev > 0.0) worst_factor = std::min(worst_factor, prev / err);
      prev = err;
    }
  }

  // deterministic data against exp(-(L - a) T) y0, starting on the slowest real mode and integrate for one decay time,
  // and integrating for one decay time so the stiff modes play no part in the error
  Grid g = build_grid(16);
  ModelParams p;
  p.k = 2.0;
  p.eta = 0.05;
  p.a = CoefficientField(0.7);
  const BandedOperator L = build_drift_operator(g, p, Direction::forward);
  Eigen::MatrixXd A(g.size(), g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) A(i, j) = -(L(i, j) - (i == j ? 0.7 : 0.0));
  Eigen::EigenSolver<Eigen::MatrixXd> es(A);
  Eigen::Index slow = 0;
  for (Eigen::Index i = 1; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()[i].real() > es.eigenvalues()[slow].real()) slow = i;
  p.T = 1.0 / std::abs(es.eigenvalues()[slow].real());
  Eigen::VectorXd v = es.eigenvectors().col(slow).real();
  v /= v.cwiseAbs().maxCoeff();
  const std::vector<double> y0(v.data(), v.data() + v.size());
  const Eigen::VectorXd ref = (A * p.T).exp() * v;
  std::vector<double> errors;
  for (std::size_t N : {4u, 8u, 16u, 32u}) {
    // deterministic data keeps every node on the same path; check the leaf at index 0
    const double dt = p.T / static_cast<double>(N);
    std::vector<double> y;
    if (N <= 16) {
      BinomialTree t = build_tree(N, p.T);
      ForwardInputs in;
      in.params = p;
      in.masks = region_mask(g, regions());
      in.y0 = y0;
      const auto sol = forward_solve(in, t, g);
      const auto leaf = sol.y.node(N, 0);
      y.assign(leaf.begin(), leaf.end());
    } else {
      ShiftedSystem sys(L, dt);
      y = y0;
      for (std::size_t l = 0; l < N; ++l) {
        for (double& w : y) w += dt * 0.7 * w;
        sys.solve(y);
      }
    }
    double e = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) e = std::max(e, std::abs(y[j] - ref[j]));
    errors.push_back(e / ref.cwiseAbs().maxCoeff());
  }
  double worst_order = INFINITY;
  for (std::size_t k = 1; k < errors.size(); ++k)
    worst_order = std::min(worst_order, std::log2(errors[k - 1] / errors[k]));

  const bool pass = d4_err <= d4_tol && worst_factor >= spatial_factor && worst_order >= temporal_order;
  return {pass, "operator accuracy: D4 quartic error " + sci(d4_err) + " <= " + sci(d4_tol) +
                    ", spatial halving factor " + fixed(worst_factor) + " >= " + fixed(spatial_factor) +
                    ", temporal order " + fixed(worst_order) + " >= " + fixed(temporal_order)};
}

Outcome saddle() {
  const double agree_tol = 1e-8, foc_tol = 1e-6;
  BinomialTree t = build_tree(4, 1.0);
  Grid g = build_grid(8);
  double agree = 0.0, foc = 0.0;
  std::size_t violations = 0, samples = 0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    const GameProblem p = random_game(t, g, derive_seed(k, "saddle"));
    const SaddleSolution s = solve_saddle_point(p, t, g);
    const SaddleSolution d = direct_assembly_solve(p, t, g);
    agree = std::max({agree, relative_difference(s.y.y, d.y.y, t, g.h),
                      relative_difference(s.adjoint.z, d.adjoint.z, t, g.h),
                      relative_difference(s.adjoint.Z, d.adjoint.Z, t, g.h)});
    foc = std::max(foc, verify_first_order_conditions(p, s, t, g, 6, derive_seed(k, "foc")).max_residual);
    const SaddleMarginReport m = verify_saddle_inequalities(p, s, t, g, 100, derive_seed(k, "margins"));
    violations += m.violations;
    samples += m.samples;
  }
  const bool pass = agree <= agree_tol && foc <= foc_tol && violations == 0;
  return {pass, "saddle point: Picard vs direct " + sci(agree) + " <= " + sci(agree_tol) +
                    ", first-order residual " + sci(foc) + " <= " + sci(foc_tol) + ", " +
                    std::to_string(violations) + " of " + std::to_string(samples) +
                    " saddle inequalities violated (10 instances, n=8, N=4)"};
}

Outcome gradient() {
  const double tol = 1e-6, eps = 1e-2, step = 1e-3;
  BinomialTree t = build_tree(5, 1.0);
  Grid g = build_grid(12);
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 5; ++k) {
    const GameProblem p = random_game(t, g, derive_seed(k, "gradient"));
    const PenalizedGradient grad = penalized_gradient(p, eps, t, g);
    for (std::uint64_t d = 0; d < 5; ++d) {
      const TreeProcess df = random_process(t, g.size(), derive_seed(10 * k + d, "df"));
      const TreeProcess dg = random_process(t, g.size(), derive_seed(10 * k + d, "dg"));
      GameProblem plus = p, minus = p;
      plus.f.axpy(step, df);
      plus.g.axpy(step, dg);
      minus.f.axpy(-step, df);
      minus.g.axpy(-step, dg);
      const double fd =
          (penalized_value(plus, eps, t, g) - penalized_value(minus, eps, t, g)) / (2 * step);
      const double exact = space_time_inner(t, g.h, grad.grad_f, df, p.masks[Region::O]) +
                           space_time_inner(t, g.h, grad.grad_g, dg);
      worst = std::max(worst, std::abs(fd - exact) / std::abs(exact));
    }
  }
  return {worst <= tol, "penalized gradient: adjoint vs centered differences " + sci(worst) +
                            " <= " + sci(tol) + " (5 instances x 5 directions, n=12, N=5)"};
}

Outcome null_control() {
  const double decay_tol = 1e-3;
  const ExperimentConfig cfg;
  const Instance in = build_instance(cfg);
  const SweepResult s = epsilon_sweep(in.problem, cfg.penalty, in.tree, in.grid, cfg.solver);
  const double e0 = grid_dot(in.grid, in.problem.y0, in.problem.y0);
  bool monotone = true, converged = true;
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    converged &= s.rows[i].converged;
    if (i > 0) monotone &= s.rows[i].terminal_energy <= s.rows[i - 1].terminal_energy;
  }
  const double ratio = s.last.terminal_energy / e0;
  const double char_tol = 10.0 * cfg.penalty.cg_tol;
  const double ch = std::max(s.last.characterization_f, s.last.characterization_g);
  const bool pass = monotone && converged && ratio <= decay_tol && ch <= char_tol;
  return {pass, std::string("null-control decay: terminal energy ") +
                    (monotone ? "nonincreasing" : "NOT monotone") + " over " +
                    std::to_string(s.rows.size()) + " epsilons, final E|y(T)|^2 / E|y0|^2 " +
                    sci(ratio) + " <= " + sci(decay_tol) + ", characterization " + sci(ch) +
                    " <= " + sci(char_tol) + (converged ? "" : ", CG not converged")};
}

Outcome control_estimate(const std::filesystem::path& out) {
  const double spread_tol = 3.0;
  std::vector<double> ratios;
  std::ofstream csv(out / "control_estimate.csv");
  csv << "instance,control_norm_sq,initial_energy,weighted_target_norm,ratio\n";
  for (std::uint64_t k = 0; k < 20; ++k) {
    ExperimentConfig cfg;
    cfg.seed = 100 + k;
    cfg.targets.kind = TargetSpec::Kind::random;
    cfg.targets.value = 1.0;
    cfg.targets.form = TargetSpec::Form::reduced;
    const Instance in = build_instance(cfg);
    PipelineInputs pin;
    pin.problem = in.problem;
    pin.reduced_targets = in.reduced_targets;
    pin.penalty = cfg.penalty;
    pin.solver = cfg.solver;
    pin.carleman = in.carleman;
    pin.b = in.b;
    const PipelineReport r = stackelberg_pipeline(pin, in.tree, in.grid);
    ratios.push_back(r.estimate_ratio);
    char line[256];
    std::snprintf(line, sizeof line, "%llu,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<unsigned long long>(k), r.control_norm_sq, r.initial_energy,
                  r.weighted_target_norm, r.estimate_ratio);
    csv << line;
  }
  bool finite = true;
  for (double r : ratios) finite &= std::isfinite(r) && r > 0.0;
  const double mx = *std::max_element(ratios.begin(), ratios.end());
  const double med = median(ratios);
  const bool pass = finite && mx <= spread_tol * med;
  return {pass, "control estimate: 20 ratios " + std::string(finite ? "finite" : "NOT finite") +
                    ", max/median " + fixed(mx / med) + ", limit " + fixed(spread_tol) +
                    " (median C_T " + sci(med) + ")"};
}

Outcome observability(const std::filesystem::path& out) {
  const double spread_tol = 3.0;
  const ExperimentConfig cfg;
  const Instance in = build_instance(cfg);
  const WeightModel w(in.carleman, construct_kappa(in.b), cfg.model.T);
  const ObservabilityReport r =
      observability_quotient(w, in.problem.params, in.problem.game, in.problem.masks, in.tree,
                             in.grid, 100, derive_seed(cfg.seed, "observability"),
                             cfg.solver.adjoint);
  std::ofstream csv(out / "observability.csv");
  csv << "sample,lhs,rhs,quotient\n";
  bool finite = true;
  for (const auto& s : r.samples) {
    finite &= std::isfinite(s.quotient) && !s.skipped;
    char line[160];
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g\n", s.id, s.lhs, s.rhs, s.quotient);
    csv << line;
  }
  const bool persisted = static_cast<bool>(csv);
  const double spread = r.max_quotient / r.median_quotient;
  const bool pass = finite && persisted && spread <= spread_tol;
  return {pass, "observability quotient: 100 samples " +
                    std::string(finite ? "finite" : "NOT finite") + ", max/median " +
                    fixed(spread) + ", limit " + fixed(spread_tol) + " (max " + sci(r.max_quotient) +
                    ", median " + sci(r.median_quotient) + "), report " +
                    (persisted ? "written" : "NOT written")};
}

Outcome weights() {
  Rng rng(derive_seed(9, "acceptance/kappa"));
  std::size_t audited = 0;
  for (int i = 0; i < 10; ++i) {
    const double c = rng.uniform(0.25, 0.75), width = rng.uniform(0.02, 0.2);
    try {
      construct_kappa({c - width / 2, c + width / 2});
      ++audited;
    } catch (const AuditFailed&) {
    }
  }

  bool gamma_mid = true, gamma_bar = true, rho_theta = true;
  bool fits_finite = true;
  for (double T : {0.5, 1.0, 2.0, 3.0}) {
    const WeightModel m(default_carleman_params(T), construct_kappa({0.35, 0.45}), T);
    gamma_mid &= m.gamma(T / 2) == 4.0 / (T * T);
    for (int i = 0; i <= 1000; ++i) {
      const double t = T / 2 + T / 2 * i / 1000.0;
      gamma_bar &= m.gamma_bar(t) == m.gamma(t);
    }
    for (int i = 0; i <= 1000; ++i)
      for (int j = 0; j <= 100; ++j) {
        const double t = T * i / 1000.0, x = j / 100.0;
        rho_theta &= -m.log_rho(t) <= m.log_theta_bar(t, x);
      }
    fits_finite &= verify_parameter_bounds(m).all_finite;
  }
  const bool pass = audited == 10 && gamma_mid && gamma_bar && rho_theta && fits_finite;
  auto yn = [](bool b) { return b ? "yes" : "NO"; };
  return {pass, "weight toolkit: " + std::to_string(audited) +
                    "/10 random intervals pass the 1e4-point audit, gamma(T/2)=4/T^2 exact " +
                    yn(gamma_mid) + ", gamma_bar=gamma on [T/2,T] exact " + yn(gamma_bar) +
                    ", rho^-2 <= theta_bar^2 " + yn(rho_theta) + ", fitted constants finite " +
                    yn(fits_finite)};
}

Outcome reproducibility(const std::filesystem::path& out, double& first_seconds) {
  const double slack = 1.1;
  auto digests = [](const RunRecord& r) {
    std::vector<std::string> d;
    for (const auto& f : r.files) d.push_back(f.name + " " + f.sha256);
    return d;
  };
  ExperimentConfig a;
  a.out = (out / "repro_a").string();
  ExperimentConfig b = a;
  b.out = (out / "repro_b").string();
  const auto t0 = std::chrono::steady_clock::now();
  const RunRecord ra = run_experiment("stackelberg", a);
  const auto t1 = std::chrono::steady_clock::now();
  const RunRecord rb = run_experiment("stackelberg", b);
  const auto t2 = std::chrono::steady_clock::now();
  first_seconds = std::chrono::duration<double>(t1 - t0).count();
  const double second = std::chrono::duration<double>(t2 - t1).count();
  const bool same = digests(ra) == digests(rb);
  const bool pass = same && second <= slack * first_seconds + 0.5;
  return {pass, std::string("reproducibility: ") + std::to_string(ra.files.size()) +
                    " output digests " + (same ? "identical" : "DIFFER") +
                    " across two stackelberg runs (" + fixed(first_seconds) + " s, " +
                    fixed(second) + " s)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-10"};
  std::string out = "acceptance_out";
  std::vector<int> only, known;
  app.add_option("--out", out, "directory for persisted reports");
  app.add_option("--only", only, "run only these criteria");
  app.add_option("--known-failures", known,
                 "criteria whose failure is documented; they do not affect the exit status");
  CLI11_PARSE(app, argc, argv);
  std::filesystem::create_directories(out);

  struct Criterion {
    int id;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  double repro_first = 0.0;
  const std::vector<Criterion> criteria{
      {1, 30, duality},
      {2, 10, tree_identities},
      {3, 60, operator_accuracy},
      {4, 300, saddle},
      {5, 180, gradient},
      {6, 600, null_control},
      {7, 900, [&] { return control_estimate(out); }},
      {8, 600, [&] { return observability(out); }},
      {9, 10, weights},
      // runtime bound: two pipeline runs, checked inside against the first run
      {10, 1e9, [&] { return reproducibility(out, repro_first); }},
  };

  std::ofstream summary(std::filesystem::path(out) / "acceptance.txt");
  std::set<int> unexpected;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.limit_seconds;
    const bool pass = o.pass && in_time;
    std::ostringstream line;
    line << "criterion " << c.id << (c.id < 10 ? "  " : " ") << (pass ? "PASS" : "FAIL") << "  "
         << o.detail << " [" << fixed(secs, 1) << " s";
    if (c.limit_seconds < 1e9) line << " <= " << fixed(c.limit_seconds, 0) << " s";
    line << (in_time ? "" : ", TOO SLOW") << "]";
    std::cout << line.str() << std::endl;
    summary << line.str() << "\n";
    if (!pass && std::find(known.begin(), known.end(), c.id) == known.end()) unexpected.insert(c.id);
  }
  return unexpected.empty() ? 0 : 1;
}
