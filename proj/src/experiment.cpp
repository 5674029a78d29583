#include "kslab/experiment.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "kslab/assembly.hpp"
#include "kslab/errors.hpp"
#include "kslab/random.hpp"

#ifndef KSLAB_VERSION
#define KSLAB_VERSION "0.0.0"
#endif

namespace kslab {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string num(std::size_t v) { return std::to_string(v); }

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) { row(header); }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) text_ += (i ? "," : "") + cells[i];
    text_ += "\n";
  }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

class Report {
 public:
  void kv(const std::string& key, const std::string& value) {
    text_ += key + ": " + value + "\n";
  }
  void kv(const std::string& key, double value) { kv(key, num(value)); }
  void section(const std::string& name) { text_ += "\n[" + name + "]\n"; }
  void raw(const std::string& s) { text_ += s; }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

struct Session {
  const ExperimentConfig& config;
  RunRecord& record;
  Report report;
  std::vector<std::pair<std::string, std::string>> files;

  void add(const std::string& name, const std::string& content) {
    files.emplace_back(name, content);
  }

  template <class F>
  auto timed(const std::string& stage, F&& f) -> decltype(f()) {
    const auto start = std::chrono::steady_clock::now();
    struct Stop {
      Session* s;
      std::string stage;
      std::chrono::steady_clock::time_point start;
      ~Stop() {
        const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
        s->record.timings.emplace_back(stage, d.count());
      }
    } stop{this, stage, start};
    return with_stage(stage, std::forward<F>(f));
  }
};

double relative_difference(const TreeProcess& u, const TreeProcess& v, const BinomialTree& t,
                           double h) {
  TreeProcess d = u;
  d.axpy(-1.0, v);
  double num_sq = 0.0, den_sq = 0.0;
  for (std::size_t l = 0; l <= t.depth(); ++l) {
    num_sq += level_inner(h, d, d, l);
    den_sq += level_inner(h, v, v, l);
  }
  return den_sq > 0.0 ? std::sqrt(num_sq / den_sq) : std::sqrt(num_sq);
}

Csv sweep_table(const std::vector<SweepRow>& rows) {
  Csv csv({"epsilon", "terminal_energy", "f_norm_sq", "g_norm_sq", "value", "characterization_f",
           "characterization_g", "iterations", "converged"});
  for (const auto& r : rows)
    csv.row({num(r.epsilon), num(r.terminal_energy), num(r.f_norm_sq), num(r.g_norm_sq),
             num(r.value), num(r.characterization_f), num(r.characterization_g),
             num(r.iterations), r.converged ? "1" : "0"});
  return csv;
}

void require_large_parameters(Session& s, const Instance& in) {
  const LargeParameterCheck c = s.timed("large-parameters", [&] {
    LargeParameterCheck r = check_large_parameters(
        in.problem, in.tree, in.grid, s.config.solver.saddle.contraction_threshold);
    if (!r.passed)
      throw ValidationError({"game: contraction estimate " + num(r.estimate) +
                             " >= threshold " + num(r.threshold) +
                             "; increase beta, delta1, delta2"});
    return r;
  });
  s.report.kv("contraction_estimate", c.estimate);
  s.report.kv("contraction_threshold", c.threshold);
}

void run_simulate(Session& s, const Instance& in) {
  ForwardInputs fin;
  fin.y0 = in.problem.y0;
  fin.params = in.problem.params;
  fin.masks = in.problem.masks;
  const ForwardSolution sol = s.timed("forward", [&] { return forward_solve(fin, in.tree, in.grid); });
  const EnergyReport er = s.timed("energy", [&] { return energy_report(fin, sol, in.tree, in.grid); });

  Csv energy({"level", "time", "mean_square"});
  Csv mean({"level", "x", "mean"});
  for (std::size_t l = 0; l <= in.tree.depth(); ++l) {
    energy.row({num(l), num(in.tree.time(l)), num(level_inner(in.grid.h, sol.y, sol.y, l))});
    const auto m = expectation(sol.y, l);
    for (std::size_t j = 0; j < in.grid.size(); ++j)
      mean.row({num(l), num(in.grid.x_points[j]), num(m[j])});
  }
  s.add("energy.csv", energy.text());
  s.add("mean.csv", mean.text());
  s.report.section("energy");
  s.report.kv("max_mean_square", er.max_mean_square);
  s.report.kv("h2_integral", er.h2_integral);
  s.report.kv("data_norm", er.data_norm);
  s.report.kv("energy_ratio", er.ratio);
}

void run_saddle(Session& s, const Instance& in) {
  require_large_parameters(s, in);
  const GameProblem& p = in.problem;
  const SaddleSolution sol = s.timed("picard", [&] {
    return solve_saddle_point(p, in.tree, in.grid, s.config.solver.saddle);
  });
  Csv trace({"iteration", "residual"});
  for (std::size_t i = 0; i < sol.trace.size(); ++i) trace.row({num(i + 1), num(sol.trace[i])});
  s.add("picard_trace.csv", trace.text());
  s.report.section("saddle");
  s.report.kv("picard_iterations", num(sol.picard_iterations));
  s.report.kv("picard_residual", sol.residual);
  const CostReport cost = s.timed("cost", [&] {
    return robust_cost_at(p, sol.psi1_star, sol.psi2_star, sol.v_star, in.tree, in.grid);
  });
  s.report.kv("robust_cost", cost.total);
  for (const auto& [name, v] : cost.terms) s.report.kv("cost_" + name, v);

  if (in.tree.node_count() * in.grid.size() <= kMaxAssemblyNodesTimesPoints) {
    double residual = 0.0;
    const SaddleSolution direct = s.timed("direct-assembly", [&] {
      return direct_assembly_solve(p, in.tree, in.grid, &residual);
    });
    s.report.kv("direct_assembly_residual", residual);
    s.report.kv("picard_vs_direct_state",
                relative_difference(sol.y.y, direct.y.y, in.tree, in.grid.h));
    s.report.kv("picard_vs_direct_adjoint",
                relative_difference(sol.adjoint.z, direct.adjoint.z, in.tree, in.grid.h));
  } else {
    s.report.kv("direct_assembly", "skipped (problem exceeds the assembly guard)");
  }

  const FirstOrderReport foc = s.timed("first-order", [&] {
    return verify_first_order_conditions(p, sol, in.tree, in.grid, 6,
                                         derive_seed(s.config.seed, "saddle/foc"));
  });
  Csv foc_csv({"probe", "residual"});
  for (std::size_t i = 0; i < foc.residuals.size(); ++i)
    foc_csv.row({num(i), num(foc.residuals[i])});
  s.add("first_order.csv", foc_csv.text());
  s.report.kv("first_order_max_residual", foc.max_residual);

  const SaddleMarginReport m = s.timed("saddle-inequalities", [&] {
    return verify_saddle_inequalities(p, sol, in.tree, in.grid, s.config.samples,
                                      derive_seed(s.config.seed, "saddle/margins"));
  });
  s.report.kv("inequality_samples", num(m.samples));
  s.report.kv("inequality_violations", num(m.violations));
  s.report.kv("worst_concave_margin", m.worst_concave_margin);
  s.report.kv("worst_convex_margin", m.worst_convex_margin);
}

void run_nullcontrol(Session& s, const Instance& in) {
  require_large_parameters(s, in);
  const SweepResult sweep = s.timed("sweep", [&] {
    return epsilon_sweep(in.problem, s.config.penalty, in.tree, in.grid, s.config.solver);
  });
  s.add("sweep.csv", sweep_table(sweep.rows).text());
  const double e0 = grid_dot(in.grid, in.problem.y0, in.problem.y0);
  s.report.section("sweep");
  s.report.raw(sweep_table(sweep.rows).text());
  s.report.section("result");
  s.report.kv("initial_energy", e0);
  s.report.kv("final_terminal_energy", sweep.last.terminal_energy);
  s.report.kv("terminal_over_initial", e0 > 0.0 ? sweep.last.terminal_energy / e0 : 0.0);
  s.report.kv("characterization_f", sweep.last.characterization_f);
  s.report.kv("characterization_g", sweep.last.characterization_g);
}

void run_stackelberg(Session& s, const Instance& in) {
  PipelineInputs inputs;
  inputs.problem = in.problem;
  inputs.reduced_targets = in.reduced_targets;
  inputs.penalty = s.config.penalty;
  inputs.solver = s.config.solver;
  inputs.carleman = in.carleman;
  inputs.b = in.b;
  const PipelineReport r = s.timed("pipeline", [&] {
    return stackelberg_pipeline(inputs, in.tree, in.grid);
  });
  s.add("sweep.csv", sweep_table(r.sweep).text());
  Csv controls({"level", "node", "x", "f", "g"});
  for (std::size_t l = 0; l < in.tree.depth(); ++l)
    for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
      const auto f = r.f_hat.node(l, i);
      const auto g = r.g_hat.node(l, i);
      for (std::size_t j = 0; j < in.grid.size(); ++j)
        controls.row({num(l), num(i), num(in.grid.x_points[j]), num(f[j]), num(g[j])});
    }
  s.add("controls.csv", controls.text());

  s.report.kv("convention", r.convention);
  s.report.kv("contraction_estimate", r.large_parameters.estimate);
  s.report.section("sweep");
  s.report.raw(sweep_table(r.sweep).text());
  s.report.section("result");
  s.report.kv("final_epsilon", r.final_epsilon);
  s.report.kv("initial_energy", r.initial_energy);
  s.report.kv("terminal_energy", r.terminal_energy);
  s.report.kv("terminal_over_initial",
              r.initial_energy > 0.0 ? r.terminal_energy / r.initial_energy : 0.0);
  s.report.kv("penalized_value", r.value);
  s.report.kv("characterization_f", r.characterization_f);
  s.report.kv("characterization_g", r.characterization_g);
  s.report.kv("saddle_picard_iterations", num(r.saddle.picard_iterations));
  s.report.kv("control_norm_sq", r.control_norm_sq);
  s.report.kv("weighted_target_norm", r.weighted_target_norm);
  s.report.kv("empirical_C_T", r.estimate_ratio);
}

WeightModel weight_model(const Instance& in) {
  return WeightModel(in.carleman, construct_kappa(in.b), in.problem.params.T);
}

void run_observability(Session& s, const Instance& in) {
  const WeightModel w = s.timed("weights", [&] { return weight_model(in); });
  const ObservabilityReport r = s.timed("observability", [&] {
    return observability_quotient(w, in.problem.params, in.problem.game, in.problem.masks,
                                  in.tree, in.grid, s.config.samples,
                                  derive_seed(s.config.seed, "observability"),
                                  s.config.solver.adjoint);
  });
  Csv csv({"sample", "lhs", "rhs", "quotient", "log_weighted_q", "skipped"});
  for (const auto& x : r.samples)
    csv.row({num(x.id), num(x.lhs), num(x.rhs), num(x.quotient), num(x.log_weighted_q),
             x.skipped ? "1" : "0"});
  s.add("observability.csv", csv.text());
  s.report.section("observability");
  s.report.kv("samples", num(r.samples.size()));
  s.report.kv("skipped", num(r.skipped));
  s.report.kv("max_quotient", r.max_quotient);
  s.report.kv("median_quotient", r.median_quotient);
  s.report.kv("max_over_median",
              r.median_quotient > 0.0 ? r.max_quotient / r.median_quotient : 0.0);
}

void run_carleman_check(Session& s, const Instance& in) {
  const KappaFunction kappa = s.timed("kappa", [&] { return construct_kappa(in.b); });
  Csv kcsv({"x", "kappa", "kappa_x"});
  for (int i = 0; i <= 100; ++i) {
    const double x = i / 100.0;
    kcsv.row({num(x), num(kappa(x)), num(kappa.derivative(x))});
  }
  s.add("kappa.csv", kcsv.text());
  s.report.section("kappa");
  s.report.kv("critical_point", kappa.critical_point());
  s.report.kv("audit_points", num(kKappaAuditPoints));
  s.report.kv("audit", "passed");

  const double T = in.problem.params.T;
  const WeightModel w(in.carleman, kappa, T);
  Csv wcsv({"t", "x", "gamma", "gamma_bar", "log_theta", "log_theta_bar", "log_rho"});
  for (int i = 0; i <= 10; ++i)
    for (int j = 0; j <= 10; ++j) {
      const WeightValues v = evaluate_weights(w, T * i / 10.0, j / 10.0);
      wcsv.row({num(T * i / 10.0), num(j / 10.0), num(v.gamma), num(v.gamma_bar),
                num(v.log_theta), num(v.log_theta_bar), num(v.log_rho)});
    }
  s.add("weights.csv", wcsv.text());
  s.report.section("weights");
  s.report.kv("lambda", in.carleman.lambda);
  s.report.kv("mu", in.carleman.mu);
  s.report.kv("gamma_mid_equals_4_over_T2", w.gamma(T / 2) == 4.0 / (T * T) ? "yes" : "no");

  const ParameterBoundReport b = s.timed("bounds", [&] { return verify_parameter_bounds(w); });
  Csv bcsv({"bound", "fitted"});
  for (const auto& f : b.fits) bcsv.row({f.name, num(f.fitted)});
  s.add("bounds.csv", bcsv.text());
  s.report.kv("fitted_constants_finite", b.all_finite ? "yes" : "no");

  const CarlemanParams doubled{2.0 * in.carleman.lambda, in.carleman.mu};
  const WeightModel w2(doubled, kappa, T);
  s.report.section("quotients");
  for (CarlemanCase c : {CarlemanCase::forward, CarlemanCase::backward, CarlemanCase::coupled}) {
    const std::string name = to_string(c);
    const std::uint64_t seed = derive_seed(s.config.seed, "carleman-check");
    const QuotientStudy q = s.timed("quotient-" + name, [&] {
      return carleman_study(c, w, in.problem.params, in.problem.game, in.problem.masks, in.tree,
                            in.grid, s.config.samples, seed);
    });
    const QuotientStudy q2 = s.timed("quotient-" + name + "-2lambda", [&] {
      return carleman_study(c, w2, in.problem.params, in.problem.game, in.problem.masks,
                            in.tree, in.grid, s.config.samples, seed);
    });
    Csv qcsv({"sample", "log_lhs", "log_rhs", "quotient", "degenerate"});
    for (const auto& x : q.samples)
      qcsv.row({num(x.id), num(x.result.log_lhs), num(x.result.log_rhs), num(x.result.quotient),
                x.result.degenerate ? "1" : "0"});
    s.add("carleman_" + name + ".csv", qcsv.text());
    s.report.kv(name + "_max_quotient", q.max_quotient);
    s.report.kv(name + "_median_quotient", q.median_quotient);
    s.report.kv(name + "_degenerate", num(q.degenerate));
    s.report.kv(name + "_max_quotient_2lambda", q2.max_quotient);
  }
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw SolverError("cannot write " + path.string());
}

}  // namespace

const char* version() { return KSLAB_VERSION; }

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw SolverError("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

int exit_code(const std::exception& e) {
  if (const auto* s = dynamic_cast<const StageError*>(&e)) return s->validation() ? 2 : 3;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const ViolatedGeometry*>(&e) || dynamic_cast<const InvalidArgument*>(&e) ||
      dynamic_cast<const AuditFailed*>(&e))
    return 2;
  return 3;
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"simulate",      "saddle",        "nullcontrol",
                                              "stackelberg",   "observability", "carleman-check"};
  return names;
}

std::vector<double> initial_state(const InitialSpec& spec, const Grid& grid, std::uint64_t seed) {
  std::vector<double> y(grid.size(), 0.0);
  switch (spec.kind) {
    case InitialSpec::Kind::zero:
      break;
    case InitialSpec::Kind::random: {
      Rng rng(seed);
      for (std::size_t m = 1; m <= spec.modes; ++m) {
        const double xi = rng.normal() / static_cast<double>(m);
        for (std::size_t j = 0; j < y.size(); ++j)
          y[j] += xi * std::sin(static_cast<double>(m) * std::numbers::pi * grid.x_points[j]);
      }
      break;
    }
    case InitialSpec::Kind::sine:
      for (std::size_t j = 0; j < y.size(); ++j)
        y[j] = std::sin(static_cast<double>(spec.modes) * std::numbers::pi * grid.x_points[j]);
      break;
    case InitialSpec::Kind::file: {
      std::ifstream in(spec.path);
      if (!in) throw InvalidArgument("initial.profile: cannot read " + spec.path);
      for (double& v : y)
        if (!(in >> v)) throw InvalidArgument("initial.profile: expected " +
                                              std::to_string(y.size()) + " values in " +
                                              spec.path);
      double extra;
      if (in >> extra) throw InvalidArgument("initial.profile: too many values in " + spec.path);
      break;
    }
  }
  for (double& v : y) v *= spec.amplitude;
  return y;
}

namespace {

Targets spec_targets(const TargetSpec& spec, const BinomialTree& tree, const Grid& grid,
                     const RegionMask& masks, std::uint64_t seed) {
  Targets t;
  if (spec.kind == TargetSpec::Kind::zero) return t;
  TreeProcess* parts[3] = {&t.y_d0, &t.y_d1, &t.y_d2};
  const Region regions[3] = {Region::Od0, Region::Od1, Region::Od2};
  for (int i = 0; i < 3; ++i) *parts[i] = TreeProcess(tree, grid.size());
  if (spec.kind == TargetSpec::Kind::constant) {
    for (TreeProcess* p : parts) p->fill(spec.value);
  } else if (spec.kind == TargetSpec::Kind::random) {
    for (int i = 0; i < 3; ++i) {
      Rng rng(derive_seed(seed, "targets/" + std::to_string(i)));
      rng.fill_normal(parts[i]->data(), spec.value);
    }
  } else {
    std::ifstream in(spec.path);
    if (!in) throw InvalidArgument("targets.spec: cannot read " + spec.path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
      std::istringstream ls(line);
      std::size_t comp = 0, level = 0, node = 0;
      const std::string where = "targets.spec: " + spec.path + ":" + std::to_string(lineno);
      if (!(ls >> comp >> level >> node) || comp > 2 || level > tree.depth() ||
          node >= BinomialTree::level_size(level))
        throw InvalidArgument(where + ": bad component/level/node");
      auto dst = parts[comp]->node(level, node);
      for (double& v : dst)
        if (!(ls >> v)) throw InvalidArgument(where + ": expected " +
                                              std::to_string(grid.size()) + " values");
    }
  }
  for (int i = 0; i < 3; ++i) parts[i]->mask(masks[regions[i]]);
  return t;
}

}  // namespace

Instance build_instance(const ExperimentConfig& c) {
  validate(c);
  Instance in{build_grid(c.n), build_tree(c.depth, c.model.T), {}, {}, carleman_params(c),
              region_interval(c, Region::B)};
  GameProblem& p = in.problem;
  p.params = c.model;
  p.game = c.game;
  p.masks = region_mask(in.grid, c.regions);
  p.y0 = initial_state(c.initial, in.grid, derive_seed(c.seed, "initial"));
  const Targets given = spec_targets(c.targets, in.tree, in.grid, p.masks, c.seed);
  const WeightModel w(in.carleman, construct_kappa(in.b), c.model.T);
  if (c.targets.form == TargetSpec::Form::physical) {
    p.targets = given;
    in.reduced_targets = reduced_from_targets(given, w, in.tree);
  } else {
    in.reduced_targets = given;
    p.targets = targets_from_reduced(given, w, in.tree);
  }
  return in;
}

RunRecord run_experiment(const std::string& subcommand, const ExperimentConfig& config) {
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), subcommand) == names.end())
    throw InvalidArgument("unknown subcommand '" + subcommand + "'");

  RunRecord record;
  record.subcommand = subcommand;
  record.version = version();
  record.out_dir = config.out;
  // The recorded config is location-independent so digests do not depend on --out.
  ExperimentConfig recorded = config;
  recorded.out = ".";
  const std::string config_text = serialize(recorded);
  record.config_sha256 = sha256_hex(config_text);

  Session s{config, record, {}, {}};
  s.add("config.ini", config_text);
  s.report.kv("program", std::string("kslab ") + version());
  s.report.kv("subcommand", subcommand);
  s.report.kv("seed", std::to_string(config.seed));
  s.report.kv("config_sha256", record.config_sha256);
  s.report.kv("grid_n", num(config.n));
  s.report.kv("tree_depth", num(config.depth));

  auto finish = [&] {
    std::filesystem::create_directories(record.out_dir);
    s.add("report.txt", s.report.text());
    for (const auto& [name, content] : s.files) {
      write_file(record.out_dir / name, content);
      record.files.push_back({name, sha256_hex(content), content.size()});
    }
    std::ostringstream m;
    m << "version " << record.version << "\n";
    m << "subcommand " << record.subcommand << "\n";
    m << "status " << (record.ok ? "ok" : "failed") << "\n";
    m << "config_sha256 " << record.config_sha256 << "\n";
    m << "seed " << config.seed << "\n";
    for (const auto& f : record.files)
      m << "file " << f.name << " " << f.sha256 << " " << f.bytes << "\n";
    for (const auto& [stage, secs] : record.timings) m << "time " << stage << " " << num(secs) << "\n";
    write_file(record.out_dir / "manifest.txt", m.str());
  };

  try {
    const Instance in = s.timed("setup", [&] { return build_instance(config); });
    s.report.kv("initial_energy", grid_dot(in.grid, in.problem.y0, in.problem.y0));
    if (subcommand == "simulate") run_simulate(s, in);
    else if (subcommand == "saddle") run_saddle(s, in);
    else if (subcommand == "nullcontrol") run_nullcontrol(s, in);
    else if (subcommand == "stackelberg") run_stackelberg(s, in);
    else if (subcommand == "observability") run_observability(s, in);
    else run_carleman_check(s, in);
    s.report.section("status");
    s.report.kv("status", "ok");
  } catch (const StageError& e) {
    record.ok = false;
    s.report.section("status");
    s.report.kv("status", "failed");
    s.report.kv("failed_stage", e.stage());
    s.report.kv("error", e.what());
    finish();
    throw;
  }
  finish();
  return record;
}

}  // namespace kslab
