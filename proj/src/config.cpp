#include "kslab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "kslab/errors.hpp"

namespace kslab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Reader {
  std::size_t line;
  std::string field;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(line, field + ": " + what);
  }

  double real(const std::string& s) const {
    double v = 0.0;
    const std::string t = trim(s);
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size())
      fail("expected a number, got '" + s + "'");
    return v;
  }

  std::uint64_t integer(const std::string& s) const {
    std::uint64_t v = 0;
    const std::string t = trim(s);
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size())
      fail("expected a nonnegative integer, got '" + s + "'");
    return v;
  }

  Interval interval(const std::string& s) const {
    const auto parts = split(s, ',');
    if (parts.size() != 2) fail("expected 'left, right'");
    return {real(parts[0]), real(parts[1])};
  }

  std::pair<std::string, std::string> tagged(const std::string& s) const {
    const auto colon = s.find(':');
    if (colon == std::string::npos) return {trim(s), ""};
    return {trim(s.substr(0, colon)), trim(s.substr(colon + 1))};
  }
};

std::string resolve(const std::string& path, const std::filesystem::path& base) {
  std::filesystem::path p(path);
  if (p.is_relative() && !base.empty()) p = base / p;
  return std::filesystem::absolute(p).lexically_normal().string();
}

CoefficientField parse_coefficient(const Reader& r, const std::string& value,
                                   const std::filesystem::path& base, std::string& file) {
  file.clear();
  const auto [tag, rest] = r.tagged(value);
  if (tag == "file") {
    file = resolve(rest, base);
    try {
      return read_coefficient_table(file);
    } catch (const Error& e) {
      r.fail(e.what());
    }
  }
  if (value.rfind("table", 0) == 0) {
    std::istringstream in(value.substr(5));
    std::vector<std::string> tokens;
    for (std::string t; in >> t;) tokens.push_back(t);
    if (tokens.size() < 2) r.fail("expected 'table rows cols values...'");
    const std::size_t rows = r.integer(tokens[0]), cols = r.integer(tokens[1]);
    if (rows == 0 || cols == 0 || tokens.size() != 2 + rows * cols)
      r.fail("table needs rows*cols values");
    std::vector<double> values;
    for (std::size_t i = 2; i < tokens.size(); ++i) values.push_back(r.real(tokens[i]));
    return CoefficientField(rows, cols, values);
  }
  return CoefficientField(r.real(value));
}

std::string coefficient_text(const CoefficientField& c, const std::string& file) {
  if (!file.empty()) return "file:" + file;
  if (c.is_constant()) return num(c.values()[0]);
  std::string out = "table " + std::to_string(c.rows()) + " " + std::to_string(c.cols());
  for (double v : c.values()) out += " " + num(v);
  return out;
}

const std::map<std::string, Region>& region_keys() {
  static const std::map<std::string, Region> keys{{"O", Region::O},     {"D", Region::D},
                                                  {"Od0", Region::Od0}, {"Od1", Region::Od1},
                                                  {"Od2", Region::Od2}, {"B", Region::B}};
  return keys;
}

void set_region(ExperimentConfig& c, Region r, Interval v) {
  for (auto& [reg, iv] : c.regions)
    if (reg == r) {
      iv = v;
      return;
    }
  c.regions.emplace_back(r, v);
}

void assign(ExperimentConfig& c, const std::string& section, const std::string& key,
            const std::string& value, std::size_t line, const std::filesystem::path& base) {
  const Reader r{line, section + "." + key};
  auto unknown = [&] { throw ParseError(line, "unknown key '" + section + "." + key + "'"); };
  if (section == "grid") {
    if (key == "n") c.n = r.integer(value);
    else unknown();
  } else if (section == "tree") {
    if (key == "depth") c.depth = r.integer(value);
    else unknown();
  } else if (section == "model") {
    if (key == "k") c.model.k = r.real(value);
    else if (key == "eta") c.model.eta = r.real(value);
    else if (key == "T") c.model.T = r.real(value);
    else if (key == "a") c.model.a = parse_coefficient(r, value, base, c.a_file);
    else if (key == "b") c.model.b = parse_coefficient(r, value, base, c.b_file);
    else unknown();
  } else if (section == "game") {
    if (key == "beta") c.game.beta = r.real(value);
    else if (key == "delta1") c.game.delta1 = r.real(value);
    else if (key == "delta2") c.game.delta2 = r.real(value);
    else unknown();
  } else if (section == "regions") {
    const auto it = region_keys().find(key);
    if (it == region_keys().end()) unknown();
    set_region(c, it->second, r.interval(value));
  } else if (section == "carleman") {
    if (key == "lambda") {
      if (value == "auto") c.lambda.reset();
      else c.lambda = r.real(value);
    } else if (key == "mu") {
      c.mu = r.real(value);
    } else {
      unknown();
    }
  } else if (section == "targets") {
    if (key == "spec") {
      const auto [tag, rest] = r.tagged(value);
      if (tag == "zero" && rest.empty()) {
        c.targets.kind = TargetSpec::Kind::zero;
      } else if (tag == "constant") {
        c.targets.kind = TargetSpec::Kind::constant;
        c.targets.value = r.real(rest);
      } else if (tag == "random") {
        c.targets.kind = TargetSpec::Kind::random;
        c.targets.value = r.real(rest);
      } else if (tag == "file") {
        c.targets.kind = TargetSpec::Kind::file;
        c.targets.path = resolve(rest, base);
      } else {
        r.fail("expected zero, constant:<c>, random:<scale> or file:<path>");
      }
    } else if (key == "form") {
      if (value == "physical") c.targets.form = TargetSpec::Form::physical;
      else if (value == "reduced") c.targets.form = TargetSpec::Form::reduced;
      else r.fail("expected physical or reduced");
    } else {
      unknown();
    }
  } else if (section == "initial") {
    if (key == "profile") {
      const auto [tag, rest] = r.tagged(value);
      if (tag == "zero" && rest.empty()) {
        c.initial.kind = InitialSpec::Kind::zero;
      } else if (tag == "random") {
        c.initial.kind = InitialSpec::Kind::random;
        c.initial.modes = r.integer(rest);
      } else if (tag == "sine") {
        c.initial.kind = InitialSpec::Kind::sine;
        c.initial.modes = r.integer(rest);
      } else if (tag == "file") {
        c.initial.kind = InitialSpec::Kind::file;
        c.initial.path = resolve(rest, base);
      } else {
        r.fail("expected zero, random:<modes>, sine:<mode> or file:<path>");
      }
    } else if (key == "amplitude") {
      c.initial.amplitude = r.real(value);
    } else {
      unknown();
    }
  } else if (section == "penalty") {
    if (key == "schedule") {
      c.penalty.schedule.clear();
      for (const auto& s : split(value, ',')) c.penalty.schedule.push_back(r.real(s));
    } else if (key == "cg_tol") {
      c.penalty.cg_tol = r.real(value);
    } else if (key == "cg_max_iter") {
      c.penalty.cg_max_iter = r.integer(value);
    } else {
      unknown();
    }
  } else if (section == "solver") {
    if (key == "saddle_tol") c.solver.saddle.tol = r.real(value);
    else if (key == "saddle_max_iter") c.solver.saddle.max_iter = r.integer(value);
    else if (key == "adjoint_tol") c.solver.adjoint.tol = r.real(value);
    else if (key == "adjoint_max_iter") c.solver.adjoint.max_iter = r.integer(value);
    else if (key == "contraction_threshold") c.solver.saddle.contraction_threshold = r.real(value);
    else if (key == "stall_floor") {
      c.solver.saddle.stall_floor = r.real(value);
      c.solver.adjoint.stall_floor = c.solver.saddle.stall_floor;
    } else unknown();
  } else if (section == "run") {
    if (key == "seed") c.seed = r.integer(value);
    else if (key == "out") c.out = value;
    else if (key == "samples") c.samples = r.integer(value);
    else unknown();
  } else {
    throw ParseError(line, "unknown section '" + section + "'");
  }
}

}  // namespace

ModelParams ExperimentConfig::default_model() {
  ModelParams m;
  m.k = 40.0;
  m.eta = 1.0;
  m.T = 1.0;
  m.a = CoefficientField(0.3);
  m.b = CoefficientField(0.3);
  return m;
}

std::vector<std::pair<Region, Interval>> ExperimentConfig::default_regions() {
  return {{Region::O, {0.2, 0.5}},    {Region::D, {0.6, 0.8}},   {Region::Od0, {0.3, 0.7}},
          {Region::Od1, {0.55, 0.75}}, {Region::Od2, {0.6, 0.9}}, {Region::B, {0.35, 0.45}}};
}

CarlemanParams carleman_params(const ExperimentConfig& config) {
  CarlemanParams p = default_carleman_params(config.model.T);
  if (config.lambda) p.lambda = *config.lambda;
  p.mu = config.mu;
  return p;
}

Interval region_interval(const ExperimentConfig& config, Region r) {
  for (const auto& [reg, iv] : config.regions)
    if (reg == r) return iv;
  throw InvalidArgument(std::string("region ") + region_name(r) + " not defined");
}

CoefficientField read_coefficient_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read coefficient table " + path.string());
  std::size_t rows = 0, cols = 0;
  if (!(in >> rows >> cols) || rows == 0 || cols == 0)
    throw InvalidArgument("coefficient table " + path.string() + ": bad header");
  std::vector<double> values(rows * cols);
  for (double& v : values)
    if (!(in >> v)) throw InvalidArgument("coefficient table " + path.string() + ": too few values");
  return CoefficientField(rows, cols, values);
}

std::vector<std::string> validation_issues(const ExperimentConfig& c) {
  std::vector<std::string> issues;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) issues.push_back(msg);
  };
  auto positive = [&](double v, const char* field) {
    need(v > 0.0 && std::isfinite(v), std::string(field) + ": must be finite and > 0");
  };
  auto unit = [&](double v, const char* field) {
    need(v > 0.0 && v < 1.0, std::string(field) + ": must lie in (0, 1)");
  };

  need(c.n >= 8, "grid.n: must be >= 8");
  need(c.depth >= 1 && c.depth <= 16, "tree.depth: must lie in [1, 16]");
  positive(c.model.k, "model.k");
  positive(c.model.eta, "model.eta");
  positive(c.model.T, "model.T");
  need(std::isfinite(c.model.a.sup_norm()), "model.a: must be finite");
  need(std::isfinite(c.model.b.sup_norm()), "model.b: must be finite");
  positive(c.game.beta, "game.beta");
  positive(c.game.delta1, "game.delta1");
  positive(c.game.delta2, "game.delta2");

  bool intervals_ok = true;
  for (const auto& [r, iv] : c.regions) {
    if (!(0.0 <= iv.left && iv.left < iv.right && iv.right <= 1.0)) {
      issues.push_back(std::string("regions.") + region_name(r) +
                       ": need 0 <= left < right <= 1");
      intervals_ok = false;
    }
  }
  const bool has_b = std::any_of(c.regions.begin(), c.regions.end(),
                                 [](const auto& p) { return p.first == Region::B; });
  need(has_b, "regions.B: required for the Carleman weights");
  if (intervals_ok && c.n >= 8) {
    try {
      region_mask(build_grid(c.n), c.regions);
    } catch (const ViolatedGeometry& e) {
      issues.push_back("regions: " + e.clause());
    }
  }
  if (has_b && intervals_ok) {
    const Interval b = region_interval(c, Region::B);
    if (b.left > 0.0 && b.right < 1.0) {
      try {
        construct_kappa(b);
      } catch (const AuditFailed& e) {
        issues.push_back("regions.B: weight function audit failed (" + e.property() + ")");
      }
    } else {
      issues.push_back("regions.B: must lie strictly inside (0, 1)");
    }
  }

  if (c.lambda) need(*c.lambda >= 1.0 && std::isfinite(*c.lambda), "carleman.lambda: must be >= 1");
  need(c.mu >= 1.0 && std::isfinite(c.mu), "carleman.mu: must be >= 1");

  need(std::isfinite(c.targets.value), "targets.spec: value must be finite");
  if (c.targets.kind == TargetSpec::Kind::random)
    need(c.targets.value >= 0.0, "targets.spec: random scale must be >= 0");
  if (c.targets.kind == TargetSpec::Kind::file)
    need(std::filesystem::is_regular_file(c.targets.path),
         "targets.spec: file not found: " + c.targets.path);
  need(std::isfinite(c.initial.amplitude), "initial.amplitude: must be finite");
  if (c.initial.kind == InitialSpec::Kind::random || c.initial.kind == InitialSpec::Kind::sine)
    need(c.initial.modes >= 1, "initial.profile: mode count must be >= 1");
  if (c.initial.kind == InitialSpec::Kind::file)
    need(std::filesystem::is_regular_file(c.initial.path),
         "initial.profile: file not found: " + c.initial.path);

  try {
    validate(c.penalty);
  } catch (const InvalidArgument& e) {
    issues.push_back(std::string("penalty: ") + e.what());
  }
  unit(c.penalty.cg_tol, "penalty.cg_tol");
  unit(c.solver.saddle.tol, "solver.saddle_tol");
  unit(c.solver.adjoint.tol, "solver.adjoint_tol");
  unit(c.solver.saddle.contraction_threshold, "solver.contraction_threshold");
  unit(c.solver.saddle.stall_floor, "solver.stall_floor");
  need(c.solver.saddle.max_iter >= 1, "solver.saddle_max_iter: must be >= 1");
  need(c.solver.adjoint.max_iter >= 1, "solver.adjoint_max_iter: must be >= 1");
  need(c.samples >= 1, "run.samples: must be >= 1");
  need(!c.out.empty(), "run.out: must not be empty");
  return issues;
}

void validate(const ExperimentConfig& config) {
  auto issues = validation_issues(config);
  if (!issues.empty()) throw ValidationError(std::move(issues));
}

ExperimentConfig parse_config_text(const std::string& text, const std::filesystem::path& base) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string raw, section;
  std::set<std::string> seen;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ParseError(line, "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) throw ParseError(line, "empty section name");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected 'key = value'");
    if (section.empty()) throw ParseError(line, "key outside of any section");
    const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
    if (key.empty()) throw ParseError(line, "empty key");
    if (!seen.insert(section + "." + key).second)
      throw ParseError(line, "duplicate key '" + section + "." + key + "'");
    assign(c, section, key, value, line, base);
  }
  validate(c);
  return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.parent_path());
}

std::string serialize(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[grid]\nn = " << c.n << "\n\n";
  o << "[tree]\ndepth = " << c.depth << "\n\n";
  o << "[model]\nk = " << num(c.model.k) << "\neta = " << num(c.model.eta)
    << "\nT = " << num(c.model.T) << "\na = " << coefficient_text(c.model.a, c.a_file)
    << "\nb = " << coefficient_text(c.model.b, c.b_file) << "\n\n";
  o << "[game]\nbeta = " << num(c.game.beta) << "\ndelta1 = " << num(c.game.delta1)
    << "\ndelta2 = " << num(c.game.delta2) << "\n\n";
  o << "[regions]\n";
  for (const auto& [r, iv] : c.regions)
    o << region_name(r) << " = " << num(iv.left) << ", " << num(iv.right) << "\n";
  o << "\n[carleman]\nlambda = " << (c.lambda ? num(*c.lambda) : std::string("auto"))
    << "\nmu = " << num(c.mu) << "\n\n";
  o << "[targets]\nspec = ";
  switch (c.targets.kind) {
    case TargetSpec::Kind::zero: o << "zero"; break;
    case TargetSpec::Kind::constant: o << "constant:" << num(c.targets.value); break;
    case TargetSpec::Kind::random: o << "random:" << num(c.targets.value); break;
    case TargetSpec::Kind::file: o << "file:" << c.targets.path; break;
  }
  o << "\nform = " << (c.targets.form == TargetSpec::Form::physical ? "physical" : "reduced")
    << "\n\n";
  o << "[initial]\nprofile = ";
  switch (c.initial.kind) {
    case InitialSpec::Kind::zero: o << "zero"; break;
    case InitialSpec::Kind::random: o << "random:" << c.initial.modes; break;
    case InitialSpec::Kind::sine: o << "sine:" << c.initial.modes; break;
    case InitialSpec::Kind::file: o << "file:" << c.initial.path; break;
  }
  o << "\namplitude = " << num(c.initial.amplitude) << "\n\n";
  o << "[penalty]\nschedule = ";
  for (std::size_t i = 0; i < c.penalty.schedule.size(); ++i)
    o << (i ? ", " : "") << num(c.penalty.schedule[i]);
  o << "\ncg_tol = " << num(c.penalty.cg_tol) << "\ncg_max_iter = " << c.penalty.cg_max_iter
    << "\n\n";
  o << "[solver]\nsaddle_tol = " << num(c.solver.saddle.tol)
    << "\nsaddle_max_iter = " << c.solver.saddle.max_iter
    << "\nadjoint_tol = " << num(c.solver.adjoint.tol)
    << "\nadjoint_max_iter = " << c.solver.adjoint.max_iter
    << "\ncontraction_threshold = " << num(c.solver.saddle.contraction_threshold)
    << "\nstall_floor = " << num(c.solver.saddle.stall_floor) << "\n\n";
  o << "[run]\nseed = " << c.seed << "\nout = " << c.out << "\nsamples = " << c.samples << "\n";
  return o.str();
}

}  // namespace kslab
