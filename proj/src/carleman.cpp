#include "kslab/carleman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kslab/errors.hpp"
#include "kslab/random.hpp"

namespace kslab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// m(x) = x + s x (1 - x)(2 - x) and its derivative.
double cubic(double s, double x) { return x + s * x * (1.0 - x) * (2.0 - x); }
double cubic_derivative(double s, double x) { return 1.0 + s * (3.0 * x * x - 6.0 * x + 2.0); }

}  // namespace

double KappaFunction::reparam(double x) const {
  return mirrored_ ? 1.0 - cubic(s_, 1.0 - x) : cubic(s_, x);
}

double KappaFunction::reparam_derivative(double x) const {
  return mirrored_ ? cubic_derivative(s_, 1.0 - x) : cubic_derivative(s_, x);
}

double KappaFunction::operator()(double x) const {
  const double u = reparam(x);
  return 4.0 * u * (1.0 - u);
}

double KappaFunction::derivative(double x) const {
  const double u = reparam(x);
  return 4.0 * (1.0 - 2.0 * u) * reparam_derivative(x);
}

void audit_kappa(const KappaFunction& kappa, std::size_t points) {
  const Interval b = kappa.region();
  if (kappa(0.0) != 0.0 || kappa(1.0) != 0.0) throw AuditFailed("kappa(0) = kappa(1) = 0");
  if (!(kappa.derivative(0.0) > 0.0)) throw AuditFailed("kappa_x(0) > 0");
  if (!(kappa.derivative(1.0) < 0.0)) throw AuditFailed("kappa_x(1) < 0");
  double max_value = kappa(kappa.critical_point());
  for (std::size_t i = 1; i <= points; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(points + 1);
    const double k = kappa(x);
    if (!(k > 0.0)) throw AuditFailed("kappa > 0 on (0,1)");
    max_value = std::max(max_value, k);
    if (!(kappa.reparam_derivative(x) > 0.0)) throw AuditFailed("reparameterization increasing");
    const double kx = kappa.derivative(x);
    if (x <= b.left && !(kx > 0.0)) throw AuditFailed("|kappa_x| > 0 outside B");
    if (x >= b.right && !(kx < 0.0)) throw AuditFailed("|kappa_x| > 0 outside B");
  }
  if (std::abs(max_value - 1.0) > 1e-12) throw AuditFailed("max kappa = 1");
}

KappaFunction construct_kappa(Interval b) {
  if (!(b.left > 0.0 && b.left < b.right && b.right < 1.0)) {
    throw InvalidArgument("kappa: B must satisfy 0 < left < right < 1");
  }
  const double c = 0.5 * (b.left + b.right);
  const bool mirrored = c > 0.5;
  const double cc = mirrored ? 1.0 - c : c;
  const double s = (0.5 - cc) / (cc * (1.0 - cc) * (2.0 - cc));
  KappaFunction kappa(b, c, s, mirrored);
  audit_kappa(kappa);
  return kappa;
}

CarlemanParams default_carleman_params(double T) { return {2.0 * (T + T * T), 2.0}; }

void validate(const CarlemanParams& params) {
  if (!(params.lambda >= 1.0) || !std::isfinite(params.lambda)) {
    throw InvalidArgument("carleman lambda must be >= 1");
  }
  if (!(params.mu >= 1.0) || !std::isfinite(params.mu)) {
    throw InvalidArgument("carleman mu must be >= 1");
  }
}

WeightModel::WeightModel(CarlemanParams params, KappaFunction kappa, double T)
    : params_(params), kappa_(kappa), T_(T) {
  validate(params_);
  if (!(T > 0.0)) throw InvalidArgument("weights: T must be > 0");
}

double WeightModel::phi(double x) const {
  return std::exp(5.0 * params_.mu) - std::exp(params_.mu * (kappa_(x) + 3.0));
}

double WeightModel::phi_max() const {
  return std::exp(5.0 * params_.mu) - std::exp(params_.mu * 3.0);
}

double WeightModel::gamma(double t) const {
  if (t <= 0.0 || t >= T_) return kInf;
  return 1.0 / (t * (T_ - t));
}

double WeightModel::ell(double t) const {
  return t <= 0.5 * T_ ? 0.25 * T_ * T_ : t * (T_ - t);
}

double WeightModel::gamma_bar(double t) const {
  if (t <= 0.5 * T_) return 4.0 / (T_ * T_);
  return gamma(t);
}

double WeightModel::log_theta(double t, double x) const {
  const double g = gamma(t);
  if (std::isinf(g)) return -kInf;
  return -params_.lambda * phi(x) * g;
}

double WeightModel::log_theta_bar(double t, double x) const {
  const double g = gamma_bar(t);
  if (std::isinf(g)) return -kInf;
  return -params_.lambda * phi(x) * g;
}

double WeightModel::log_rho(double t) const {
  const double g = gamma_bar(t);
  if (std::isinf(g)) return kInf;
  return params_.lambda * phi_max() * g;
}

WeightValues evaluate_weights(const WeightModel& model, double t, double x) {
  WeightValues w;
  w.phi = model.phi(x);
  w.gamma = model.gamma(t);
  w.endpoint = std::isinf(w.gamma);
  w.alpha = w.endpoint ? kInf : w.phi * w.gamma;
  w.log_theta = model.log_theta(t, x);
  w.theta = w.endpoint ? 0.0 : std::exp(w.log_theta);
  w.ell = model.ell(t);
  w.gamma_bar = model.gamma_bar(t);
  w.alpha_bar = std::isinf(w.gamma_bar) ? kInf : w.phi * w.gamma_bar;
  w.log_theta_bar = model.log_theta_bar(t, x);
  w.theta_bar = std::isinf(w.gamma_bar) ? 0.0 : std::exp(w.log_theta_bar);
  w.log_rho = model.log_rho(t);
  w.rho = std::exp(w.log_rho);
  return w;
}

ParameterBoundReport verify_parameter_bounds(const WeightModel& model,
                                             std::size_t time_samples,
                                             std::size_t space_samples) {
  if (time_samples == 0 || space_samples < 2) {
    throw InvalidArgument("parameter bounds need samples in t and x");
  }
  const double T = model.horizon();
  const double e5 = std::exp(5.0 * model.params().mu);
  double fit_s[3] = {0.0, 0.0, 0.0};
  double fit_gt = 0.0, fit_gtt = 0.0, fit_at = 0.0, fit_att = 0.0;
  for (std::size_t k = 0; k < time_samples; ++k) {
    const double t = T * (static_cast<double>(k) + 0.5) / static_cast<double>(time_samples);
    const double g = model.gamma(t);
    const double gt = -(T - 2.0 * t) * g * g;
    const double gtt = 2.0 * g * g + 2.0 * (T - 2.0 * t) * (T - 2.0 * t) * g * g * g;
    for (int s = 1; s <= 3; ++s)
      fit_s[s - 1] = std::max(fit_s[s - 1], std::pow(g, -s) / std::pow(T, 2.0 * s));
    fit_gt = std::max(fit_gt, std::abs(gt) / (T * g * g));
    fit_gtt = std::max(fit_gtt, std::abs(gtt) / (T * T * g * g * g));
    for (std::size_t j = 0; j < space_samples; ++j) {
      const double x = static_cast<double>(j) / static_cast<double>(space_samples - 1);
      const double phi = model.phi(x);
      fit_at = std::max(fit_at, std::abs(phi * gt) / (T * e5 * g * g));
      fit_att = std::max(fit_att, std::abs(phi * gtt) / (T * T * e5 * g * g * g));
    }
  }
  ParameterBoundReport rep;
  rep.fits = {{"gamma^-1/T^2", fit_s[0]},
              {"gamma^-2/T^4", fit_s[1]},
              {"gamma^-3/T^6", fit_s[2]},
              {"|gamma_t|/(T gamma^2)", fit_gt},
              {"|gamma_tt|/(T^2 gamma^3)", fit_gtt},
              {"|alpha_t|/(T e^{5mu} gamma^2)", fit_at},
              {"|alpha_tt|/(T^2 e^{5mu} gamma^3)", fit_att}};
  rep.all_finite = std::all_of(rep.fits.begin(), rep.fits.end(),
                               [](const BoundFit& f) { return std::isfinite(f.fitted); });
  return rep;
}

namespace {

// Streaming log-sum-exp.
class LogSum {
 public:
  void add(double log_term) {
    if (log_term == -kInf) return;
    if (log_term > max_) {
      sum_ = sum_ * std::exp(max_ - log_term) + 1.0;
      max_ = log_term;
    } else {
      sum_ += std::exp(log_term - max_);
    }
  }
  void add(const LogSum& other) {
    if (other.max_ == -kInf) return;
    add(other.max_ + std::log(other.sum_));
  }
  double value() const { return max_ == -kInf ? -kInf : max_ + std::log(sum_); }

 private:
  double max_ = -kInf;
  double sum_ = 0.0;
};

// log E sum_{l in [lo, hi]} dt h sum_j w(t_l, x_j) |(op u)_j|^2 mask_j, where
// log w = power log(lambda gamma) + 2 log theta (or the caller's weight).
template <class LogWeight>
LogSum weighted_sum(const TreeProcess& u, const BandedOperator* op,
                    const std::vector<double>* mask, std::size_t lo, std::size_t hi,
                    const BinomialTree& tree, const Grid& grid, LogWeight&& log_weight) {
  LogSum acc;
  const std::size_t n = grid.size();
  std::vector<double> tmp(n);
  std::vector<double> lw(n);
  for (std::size_t l = lo; l <= hi; ++l) {
    const double t = tree.time(l);
    const double log_cell = std::log(tree.dt() * grid.h) -
                            static_cast<double>(l) * std::log(2.0);
    for (std::size_t j = 0; j < n; ++j) lw[j] = log_weight(t, grid.x_points[j]) + log_cell;
    for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
      auto v = u.node(l, i);
      if (op) {
        op->apply(v, tmp);
      } else {
        std::copy(v.begin(), v.end(), tmp.begin());
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (mask && (*mask)[j] == 0.0) continue;
        const double sq = tmp[j] * tmp[j];
        if (sq == 0.0) continue;
        acc.add(lw[j] + std::log(sq));
      }
    }
  }
  return acc;
}

struct CarlemanTerms {
  const WeightModel& model;
  const BinomialTree& tree;
  const Grid& grid;
  std::size_t lo;
  std::size_t hi;

  // lambda^d E sum theta^2 gamma^d |op u|^2 mask over the interior levels.
  LogSum term(const TreeProcess& u, double d, const BandedOperator* op = nullptr,
              const std::vector<double>* mask = nullptr, std::size_t last = SIZE_MAX) const {
    const double log_lambda = std::log(model.params().lambda);
    return weighted_sum(u, op, mask, lo, std::min(hi, last), tree, grid,
                        [&](double t, double x) {
                          return d * (log_lambda + std::log(model.gamma(t))) +
                                 2.0 * model.log_theta(t, x);
                        });
  }

  // I(d, u)
  LogSum energy(const TreeProcess& u, double d, const BandedOperator& d1,
                const BandedOperator& d2) const {
    LogSum s = term(u, d);
    s.add(term(u, d - 2.0, &d1));
    s.add(term(u, d - 4.0, &d2));
    return s;
  }
};

QuotientResult finish(const LogSum& lhs, const LogSum& rhs) {
  QuotientResult r;
  r.log_lhs = lhs.value();
  r.log_rhs = rhs.value();
  if (r.log_rhs == -kInf) {
    r.degenerate = true;
    r.quotient = r.log_lhs == -kInf ? 0.0 : kInf;
    return r;
  }
  r.quotient = std::exp(r.log_lhs - r.log_rhs);
  return r;
}

void check_levels(const BinomialTree& tree) {
  if (tree.depth() < 4) {
    throw InvalidArgument("carleman quotients need depth >= 4 (endpoint levels are excluded)");
  }
}

ModelParams pure_model(double eta, double T) {
  ModelParams p;
  p.k = 1.0;
  p.eta = eta;
  p.T = T;
  return p;
}

BandedOperator eta_d4(const Grid& grid, double eta) {
  return eta * build_derivative_operator(grid, 4);
}

TreeProcess or_zero(const TreeProcess& u, const BinomialTree& tree, const Grid& grid) {
  return u.width() == 0 ? TreeProcess(tree, grid.size()) : u;
}

// F1 + D1 F2 + D2 F3 nodewise.
TreeProcess divergence_source(const TreeProcess& f1, const TreeProcess& f2,
                              const TreeProcess& f3, const BandedOperator& d1,
                              const BandedOperator& d2, const BinomialTree& tree,
                              const Grid& grid) {
  TreeProcess s = or_zero(f1, tree, grid);
  std::vector<double> tmp(grid.size());
  for (int k = 0; k < 2; ++k) {
    const TreeProcess& f = k == 0 ? f2 : f3;
    if (f.width() == 0) continue;
    const BandedOperator& op = k == 0 ? d1 : d2;
    for (std::size_t l = 0; l <= tree.depth(); ++l)
      for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
        op.apply(f.node(l, i), tmp);
        auto out = s.node(l, i);
        for (std::size_t j = 0; j < tmp.size(); ++j) out[j] += tmp[j];
      }
  }
  return s;
}

}  // namespace

QuotientResult forward_carleman_quotient(const WeightModel& model,
                                         const ForwardCarlemanData& data, double eta,
                                         const RegionMask& masks, const BinomialTree& tree,
                                         const Grid& grid) {
  check_levels(tree);
  if (data.z0.size() != grid.size()) throw InvalidArgument("carleman: z0 size mismatch");
  const BandedOperator d1 = build_derivative_operator(grid, 1);
  const BandedOperator d2 = build_derivative_operator(grid, 2);
  const SpdeContext ctx(grid, tree, pure_model(eta, tree.horizon()), eta_d4(grid, eta));
  const TreeProcess F = divergence_source(data.f1, data.f2, data.f3, d1, d2, tree, grid);
  const TreeProcess G = or_zero(data.f4, tree, grid);
  const TreeProcess z = forward_sweep(ctx, data.z0, &F, &G);

  const CarlemanTerms terms{model, tree, grid, 2, tree.depth() - 2};
  const LogSum lhs = terms.energy(z, 7.0, d1, d2);
  LogSum rhs = terms.term(z, 7.0, nullptr, &masks[Region::B]);
  rhs.add(terms.term(or_zero(data.f1, tree, grid), 0.0));
  rhs.add(terms.term(or_zero(data.f2, tree, grid), 2.0));
  rhs.add(terms.term(or_zero(data.f3, tree, grid), 4.0));
  rhs.add(terms.term(G, 4.0));
  return finish(lhs, rhs);
}

QuotientResult backward_carleman_quotient(const WeightModel& model,
                                          const BackwardCarlemanData& data, double eta,
                                          const RegionMask& masks, const BinomialTree& tree,
                                          const Grid& grid) {
  check_levels(tree);
  if (data.zT.depth() != tree.depth() || data.zT.width() != grid.size()) {
    throw InvalidArgument("carleman: terminal does not match tree/grid");
  }
  const BandedOperator d1 = build_derivative_operator(grid, 1);
  const BandedOperator d2 = build_derivative_operator(grid, 2);
  const SpdeContext ctx(grid, tree, pure_model(eta, tree.horizon()), eta_d4(grid, eta));
  const TreeProcess S = divergence_source(data.f1, data.f2, data.f3, d1, d2, tree, grid);
  const BackwardSolution sol = backward_sweep(ctx, data.zT, &S);

  const CarlemanTerms terms{model, tree, grid, 2, tree.depth() - 2};
  const LogSum lhs = terms.energy(sol.state, 7.0, d1, d2);
  LogSum rhs = terms.term(sol.state, 7.0, nullptr, &masks[Region::B]);
  rhs.add(terms.term(or_zero(data.f1, tree, grid), 0.0));
  rhs.add(terms.term(or_zero(data.f2, tree, grid), 2.0));
  rhs.add(terms.term(or_zero(data.f3, tree, grid), 4.0));
  rhs.add(terms.term(sol.Z, 4.0));
  return finish(lhs, rhs);
}

QuotientResult coupled_carleman_quotient(const WeightModel& model,
                                         const AdjointSolution& adjoint,
                                         const RegionMask& masks, const BinomialTree& tree,
                                         const Grid& grid) {
  check_levels(tree);
  const BandedOperator d1 = build_derivative_operator(grid, 1);
  const BandedOperator d2 = build_derivative_operator(grid, 2);
  const CarlemanTerms terms{model, tree, grid, 2, tree.depth() - 2};
  LogSum lhs = terms.energy(adjoint.p.state, 7.0, d1, d2);
  lhs.add(terms.energy(adjoint.q, 9.0, d1, d2));
  LogSum rhs = terms.term(adjoint.p.state, 47.0, nullptr, &masks[Region::O]);
  rhs.add(terms.term(adjoint.p.Z, 9.0));
  return finish(lhs, rhs);
}

CarlemanCase parse_carleman_case(const std::string& name) {
  if (name == "forward") return CarlemanCase::forward;
  if (name == "backward") return CarlemanCase::backward;
  if (name == "coupled") return CarlemanCase::coupled;
  throw InvalidArgument("unknown carleman case '" + name + "'");
}

std::string to_string(CarlemanCase which) {
  switch (which) {
    case CarlemanCase::forward: return "forward";
    case CarlemanCase::backward: return "backward";
    case CarlemanCase::coupled: return "coupled";
  }
  return "?";
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

namespace {

TreeProcess gaussian_sources(const BinomialTree& tree, const Grid& grid, Rng& rng) {
  TreeProcess u(tree, grid.size());
  for (std::size_t l = 0; l < tree.depth(); ++l) rng.fill_normal(u.level(l));
  return u;
}

TreeProcess gaussian_terminal(const BinomialTree& tree, const Grid& grid, Rng& rng) {
  TreeProcess u(tree, grid.size());
  rng.fill_normal(u.level(tree.depth()));
  return u;
}

}  // namespace

QuotientStudy carleman_study(CarlemanCase which, const WeightModel& model,
                             const ModelParams& params, const GameParams& game,
                             const RegionMask& masks, const BinomialTree& tree,
                             const Grid& grid, std::size_t n_samples, std::uint64_t seed) {
  QuotientStudy study;
  std::vector<double> finite;
  for (std::size_t k = 0; k < n_samples; ++k) {
    Rng rng(derive_seed(seed, "carleman/" + to_string(which) + "/" + std::to_string(k)));
    QuotientSample s;
    s.id = k;
    if (which == CarlemanCase::forward) {
      ForwardCarlemanData d;
      d.z0 = rng.normal_vector(grid.size());
      d.f1 = gaussian_sources(tree, grid, rng);
      d.f2 = gaussian_sources(tree, grid, rng);
      d.f3 = gaussian_sources(tree, grid, rng);
      d.f4 = gaussian_sources(tree, grid, rng);
      s.result = forward_carleman_quotient(model, d, params.eta, masks, tree, grid);
    } else if (which == CarlemanCase::backward) {
      BackwardCarlemanData d;
      d.zT = gaussian_terminal(tree, grid, rng);
      d.f1 = gaussian_sources(tree, grid, rng);
      d.f2 = gaussian_sources(tree, grid, rng);
      d.f3 = gaussian_sources(tree, grid, rng);
      s.result = backward_carleman_quotient(model, d, params.eta, masks, tree, grid);
    } else {
      const TreeProcess pT = gaussian_terminal(tree, grid, rng);
      const AdjointSolution adj =
          solve_adjoint_system(pT, params, game, masks, tree, grid);
      s.result = coupled_carleman_quotient(model, adj, masks, tree, grid);
    }
    if (s.result.degenerate) {
      ++study.degenerate;
    } else {
      finite.push_back(s.result.quotient);
      study.max_quotient = std::max(study.max_quotient, s.result.quotient);
    }
    study.samples.push_back(s);
  }
  if (!finite.empty()) study.median_quotient = median(finite);
  return study;
}

double log_weighted_norm(const WeightModel& model, const TreeProcess& u,
                         const std::vector<double>& mask, const BinomialTree& tree,
                         const Grid& grid) {
  if (u.width() == 0) return -kInf;
  return weighted_sum(u, nullptr, &mask, 0, tree.depth() - 1, tree, grid,
                      [&](double t, double) { return 2.0 * model.log_rho(t); })
      .value();
}

ObservabilitySample observability_sample(const WeightModel& model,
                                         const AdjointSolution& adjoint,
                                         const RegionMask& masks, const BinomialTree& tree,
                                         const Grid& grid) {
  const BandedOperator d1 = build_derivative_operator(grid, 1);
  const BandedOperator d2 = build_derivative_operator(grid, 2);
  auto rho_m2 = [&](double t, double) { return -2.0 * model.log_rho(t); };
  const std::size_t last = tree.depth() - 1;
  LogSum q = weighted_sum(adjoint.q, nullptr, nullptr, 0, last, tree, grid, rho_m2);
  q.add(weighted_sum(adjoint.q, &d1, nullptr, 0, last, tree, grid, rho_m2));
  q.add(weighted_sum(adjoint.q, &d2, nullptr, 0, last, tree, grid, rho_m2));

  ObservabilitySample s;
  s.log_weighted_q = q.value();
  s.lhs = level_inner(grid.h, adjoint.p.state, adjoint.p.state, 0) + std::exp(s.log_weighted_q);
  s.rhs = space_time_norm_sq(tree, grid.h, adjoint.p.state, masks[Region::O]) +
          space_time_norm_sq(tree, grid.h, adjoint.p.Z);
  if (s.rhs == 0.0) {
    s.skipped = true;
    s.quotient = s.lhs == 0.0 ? 0.0 : kInf;
  } else {
    s.quotient = s.lhs / s.rhs;
  }
  return s;
}

ObservabilityReport observability_quotient(const WeightModel& model,
                                           const ModelParams& params, const GameParams& game,
                                           const RegionMask& masks, const BinomialTree& tree,
                                           const Grid& grid, std::size_t n_samples,
                                           std::uint64_t seed, const AdjointOptions& options) {
  validate(game);
  ObservabilityReport rep;
  std::vector<double> finite;
  for (std::size_t k = 0; k < n_samples; ++k) {
    Rng rng(derive_seed(seed, "observability/" + std::to_string(k)));
    const TreeProcess pT = gaussian_terminal(tree, grid, rng);
    const AdjointSolution adj =
        solve_adjoint_system(pT, params, game, masks, tree, grid, options);
    ObservabilitySample s = observability_sample(model, adj, masks, tree, grid);
    s.id = k;
    if (s.skipped) {
      ++rep.skipped;
    } else {
      finite.push_back(s.quotient);
      rep.max_quotient = std::max(rep.max_quotient, s.quotient);
    }
    rep.samples.push_back(s);
  }
  if (!finite.empty()) rep.median_quotient = median(finite);
  return rep;
}

}  // namespace kslab
