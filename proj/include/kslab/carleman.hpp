#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kslab/control.hpp"

namespace kslab {

/// kappa(x) = 4 u (1 - u) with u = m(x) a strictly increasing cubic,
/// m(0) = 0, m(1) = 1, m(c) = 1/2 where c is the midpoint of B.
/// For c <= 1/2: m(x) = x + s x (1 - x)(2 - x); for c > 1/2 the mirror
/// image 1 - m'(1 - x) with c' = 1 - c.
class KappaFunction {
 public:
  KappaFunction(Interval b, double c, double s, bool mirrored)
      : b_(b), c_(c), s_(s), mirrored_(mirrored) {}

  double operator()(double x) const;
  double derivative(double x) const;
  double reparam(double x) const;
  double reparam_derivative(double x) const;

  Interval region() const { return b_; }
  double critical_point() const { return c_; }
  double coefficient() const { return s_; }
  bool mirrored() const { return mirrored_; }

 private:
  Interval b_;
  double c_;
  double s_;
  bool mirrored_;
};

inline constexpr std::size_t kKappaAuditPoints = 10000;

/// Throws InvalidArgument unless 0 < left < right < 1, AuditFailed(property)
/// when an audited property fails on the 10^4-point grid.
KappaFunction construct_kappa(Interval b);

/// Runs the audit on an existing function; throws AuditFailed.
void audit_kappa(const KappaFunction& kappa, std::size_t points = kKappaAuditPoints);

struct CarlemanParams {
  double lambda = 4.0;
  double mu = 2.0;
};

/// lambda = 2 (T + T^2), mu = 2.
CarlemanParams default_carleman_params(double T);

/// Throws InvalidArgument unless lambda >= 1 and mu >= 1.
void validate(const CarlemanParams& params);

/// Values at one (t, x). theta, theta_bar and rho are also given as logs
/// since they leave the double range for moderate lambda. At t in {0, T}
/// gamma is +inf, theta = 0, log_theta = -inf and `endpoint` is set.
struct WeightValues {
  double phi = 0.0;
  double gamma = 0.0;
  double alpha = 0.0;
  double theta = 0.0;
  double log_theta = 0.0;
  double ell = 0.0;
  double gamma_bar = 0.0;
  double alpha_bar = 0.0;
  double theta_bar = 0.0;
  double log_theta_bar = 0.0;
  double rho = 0.0;
  double log_rho = 0.0;
  bool endpoint = false;
};

/// Weight functions for fixed (lambda, mu, kappa, T).
class WeightModel {
 public:
  WeightModel(CarlemanParams params, KappaFunction kappa, double T);

  const CarlemanParams& params() const { return params_; }
  const KappaFunction& kappa() const { return kappa_; }
  double horizon() const { return T_; }

  double phi(double x) const;
  double phi_max() const;  // e^{5 mu} - e^{3 mu}, attained where kappa = 0
  double gamma(double t) const;
  double ell(double t) const;
  double gamma_bar(double t) const;
  double log_theta(double t, double x) const;
  double log_theta_bar(double t, double x) const;
  double log_rho(double t) const;

 private:
  CarlemanParams params_;
  KappaFunction kappa_;
  double T_;
};

WeightValues evaluate_weights(const WeightModel& model, double t, double x);

/// Sampled suprema of the ratios LHS / (majorant without C).
struct BoundFit {
  std::string name;
  double fitted = 0.0;
};

struct ParameterBoundReport {
  std::vector<BoundFit> fits;
  bool all_finite = false;
};

/// Fits gamma^{-s} / T^{2s} (s = 1, 2, 3), |gamma_t| / (T gamma^2),
/// |gamma_tt| / (T^2 gamma^3), |alpha_t| / (T e^{5mu} gamma^2) and
/// |alpha_tt| / (T^2 e^{5mu} gamma^3) on an interior (t, x) sample.
ParameterBoundReport verify_parameter_bounds(const WeightModel& model,
                                             std::size_t time_samples = 2000,
                                             std::size_t space_samples = 101);

/// Ratio of the weighted sides of a Carleman-type inequality. Logs are
/// natural logs of E sum dt h (...); quotient = exp(log_lhs - log_rhs).
struct QuotientResult {
  double log_lhs = 0.0;
  double log_rhs = 0.0;
  double quotient = 0.0;
  bool degenerate = false;  // RHS = 0 (0/0 when LHS = 0 too)
};

/// Forward instance: dz + eta D4 z dt = (F1 + D1 F2 + D2 F3) dt + F4 dW,
/// z(0) = z0.
struct ForwardCarlemanData {
  std::vector<double> z0;
  TreeProcess f1, f2, f3, f4;
};

/// Backward instance: dz - eta D4 z dt = (F1 + D1 F2 + D2 F3) dt + Z dW,
/// z(T) = zT (level N).
struct BackwardCarlemanData {
  TreeProcess zT;
  TreeProcess f1, f2, f3;
};

/// Weighted time sums use levels 2..N-2 (the two levels next to each
/// endpoint are excluded); requires N >= 4.
QuotientResult forward_carleman_quotient(const WeightModel& model,
                                         const ForwardCarlemanData& data, double eta,
                                         const RegionMask& masks, const BinomialTree& tree,
                                         const Grid& grid);

QuotientResult backward_carleman_quotient(const WeightModel& model,
                                          const BackwardCarlemanData& data, double eta,
                                          const RegionMask& masks, const BinomialTree& tree,
                                          const Grid& grid);

/// I(7, p) + I(9, q) against lambda^47 E sum theta^2 gamma^47 |p|^2 chi_O
/// + lambda^9 E sum theta^2 gamma^9 |P|^2.
QuotientResult coupled_carleman_quotient(const WeightModel& model,
                                         const AdjointSolution& adjoint,
                                         const RegionMask& masks, const BinomialTree& tree,
                                         const Grid& grid);

enum class CarlemanCase { forward, backward, coupled };

CarlemanCase parse_carleman_case(const std::string& name);
std::string to_string(CarlemanCase which);

struct QuotientSample {
  std::size_t id = 0;
  QuotientResult result;
};

struct QuotientStudy {
  std::vector<QuotientSample> samples;
  double max_quotient = 0.0;
  double median_quotient = 0.0;
  std::size_t degenerate = 0;
};

/// Random instances: Gaussian data on levels 0..N-1 and Gaussian initial or
/// terminal values; the coupled case draws p_T and solves the adjoint system.
QuotientStudy carleman_study(CarlemanCase which, const WeightModel& model,
                             const ModelParams& params, const GameParams& game,
                             const RegionMask& masks, const BinomialTree& tree,
                             const Grid& grid, std::size_t n_samples, std::uint64_t seed);

/// One observability sample. lhs = E||p(0)||^2 + E sum rho^{-2}(|q|^2 +
/// |q_x|^2 + |q_xx|^2), rhs = E sum (|p|^2 chi_O + |P|^2), time sums over
/// levels 0..N-1. log_weighted_q is the log of the rho^{-2} term.
struct ObservabilitySample {
  std::size_t id = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double quotient = 0.0;
  double log_weighted_q = 0.0;
  bool skipped = false;
};

struct ObservabilityReport {
  std::vector<ObservabilitySample> samples;
  double max_quotient = 0.0;
  double median_quotient = 0.0;
  std::size_t skipped = 0;
};

ObservabilitySample observability_sample(const WeightModel& model,
                                         const AdjointSolution& adjoint,
                                         const RegionMask& masks, const BinomialTree& tree,
                                         const Grid& grid);

/// Gaussian p_T at every leaf; sample k uses derive_seed(seed, "observability/k").
ObservabilityReport observability_quotient(const WeightModel& model,
                                           const ModelParams& params, const GameParams& game,
                                           const RegionMask& masks, const BinomialTree& tree,
                                           const Grid& grid, std::size_t n_samples,
                                           std::uint64_t seed,
                                           const AdjointOptions& options = {});

/// log of E sum_{l<N} dt h sum_j rho(t_l)^2 |u|^2 mask; -inf for zero u.
double log_weighted_norm(const WeightModel& model, const TreeProcess& u,
                         const std::vector<double>& mask, const BinomialTree& tree,
                         const Grid& grid);

/// Median of a nonempty list (mean of the middle pair for even sizes).
double median(std::vector<double> values);

}  // namespace kslab
