#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "kslab/banded.hpp"

namespace kslab {

/// Uniform mesh of (0,1) with `n_interior` unknowns; the endpoints carry the
/// clamped boundary values and are not stored.
struct Grid {
  std::size_t n_interior = 0;
  double h = 0.0;
  std::vector<double> x_points;

  std::size_t size() const { return n_interior; }
};

/// Requires n_interior >= 8 so that width-5 stencils fit.
Grid build_grid(std::size_t n_interior);

/// Piecewise-constant table over [0,T] x (0,1). A 1x1 table is a constant.
/// Row r covers times [r T / rows, (r+1) T / rows), column c covers
/// x in [c / cols, (c+1) / cols).
class CoefficientField {
 public:
  CoefficientField() : CoefficientField(0.0) {}
  explicit CoefficientField(double constant);
  CoefficientField(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const std::vector<double>& values() const { return values_; }
  bool is_constant() const { return rows_ == 1 && cols_ == 1; }

  /// Value at time fraction t/T in [0,1] and position x in (0,1).
  double at(double time_fraction, double x) const;
  double sup_norm() const;

  /// Samples on grid points at time t_level = level * T / depth.
  std::vector<double> sample(std::size_t level, std::size_t depth,
                             const Grid& grid) const;

  bool operator==(const CoefficientField&) const = default;

 private:
  std::size_t rows_ = 1;
  std::size_t cols_ = 1;
  std::vector<double> values_;
};

struct ModelParams {
  double k = 1.0;    // anti-diffusion
  double eta = 1.0;  // fourth-order dissipation
  double T = 1.0;
  CoefficientField a;  // drift zero-order coefficient
  CoefficientField b;  // diffusion zero-order coefficient
};

/// Throws InvalidArgument unless k, eta, T > 0 and a, b are finite.
void validate(const ModelParams& params);

enum class Region { O, D, Od0, Od1, Od2, B };

const char* region_name(Region r);

struct Interval {
  double left = 0.0;
  double right = 0.0;
};

/// Open-interval indicators sampled at the interior grid points.
struct RegionMask {
  std::map<Region, Interval> intervals;
  std::map<Region, std::vector<double>> indicators;

  const std::vector<double>& operator[](Region r) const;
  bool has(Region r) const { return indicators.count(r) != 0; }
  /// h * (number of grid points inside the region).
  double measure(Region r, const Grid& grid) const;
};

/// Builds the masks and checks O/D disjointness and the observation-overlap
/// condition on the grid. The regions O, D, Od0, Od1, Od2 are required; B is
/// optional and must lie inside O and Od0. Throws ViolatedGeometry naming the
/// clause: "O-D-overlap", "intersection-empty", "intersection-covered",
/// "B-outside-intersection", or "missing-region:<name>".
RegionMask region_mask(const Grid& grid,
                       const std::vector<std::pair<Region, Interval>>& regions);

/// Clamped-boundary central difference operator of order 1..4.
BandedOperator build_derivative_operator(const Grid& grid, int order);

enum class Direction { forward, backward };

/// forward: k D2 + D3 + eta D4, backward: k D2 - D3 + eta D4.
BandedOperator build_drift_operator(const Grid& grid, const ModelParams& params,
                                    Direction direction);

/// Exact discrete adjoint of the forward drift, (k D2 + D3 + eta D4)^T.
/// Agrees with the backward drift except in the two boundary rows of D3.
BandedOperator build_adjoint_drift_operator(const Grid& grid,
                                            const ModelParams& params);

/// Grid L2 inner product with cell width h.
double grid_dot(const Grid& grid, const std::vector<double>& u,
                const std::vector<double>& v);

}  // namespace kslab
