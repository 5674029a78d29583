#include "kslab/spatial.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "kslab/errors.hpp"

namespace kslab {

Grid build_grid(std::size_t n_interior) {
  if (n_interior < 8) {
    throw InvalidArgument("grid needs at least 8 interior points, got " +
                          std::to_string(n_interior));
  }
  Grid g;
  g.n_interior = n_interior;
  g.h = 1.0 / static_cast<double>(n_interior + 1);
  g.x_points.resize(n_interior);
  for (std::size_t j = 0; j < n_interior; ++j) {
    g.x_points[j] = static_cast<double>(j + 1) * g.h;
  }
  return g;
}

CoefficientField::CoefficientField(double constant) : values_{constant} {}

CoefficientField::CoefficientField(std::size_t rows, std::size_t cols,
                                   std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows_ == 0 || cols_ == 0 || values_.size() != rows_ * cols_) {
    throw InvalidArgument("coefficient table: expected " +
                          std::to_string(rows_ * cols_) + " values, got " +
                          std::to_string(values_.size()));
  }
}

double CoefficientField::at(double time_fraction, double x) const {
  auto cell = [](double u, std::size_t count) {
    const double scaled = std::floor(u * static_cast<double>(count));
    if (scaled <= 0.0) return std::size_t{0};
    return std::min(count - 1, static_cast<std::size_t>(scaled));
  };
  return values_[cell(time_fraction, rows_) * cols_ + cell(x, cols_)];
}

double CoefficientField::sup_norm() const {
  double s = 0.0;
  for (double v : values_) s = std::max(s, std::abs(v));
  return s;
}

std::vector<double> CoefficientField::sample(std::size_t level,
                                             std::size_t depth,
                                             const Grid& grid) const {
  const double tf = depth == 0 ? 0.0
                               : static_cast<double>(level) /
                                     static_cast<double>(depth);
  std::vector<double> out(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) out[j] = at(tf, grid.x_points[j]);
  return out;
}

void validate(const ModelParams& params) {
  std::vector<std::string> bad;
  if (!(params.k > 0.0)) bad.emplace_back("k must be > 0");
  if (!(params.eta > 0.0)) bad.emplace_back("eta must be > 0");
  if (!(params.T > 0.0)) bad.emplace_back("T must be > 0");
  if (!std::isfinite(params.a.sup_norm())) bad.emplace_back("a must be bounded");
  if (!std::isfinite(params.b.sup_norm())) bad.emplace_back("b must be bounded");
  if (!bad.empty()) {
    std::string msg = "model parameters: ";
    for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? "; " : "") + bad[i];
    throw InvalidArgument(msg);
  }
}

const char* region_name(Region r) {
  switch (r) {
    case Region::O: return "O";
    case Region::D: return "D";
    case Region::Od0: return "Od0";
    case Region::Od1: return "Od1";
    case Region::Od2: return "Od2";
    case Region::B: return "B";
  }
  return "?";
}

const std::vector<double>& RegionMask::operator[](Region r) const {
  auto it = indicators.find(r);
  if (it == indicators.end()) {
    throw InvalidArgument(std::string("region ") + region_name(r) + " not defined");
  }
  return it->second;
}

double RegionMask::measure(Region r, const Grid& grid) const {
  double s = 0.0;
  for (double v : (*this)[r]) s += v;
  return s * grid.h;
}

RegionMask region_mask(const Grid& grid,
                       const std::vector<std::pair<Region, Interval>>& regions) {
  RegionMask mask;
  for (const auto& [r, iv] : regions) {
    if (!(iv.left >= 0.0 && iv.left < iv.right && iv.right <= 1.0)) {
      std::ostringstream msg;
      msg << "region " << region_name(r) << ": need 0 <= left < right <= 1, got ("
          << iv.left << ", " << iv.right << ")";
      throw InvalidArgument(msg.str());
    }
    std::vector<double> ind(grid.size(), 0.0);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const double x = grid.x_points[j];
      ind[j] = (x > iv.left && x < iv.right) ? 1.0 : 0.0;
    }
    mask.intervals[r] = iv;
    mask.indicators[r] = std::move(ind);
  }
  for (Region r : {Region::O, Region::D, Region::Od0, Region::Od1, Region::Od2}) {
    if (!mask.has(r)) {
      throw ViolatedGeometry(std::string("missing-region:") + region_name(r));
    }
  }
  const auto& o = mask[Region::O];
  const auto& d = mask[Region::D];
  const auto& d0 = mask[Region::Od0];
  const auto& d1 = mask[Region::Od1];
  const auto& d2 = mask[Region::Od2];
  bool overlap = false;
  bool meet = false;
  bool uncovered = false;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (o[j] * d[j] != 0.0) overlap = true;
    if (o[j] * d0[j] != 0.0) {
      meet = true;
      if (d1[j] == 0.0 && d2[j] == 0.0) uncovered = true;
    }
  }
  if (overlap) throw ViolatedGeometry("O-D-overlap");
  if (!meet) throw ViolatedGeometry("intersection-empty");
  if (!uncovered) throw ViolatedGeometry("intersection-covered");
  if (mask.has(Region::B)) {
    const Interval b = mask.intervals.at(Region::B);
    const Interval io = mask.intervals.at(Region::O);
    const Interval i0 = mask.intervals.at(Region::Od0);
    if (b.left < std::max(io.left, i0.left) || b.right > std::min(io.right, i0.right)) {
      throw ViolatedGeometry("B-outside-intersection");
    }
  }
  return mask;
}

BandedOperator build_derivative_operator(const Grid& grid, int order) {
  // Stencils over offsets -2..2.
  static constexpr std::array<std::array<double, 5>, 4> kStencil{{
      {0.0, -0.5, 0.0, 0.5, 0.0},
      {0.0, 1.0, -2.0, 1.0, 0.0},
      {-0.5, 1.0, 0.0, -1.0, 0.5},
      {1.0, -4.0, 6.0, -4.0, 1.0},
  }};
  if (order < 1 || order > 4) {
    throw InvalidArgument("derivative order must be 1..4, got " +
                          std::to_string(order));
  }
  const std::size_t n = grid.size();
  const std::size_t band = order <= 2 ? 1 : 2;
  const double scale = 1.0 / std::pow(grid.h, order);
  const auto& st = kStencil[static_cast<std::size_t>(order - 1)];
  BandedOperator op(n, band, band);
  const auto last = static_cast<long>(n) + 1;  // index of the right endpoint
  for (std::size_t i = 0; i < n; ++i) {
    const long j = static_cast<long>(i) + 1;  // grid index, endpoints 0 and n+1
    for (long o = -2; o <= 2; ++o) {
      const double c = st[static_cast<std::size_t>(o + 2)];
      if (c == 0.0) continue;
      long p = j + o;
      if (p == 0 || p == last) continue;  // y = 0 on the boundary
      if (p == -1) p = 1;                 // y_x(0) = 0: even reflection
      if (p == last + 1) p = last - 1;    // y_x(1) = 0
      op.at(i, static_cast<std::size_t>(p - 1)) += c * scale;
    }
  }
  return op;
}

BandedOperator build_drift_operator(const Grid& grid, const ModelParams& params,
                                    Direction direction) {
  const BandedOperator d2 = build_derivative_operator(grid, 2);
  const BandedOperator d3 = build_derivative_operator(grid, 3);
  const BandedOperator d4 = build_derivative_operator(grid, 4);
  const double sign = direction == Direction::forward ? 1.0 : -1.0;
  return params.k * d2 + sign * d3 + params.eta * d4;
}

BandedOperator build_adjoint_drift_operator(const Grid& grid,
                                            const ModelParams& params) {
  return build_drift_operator(grid, params, Direction::forward).transpose();
}

double grid_dot(const Grid& grid, const std::vector<double>& u,
                const std::vector<double>& v) {
  double s = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) s += u[j] * v[j];
  return s * grid.h;
}

}  // namespace kslab
