#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kslab {

/// Square banded matrix with `lower` sub- and `upper` super-diagonals.
/// Storage is row-major over the band: row i keeps columns
/// i-lower .. i+upper, entries outside [0, n) stay zero.
class BandedOperator {
 public:
  BandedOperator() = default;
  BandedOperator(std::size_t n, std::size_t lower, std::size_t upper);

  std::size_t size() const { return n_; }
  std::size_t lower_bandwidth() const { return lower_; }
  std::size_t upper_bandwidth() const { return upper_; }

  /// Entry (i, j); zero outside the band.
  double operator()(std::size_t i, std::size_t j) const;
  /// Mutable entry; throws InvalidArgument outside the band.
  double& at(std::size_t i, std::size_t j);

  void apply(std::span<const double> x, std::span<double> out) const;
  std::vector<double> apply(std::span<const double> x) const;

  BandedOperator transpose() const;

  /// Max absolute column sum.
  double norm1() const;

  BandedOperator& operator+=(const BandedOperator& other);
  BandedOperator& operator*=(double s);

  friend BandedOperator operator+(BandedOperator a, const BandedOperator& b) {
    return a += b;
  }
  friend BandedOperator operator-(BandedOperator a, const BandedOperator& b) {
    BandedOperator nb = b;
    nb *= -1.0;
    return a += nb;
  }
  friend BandedOperator operator*(double s, BandedOperator a) { return a *= s; }

 private:
  BandedOperator widened(std::size_t lower, std::size_t upper) const;

  std::size_t n_ = 0;
  std::size_t lower_ = 0;
  std::size_t upper_ = 0;
  std::vector<double> bands_;
};

/// Product a * b; bandwidths add.
BandedOperator multiply(const BandedOperator& a, const BandedOperator& b);

/// diag(d) * op.
BandedOperator scale_rows(const std::vector<double>& d, BandedOperator op);

/// LU factorization of (I + shift * op), reused across many right-hand sides.
/// Construction throws IllConditioned when the system is singular or its
/// 1-norm condition estimate exceeds `max_condition`.
class ShiftedSystem {
 public:
  ShiftedSystem() = default;
  ShiftedSystem(const BandedOperator& op, double shift,
                double max_condition = 1e13);

  std::size_t size() const { return n_; }
  double condition_estimate() const { return condition_; }

  /// Solves (I + shift op) x = rhs in place.
  void solve(std::span<double> rhs) const;
  /// Solves (I + shift op)^T x = rhs in place.
  void solve_transpose(std::span<double> rhs) const;

 private:
  void solve_impl(char trans, std::span<double> rhs) const;

  std::size_t n_ = 0;
  std::size_t kl_ = 0;
  std::size_t ku_ = 0;
  std::vector<double> lu_;  // LAPACK general-band layout, column major
  std::vector<int> pivots_;
  double condition_ = 1.0;
};

/// One-shot solve of (I + shift * op) x = rhs.
std::vector<double> solve_banded(const BandedOperator& op, double shift,
                                 std::span<const double> rhs);

}  // namespace kslab
