#include "kslab/banded.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kslab/errors.hpp"

namespace kslab {

static_assert(sizeof(lapack_int) == sizeof(int), "pivot storage assumes 32-bit lapack_int");

BandedOperator::BandedOperator(std::size_t n, std::size_t lower,
                               std::size_t upper)
    : n_(n), lower_(lower), upper_(upper), bands_(n * (lower + upper + 1), 0.0) {}

double BandedOperator::operator()(std::size_t i, std::size_t j) const {
  if (i >= n_ || j >= n_) return 0.0;
  if (j + lower_ < i || j > i + upper_) return 0.0;
  return bands_[i * (lower_ + upper_ + 1) + (j + lower_ - i)];
}

double& BandedOperator::at(std::size_t i, std::size_t j) {
  if (i >= n_ || j >= n_ || j + lower_ < i || j > i + upper_) {
    std::ostringstream msg;
    msg << "banded entry (" << i << ", " << j << ") outside band ["
        << lower_ << ", " << upper_ << "] of size " << n_;
    throw InvalidArgument(msg.str());
  }
  return bands_[i * (lower_ + upper_ + 1) + (j + lower_ - i)];
}

void BandedOperator::apply(std::span<const double> x,
                           std::span<double> out) const {
  if (x.size() != n_ || out.size() != n_) {
    throw InvalidArgument("banded apply: size mismatch");
  }
  const std::size_t width = lower_ + upper_ + 1;
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j0 = i >= lower_ ? i - lower_ : 0;
    const std::size_t j1 = std::min(n_ - 1, i + upper_);
    const double* row = &bands_[i * width];
    double acc = 0.0;
    for (std::size_t j = j0; j <= j1; ++j) acc += row[j + lower_ - i] * x[j];
    out[i] = acc;
  }
}

std::vector<double> BandedOperator::apply(std::span<const double> x) const {
  std::vector<double> out(n_);
  apply(x, out);
  return out;
}

BandedOperator BandedOperator::transpose() const {
  BandedOperator t(n_, upper_, lower_);
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j0 = i >= lower_ ? i - lower_ : 0;
    const std::size_t j1 = std::min(n_ - 1, i + upper_);
    for (std::size_t j = j0; j <= j1; ++j) t.at(j, i) = (*this)(i, j);
  }
  return t;
}

double BandedOperator::norm1() const {
  std::vector<double> col(n_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j0 = i >= lower_ ? i - lower_ : 0;
    const std::size_t j1 = std::min(n_ - 1, i + upper_);
    for (std::size_t j = j0; j <= j1; ++j) col[j] += std::abs((*this)(i, j));
  }
  return n_ == 0 ? 0.0 : *std::max_element(col.begin(), col.end());
}

BandedOperator BandedOperator::widened(std::size_t lower,
                                       std::size_t upper) const {
  BandedOperator w(n_, std::max(lower, lower_), std::max(upper, upper_));
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j0 = i >= lower_ ? i - lower_ : 0;
    const std::size_t j1 = std::min(n_ - 1, i + upper_);
    for (std::size_t j = j0; j <= j1; ++j) w.at(i, j) = (*this)(i, j);
  }
  return w;
}

BandedOperator& BandedOperator::operator+=(const BandedOperator& other) {
  if (other.n_ != n_) throw InvalidArgument("banded sum: size mismatch");
  if (other.lower_ > lower_ || other.upper_ > upper_) {
    *this = widened(other.lower_, other.upper_);
  }
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j0 = i >= other.lower_ ? i - other.lower_ : 0;
    const std::size_t j1 = std::min(n_ - 1, i + other.upper_);
    for (std::size_t j = j0; j <= j1; ++j) at(i, j) += other(i, j);
  }
  return *this;
}

BandedOperator& BandedOperator::operator*=(double s) {
  for (double& v : bands_) v *= s;
  return *this;
}

BandedOperator multiply(const BandedOperator& a, const BandedOperator& b) {
  if (a.size() != b.size()) throw InvalidArgument("banded product: size mismatch");
  const std::size_t n = a.size();
  BandedOperator c(n, std::min(n - 1, a.lower_bandwidth() + b.lower_bandwidth()),
                   std::min(n - 1, a.upper_bandwidth() + b.upper_bandwidth()));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k0 = i >= a.lower_bandwidth() ? i - a.lower_bandwidth() : 0;
    const std::size_t k1 = std::min(n - 1, i + a.upper_bandwidth());
    for (std::size_t k = k0; k <= k1; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const std::size_t j0 = k >= b.lower_bandwidth() ? k - b.lower_bandwidth() : 0;
      const std::size_t j1 = std::min(n - 1, k + b.upper_bandwidth());
      for (std::size_t j = j0; j <= j1; ++j) c.at(i, j) += aik * b(k, j);
    }
  }
  return c;
}

BandedOperator scale_rows(const std::vector<double>& d, BandedOperator op) {
  if (d.size() != op.size()) throw InvalidArgument("row scaling: size mismatch");
  for (std::size_t i = 0; i < op.size(); ++i) {
    const std::size_t j0 = i >= op.lower_bandwidth() ? i - op.lower_bandwidth() : 0;
    const std::size_t j1 = std::min(op.size() - 1, i + op.upper_bandwidth());
    for (std::size_t j = j0; j <= j1; ++j) op.at(i, j) *= d[i];
  }
  return op;
}

ShiftedSystem::ShiftedSystem(const BandedOperator& op, double shift,
                             double max_condition)
    : n_(op.size()), kl_(op.lower_bandwidth()), ku_(op.upper_bandwidth()) {
  if (n_ == 0) throw InvalidArgument("shifted system: empty operator");
  const std::size_t ldab = 2 * kl_ + ku_ + 1;
  lu_.assign(ldab * n_, 0.0);
  pivots_.assign(n_, 0);
  for (std::size_t j = 0; j < n_; ++j) {
    const std::size_t i0 = j >= ku_ ? j - ku_ : 0;
    const std::size_t i1 = std::min(n_ - 1, j + kl_);
    for (std::size_t i = i0; i <= i1; ++i) {
      double v = shift * op(i, j);
      if (i == j) v += 1.0;
      lu_[j * ldab + (kl_ + ku_ + i - j)] = v;
    }
  }
  const double anorm = [&] {
    double best = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      double s = 0.0;
      for (std::size_t r = kl_; r < ldab; ++r) s += std::abs(lu_[j * ldab + r]);
      best = std::max(best, s);
    }
    return best;
  }();
  const auto n = static_cast<lapack_int>(n_);
  const auto kl = static_cast<lapack_int>(kl_);
  const auto ku = static_cast<lapack_int>(ku_);
  lapack_int info = LAPACKE_dgbtrf(LAPACK_COL_MAJOR, n, n, kl, ku, lu_.data(),
                                   static_cast<lapack_int>(ldab), pivots_.data());
  if (info > 0) {
    throw IllConditioned("shifted banded system is singular (zero pivot at row " +
                             std::to_string(info) + ")",
                         INFINITY);
  }
  if (info < 0) throw SolverError("dgbtrf: invalid argument");
  double rcond = 0.0;
  info = LAPACKE_dgbcon(LAPACK_COL_MAJOR, '1', n, kl, ku, lu_.data(),
                        static_cast<lapack_int>(ldab), pivots_.data(), anorm,
                        &rcond);
  if (info != 0) throw SolverError("dgbcon failed");
  condition_ = rcond > 0.0 ? 1.0 / rcond : INFINITY;
  if (!(condition_ <= max_condition)) {
    std::ostringstream msg;
    msg << "shifted banded system ill-conditioned: condition estimate "
        << condition_ << " (shift " << shift << ")";
    throw IllConditioned(msg.str(), condition_);
  }
}

void ShiftedSystem::solve_impl(char trans, std::span<double> rhs) const {
  if (rhs.size() != n_) throw InvalidArgument("shifted solve: size mismatch");
  const std::size_t ldab = 2 * kl_ + ku_ + 1;
  const lapack_int info = LAPACKE_dgbtrs(
      LAPACK_COL_MAJOR, trans, static_cast<lapack_int>(n_),
      static_cast<lapack_int>(kl_), static_cast<lapack_int>(ku_), 1, lu_.data(),
      static_cast<lapack_int>(ldab), pivots_.data(), rhs.data(),
      static_cast<lapack_int>(n_));
  if (info != 0) throw SolverError("dgbtrs failed");
}

void ShiftedSystem::solve(std::span<double> rhs) const { solve_impl('N', rhs); }

void ShiftedSystem::solve_transpose(std::span<double> rhs) const {
  solve_impl('T', rhs);
}

std::vector<double> solve_banded(const BandedOperator& op, double shift,
                                 std::span<const double> rhs) {
  std::vector<double> x(rhs.begin(), rhs.end());
  if (shift == 0.0) return x;
  ShiftedSystem system(op, shift);
  system.solve(x);
  return x;
}

}  // namespace kslab
