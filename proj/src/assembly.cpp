#include "kslab/assembly.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <string>

#include "kslab/errors.hpp"

namespace kslab {

BandedOperator diagonal_operator(const std::vector<double>& entries) {
  BandedOperator op(entries.size(), 0, 0);
  for (std::size_t i = 0; i < entries.size(); ++i) op.at(i, i) = entries[i];
  return op;
}

namespace {

using Triplet = Eigen::Triplet<double>;

struct Ref {
  bool known = false;
  std::size_t col = 0;
  std::span<const double> data;
};

class Assembler {
 public:
  Assembler(const SpdeContext& ctx, const CoupledSystem& sys)
      : ctx_(ctx), sys_(sys), n_(ctx.grid().size()), N_(ctx.tree().depth()) {
    zeros_.assign(n_, 0.0);
    std::size_t next = 0;
    for (const auto& f : sys.fields) {
      base_.push_back(next);
      if (f.kind == FieldKind::forward) {
        if (!f.initial.empty() && f.initial.size() != n_) {
          throw InvalidArgument("forward field initial value has wrong size");
        }
        next += (ctx.tree().node_count() - 1) * n_;
      } else {
        next += 2 * backward_block();
      }
    }
    unknowns_ = next;
    rhs_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(unknowns_));
    check_couplings();
    const BandedOperator& L = ctx.drift();
    BandedOperator identity(n_, 0, 0);
    for (std::size_t i = 0; i < n_; ++i) identity.at(i, i) = 1.0;
    step_ = identity + ctx.tree().dt() * L;
    step_t_ = step_.transpose();
  }

  DirectSolveResult run() {
    for (std::size_t f = 0; f < sys_.fields.size(); ++f) {
      if (sys_.fields[f].kind == FieldKind::forward) {
        assemble_forward(f);
      } else {
        assemble_backward(f);
      }
    }
    Eigen::SparseMatrix<double> M(static_cast<Eigen::Index>(unknowns_),
                                  static_cast<Eigen::Index>(unknowns_));
    M.setFromTriplets(triplets_.begin(), triplets_.end());
    M.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.analyzePattern(M);
    lu.factorize(M);
    if (lu.info() != Eigen::Success) {
      throw SolverError("direct assembly: sparse LU failed (" + lu.lastErrorMessage() + ")");
    }
    x_ = lu.solve(rhs_);
    if (lu.info() != Eigen::Success || !x_.allFinite()) {
      throw SolverError("direct assembly: solve failed");
    }
    DirectSolveResult out;
    out.unknowns = unknowns_;
    const double rn = rhs_.norm();
    out.residual = (M * x_ - rhs_).norm() / (rn > 0.0 ? rn : 1.0);
    extract(out);
    return out;
  }

 private:
  std::size_t backward_block() const {
    return (BinomialTree::level_size(N_) - 1) * n_;
  }

  void check_couplings() const {
    for (const auto& c : sys_.couplings) {
      if (c.target >= sys_.fields.size() || c.source >= sys_.fields.size()) {
        throw InvalidArgument("coupling refers to an unknown field");
      }
      if (c.op.size() != n_) throw InvalidArgument("coupling operator has wrong size");
      const FieldKind tk = sys_.fields[c.target].kind;
      const FieldKind sk = sys_.fields[c.source].kind;
      const bool forward_role = c.role == Role::drift || c.role == Role::diffusion;
      if (forward_role != (tk == FieldKind::forward)) {
        throw InvalidArgument("coupling role does not match the target field kind");
      }
      if (sk == FieldKind::forward && c.slot != Slot::value) {
        throw InvalidArgument("forward fields have no martingale slot");
      }
      if (c.role == Role::terminal && sk != FieldKind::forward) {
        throw InvalidArgument("terminal couplings must read a forward field");
      }
    }
  }

  std::size_t forward_index(std::size_t f, std::size_t level, std::size_t i) const {
    return base_[f] + (BinomialTree::level_offset(level) + i - 1) * n_;
  }
  std::size_t backward_index(std::size_t f, Slot slot, std::size_t level,
                             std::size_t i) const {
    return base_[f] + (slot == Slot::martingale ? backward_block() : 0) +
           (BinomialTree::level_offset(level) + i) * n_;
  }

  Ref ref(std::size_t f, Slot slot, std::size_t level, std::size_t i) const {
    const auto& spec = sys_.fields[f];
    if (spec.kind == FieldKind::forward) {
      if (level == 0) {
        return {true, 0, spec.initial.empty() ? std::span<const double>(zeros_)
                                              : std::span<const double>(spec.initial)};
      }
      return {false, forward_index(f, level, i), {}};
    }
    if (level >= N_) throw SolverError("direct assembly: terminal value used as unknown");
    return {false, backward_index(f, slot, level, i), {}};
  }

  static std::span<const double> data_at(const TreeProcess& p, std::size_t level,
                                         std::size_t i) {
    if (p.width() == 0) return {};
    return p.node(level, i);
  }

  void add(std::size_t row0, const BandedOperator& op, double s, const Ref& r) {
    const std::size_t lo = op.lower_bandwidth();
    const std::size_t hi = op.upper_bandwidth();
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t j0 = i >= lo ? i - lo : 0;
      const std::size_t j1 = std::min(n_ - 1, i + hi);
      for (std::size_t j = j0; j <= j1; ++j) {
        const double v = s * op(i, j);
        if (v == 0.0) continue;
        if (r.known) {
          rhs_[static_cast<Eigen::Index>(row0 + i)] -= v * r.data[j];
        } else {
          triplets_.emplace_back(static_cast<int>(row0 + i), static_cast<int>(r.col + j), v);
        }
      }
    }
  }

  void add_diag(std::size_t row0, const std::vector<double>& d, const Ref& r) {
    for (std::size_t i = 0; i < n_; ++i) {
      if (d[i] == 0.0) continue;
      if (r.known) {
        rhs_[static_cast<Eigen::Index>(row0 + i)] -= d[i] * r.data[i];
      } else {
        triplets_.emplace_back(static_cast<int>(row0 + i), static_cast<int>(r.col + i), d[i]);
      }
    }
  }

  void add_rhs(std::size_t row0, double s, std::span<const double> data) {
    if (data.empty()) return;
    for (std::size_t i = 0; i < n_; ++i) rhs_[static_cast<Eigen::Index>(row0 + i)] += s * data[i];
  }

  void assemble_forward(std::size_t f) {
    const auto& spec = sys_.fields[f];
    const double dt = ctx_.tree().dt();
    const double sdt = ctx_.tree().sqrt_dt();
    std::vector<double> d(n_);
    for (std::size_t l = 0; l < N_; ++l) {
      const auto& a = ctx_.a(l);
      const auto& b = ctx_.b(l);
      for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
        for (int sigma : {1, -1}) {
          const std::size_t c = sigma > 0 ? BinomialTree::up_child(i)
                                          : BinomialTree::down_child(i);
          const std::size_t row0 = forward_index(f, l + 1, c);
          add(row0, step_, 1.0, ref(f, Slot::value, l + 1, c));
          for (std::size_t j = 0; j < n_; ++j) d[j] = -(1.0 + dt * a[j] + sigma * sdt * b[j]);
          add_diag(row0, d, ref(f, Slot::value, l, i));
          for (const auto& cp : sys_.couplings) {
            if (cp.target != f) continue;
            const double s = cp.role == Role::drift ? -dt : -sigma * sdt;
            add(row0, cp.op, s, ref(cp.source, cp.slot, l, i));
          }
          add_rhs(row0, dt, data_at(spec.drift_data, l, i));
          add_rhs(row0, sigma * sdt, data_at(spec.diffusion_data, l, i));
        }
      }
    }
  }

  void assemble_backward(std::size_t f) {
    const auto& spec = sys_.fields[f];
    const double dt = ctx_.tree().dt();
    const double sdt = ctx_.tree().sqrt_dt();
    std::vector<double> d(n_);
    for (std::size_t l = 0; l < N_; ++l) {
      for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
        for (int sigma : {1, -1}) {
          const std::size_t c = sigma > 0 ? BinomialTree::up_child(i)
                                          : BinomialTree::down_child(i);
          const std::size_t row0 =
              backward_index(f, sigma > 0 ? Slot::value : Slot::martingale, l, i);
          add(row0, step_t_, 1.0, ref(f, Slot::value, l, i));
          add(row0, step_t_, sigma * sdt, ref(f, Slot::martingale, l, i));
          if (l + 1 == N_) {
            for (const auto& cp : sys_.couplings) {
              if (cp.target != f || cp.role != Role::terminal) continue;
              add(row0, cp.op, -1.0, ref(cp.source, Slot::value, N_, c));
            }
            add_rhs(row0, 1.0, data_at(spec.terminal_data, N_, c));
            continue;
          }
          const auto& a = ctx_.a(l + 1);
          const auto& b = ctx_.b(l + 1);
          for (std::size_t j = 0; j < n_; ++j) d[j] = -(1.0 + dt * a[j]);
          add_diag(row0, d, ref(f, Slot::value, l + 1, c));
          for (std::size_t j = 0; j < n_; ++j) d[j] = -dt * b[j];
          add_diag(row0, d, ref(f, Slot::martingale, l + 1, c));
          for (const auto& cp : sys_.couplings) {
            if (cp.target != f || cp.role != Role::source) continue;
            add(row0, cp.op, dt, ref(cp.source, cp.slot, l + 1, c));
          }
          add_rhs(row0, -dt, data_at(spec.source_data, l + 1, c));
        }
      }
    }
  }

  std::span<const double> solution_block(std::size_t start) const {
    return {x_.data() + start, n_};
  }

  void extract(DirectSolveResult& out) const {
    const BinomialTree& tree = ctx_.tree();
    out.fields.resize(sys_.fields.size());
    // Values first, then backward states which read other fields.
    for (std::size_t f = 0; f < sys_.fields.size(); ++f) {
      const auto& spec = sys_.fields[f];
      auto& fs = out.fields[f];
      fs.value = TreeProcess(tree, n_);
      if (spec.kind == FieldKind::forward) {
        if (!spec.initial.empty()) {
          std::copy(spec.initial.begin(), spec.initial.end(), fs.value.node(0, 0).begin());
        }
        for (std::size_t l = 1; l <= N_; ++l)
          for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
            auto src = solution_block(forward_index(f, l, i));
            std::copy(src.begin(), src.end(), fs.value.node(l, i).begin());
          }
      } else {
        fs.martingale = TreeProcess(tree, n_);
        for (std::size_t l = 0; l < N_; ++l)
          for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
            auto zv = solution_block(backward_index(f, Slot::value, l, i));
            auto Zv = solution_block(backward_index(f, Slot::martingale, l, i));
            std::copy(zv.begin(), zv.end(), fs.value.node(l, i).begin());
            std::copy(Zv.begin(), Zv.end(), fs.martingale.node(l, i).begin());
          }
      }
    }
    const double dt = tree.dt();
    for (std::size_t f = 0; f < sys_.fields.size(); ++f) {
      const auto& spec = sys_.fields[f];
      if (spec.kind != FieldKind::backward) continue;
      auto& fs = out.fields[f];
      fs.state = TreeProcess(tree, n_);
      for (std::size_t i = 0; i < BinomialTree::level_size(N_); ++i) {
        auto w = fs.state.node(N_, i);
        auto t = data_at(spec.terminal_data, N_, i);
        if (!t.empty()) std::copy(t.begin(), t.end(), w.begin());
        for (const auto& cp : sys_.couplings) {
          if (cp.target != f || cp.role != Role::terminal) continue;
          auto y = cp.op.apply(out.fields[cp.source].value.node(N_, i));
          for (std::size_t j = 0; j < n_; ++j) w[j] += y[j];
        }
      }
      // the terminal level of z holds the terminal value
      auto zN = fs.value.level(N_);
      auto wN = fs.state.level(N_);
      std::copy(wN.begin(), wN.end(), zN.begin());
      for (std::size_t l = 0; l < N_; ++l) {
        const auto& a = ctx_.a(l);
        const auto& b = ctx_.b(l);
        for (std::size_t i = 0; i < BinomialTree::level_size(l); ++i) {
          auto w = fs.state.node(l, i);
          auto z = fs.value.node(l, i);
          auto Z = fs.martingale.node(l, i);
          for (std::size_t j = 0; j < n_; ++j) w[j] = (1.0 + dt * a[j]) * z[j] + dt * b[j] * Z[j];
          auto s0 = data_at(spec.source_data, l, i);
          if (!s0.empty())
            for (std::size_t j = 0; j < n_; ++j) w[j] -= dt * s0[j];
          for (const auto& cp : sys_.couplings) {
            if (cp.target != f || cp.role != Role::source) continue;
            const auto& src = out.fields[cp.source];
            const TreeProcess& p = cp.slot == Slot::value ? src.value : src.martingale;
            auto s = cp.op.apply(p.node(l, i));
            for (std::size_t j = 0; j < n_; ++j) w[j] -= dt * s[j];
          }
        }
      }
    }
  }

  const SpdeContext& ctx_;
  const CoupledSystem& sys_;
  std::size_t n_;
  std::size_t N_;
  std::vector<double> zeros_;
  std::vector<std::size_t> base_;
  std::size_t unknowns_ = 0;
  BandedOperator step_;
  BandedOperator step_t_;
  std::vector<Triplet> triplets_;
  Eigen::VectorXd rhs_;
  Eigen::VectorXd x_;
};

}  // namespace

DirectSolveResult solve_coupled_direct(const SpdeContext& ctx, const CoupledSystem& system) {
  const std::size_t size = ctx.tree().node_count() * ctx.grid().size();
  if (size > kMaxAssemblyNodesTimesPoints) {
    throw InvalidArgument("direct assembly: " + std::to_string(size) +
                          " node-points exceed the guard of " +
                          std::to_string(kMaxAssemblyNodesTimesPoints));
  }
  if (system.fields.empty()) throw InvalidArgument("direct assembly: no fields");
  return Assembler(ctx, system).run();
}

}  // namespace kslab
