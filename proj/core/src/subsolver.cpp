#include "emf/subsolver.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

#include "emf/loss.hpp"

namespace emf {

namespace {

using DynMatrix = Eigen::MatrixXd;

// Below this ratio of smallest to largest squared Cholesky pivot a ridge-free
// normal matrix is treated as singular.
constexpr double kSingularPivotRatio = 1e-13;
constexpr double kCgTolerance = 1e-12;
constexpr int kMaxHalvings = 50;

[[noreturn]] void singular(const std::string& where) {
  throw Error(ErrorCode::SingularDesign, where + ": weighted normal matrix is singular; set a positive ridge");
}

Vector weights_from_signs(const std::vector<char>& nonneg, double omega) {
  Vector w(static_cast<Eigen::Index>(nonneg.size()));
  for (Index i = 0; i < nonneg.size(); ++i) w[static_cast<Eigen::Index>(i)] = nonneg[i] ? omega : 1.0 - omega;
  return w;
}

std::vector<char> signs_of(const Vector& r) {
  std::vector<char> s(static_cast<Index>(r.size()));
  for (Eigen::Index i = 0; i < r.size(); ++i) s[static_cast<Index>(i)] = r[i] >= 0.0;
  return s;
}

// Small dense block: the k unknowns of one row of Y (or X) in completion.
class DenseDesign {
 public:
  DenseDesign(DynMatrix d, double ridge) : d_(std::move(d)), ridge_(ridge) {}

  const DynMatrix& matrix() const { return d_; }

  Vector solve(const Vector& w, const Vector& b, const Vector& /*start*/) const {
    const auto k = d_.cols();
    DynMatrix h = d_.transpose() * w.asDiagonal() * d_;
    h.diagonal().array() += ridge_;
    const Vector rhs = d_.transpose() * w.cwiseProduct(b);
    Eigen::LLT<DynMatrix> llt(h);
    if (llt.info() != Eigen::Success) singular("row subproblem");
    if (ridge_ == 0.0) {
      const auto piv = llt.matrixLLT().diagonal().array().square();
      if (k > 0 && piv.minCoeff() <= kSingularPivotRatio * piv.maxCoeff()) singular("row subproblem");
    }
    return llt.solve(rhs);
  }

 private:
  DynMatrix d_;
  double ridge_;
};

// Coupled design for general measurements, solved matrix-free with
// conjugate gradients on (G^T W G + ridge I) y = G^T W b.
class CgDesign {
 public:
  CgDesign(DynMatrix g, double ridge) : g_(std::move(g)), ridge_(ridge) {}

  const DynMatrix& matrix() const { return g_; }

  Vector solve(const Vector& w, const Vector& b, const Vector& start) const {
    const Eigen::Index n = g_.cols();
    if (ridge_ == 0.0 && g_.rows() < n) singular("coupled subproblem");
    auto apply = [&](const Vector& v) -> Vector {
      Vector out = g_.transpose() * w.cwiseProduct(g_ * v);
      if (ridge_ > 0.0) out += ridge_ * v;
      return out;
    };
    const Vector rhs = g_.transpose() * w.cwiseProduct(b);
    const double rhs_norm = rhs.norm();
    if (rhs_norm == 0.0 && ridge_ > 0.0) return Vector::Zero(n);
    const double diag_scale = (g_.array().square().colwise() * w.array()).colwise().sum().maxCoeff() + ridge_;

    Vector y = start;
    Vector r = rhs - apply(y);
    Vector p = r;
    double rr = r.squaredNorm();
    const double target = kCgTolerance * std::max(rhs_norm, std::numeric_limits<double>::min());
    const Eigen::Index max_iter = 10 * n + 50;
    for (Eigen::Index it = 0; it < max_iter && std::sqrt(rr) > target; ++it) {
      const Vector hp = apply(p);
      const double curv = p.dot(hp);
      if (curv <= 1e-14 * p.squaredNorm() * diag_scale) singular("coupled subproblem");
      const double alpha = rr / curv;
      y += alpha * p;
      r -= alpha * hp;
      const double rr_next = r.squaredNorm();
      p = r + (rr_next / rr) * p;
      rr = rr_next;
    }
    // Recompute the true residual; the recurrence drifts on long runs.
    if ((rhs - apply(y)).norm() > 1e-6 * std::max(rhs_norm, 1.0)) singular("coupled subproblem");
    return y;
  }

 private:
  DynMatrix g_;
  double ridge_;
};

struct BlockOutcome {
  Vector solution;
  std::vector<char> signs;
  std::vector<double> history;
  Index iterations = 0;
  double final_gradient_norm = 0.0;
  bool converged = false;
};

struct BlockState {
  Vector r;
  double f = 0.0;
};

template <typename Design>
BlockState evaluate(const Design& design, const Vector& b, const Vector& y, double omega, double ridge) {
  BlockState s;
  s.r = b - design.matrix() * y;
  for (Eigen::Index i = 0; i < s.r.size(); ++i) s.f += loss_of(s.r[i], omega);
  if (ridge > 0.0) s.f += ridge * y.squaredNorm();
  return s;
}

template <typename Design>
double gradient_norm(const Design& design, const BlockState& s, const Vector& y, double omega, double ridge) {
  Vector c(s.r.size());
  for (Eigen::Index i = 0; i < s.r.size(); ++i) c[i] = -2.0 * weight_of(s.r[i], omega) * s.r[i];
  Vector g = design.matrix().transpose() * c;
  if (ridge > 0.0) g += 2.0 * ridge * y;
  return g.norm();
}

// Sign-set iteration with a descent safeguard: a weighted least-squares step
// that fails to lower the objective is halved toward the previous iterate.
// Because the loss is C^1 and the WLS model shares its gradient at the
// current point, the step direction is always a descent direction.
template <typename Design>
BlockOutcome sign_set_iterate(const Design& design, const Vector& b, double omega, double ridge, Vector y,
                              Index max_inner, double grad_tol) {
  BlockOutcome out;
  BlockState cur = evaluate(design, b, y, omega, ridge);
  out.history.push_back(cur.f);
  std::vector<char> pattern = signs_of(cur.r);

  double gnorm = gradient_norm(design, cur, y, omega, ridge);
  if (gnorm <= grad_tol) {
    out.converged = true;
  }

  for (Index it = 1; it <= max_inner && !out.converged; ++it) {
    const Vector target = design.solve(weights_from_signs(pattern, omega), b, y);
    const Vector step = target - y;

    double s = 1.0;
    BlockState next = evaluate(design, b, target, omega, ridge);
    const double slack = 1e-12 * std::abs(cur.f);
    bool accepted = next.f <= cur.f + slack;
    for (int h = 0; h < kMaxHalvings && !accepted; ++h) {
      s *= 0.5;
      next = evaluate(design, b, y + s * step, omega, ridge);
      accepted = next.f < cur.f;
    }
    if (!accepted) {
      // No descent available at floating-point resolution.
      out.converged = gnorm <= grad_tol;
      break;
    }

    y = (s == 1.0) ? target : Vector(y + s * step);
    cur = std::move(next);
    out.history.push_back(cur.f);
    out.iterations = it;

    std::vector<char> next_pattern = signs_of(cur.r);
    const bool stable = s == 1.0 && next_pattern == pattern;
    pattern = std::move(next_pattern);
    gnorm = gradient_norm(design, cur, y, omega, ridge);
    if (stable || gnorm <= grad_tol) out.converged = true;
  }

  out.final_gradient_norm = gnorm;
  out.signs = std::move(pattern);
  out.solution = std::move(y);
  return out;
}

// Solves every row of the free factor independently. `fixed` is the factor
// held constant; `group(j)` lists the observations touching free row j and
// `other(obs)` gives the fixed-factor row each observation pairs with.
template <typename Group, typename Other>
SubproblemResult solve_rows(const Matrix& fixed, const EntryObs& e, Index free_rows, Group&& group, Other&& other,
                            double omega, double ridge, const Matrix& warm, const SubproblemCaps& caps) {
  const auto k = fixed.cols();
  const Index p = e.size();

  struct Block {
    DenseDesign design;
    Vector b;
    std::vector<Index> ids;
  };
  auto build = [&](Index j) {
    const auto ids = group(j);
    DynMatrix d(static_cast<Eigen::Index>(ids.size()), k);
    Vector b(static_cast<Eigen::Index>(ids.size()));
    for (Index q = 0; q < ids.size(); ++q) {
      d.row(static_cast<Eigen::Index>(q)) = fixed.row(static_cast<Eigen::Index>(other(ids[q])));
      b[static_cast<Eigen::Index>(q)] = e[ids[q]].value;
    }
    return Block{DenseDesign(std::move(d), ridge), std::move(b), std::vector<Index>(ids.begin(), ids.end())};
  };

  std::vector<Block> blocks;
  blocks.reserve(free_rows);
  double g0_sq = 0.0;
  for (Index j = 0; j < free_rows; ++j) {
    blocks.push_back(build(j));
    const Vector y = warm.row(static_cast<Eigen::Index>(j)).transpose();
    const auto s = evaluate(blocks.back().design, blocks.back().b, y, omega, ridge);
    const double g = gradient_norm(blocks.back().design, s, y, omega, ridge);
    g0_sq += g * g;
  }
  const double g0 = std::sqrt(g0_sq);
  // Per-block share of the global tolerance so the blocks' combined norm
  // stays within tol * (1 + |g0|).
  const double block_tol = caps.tol_gradient * (1.0 + g0) / std::sqrt(static_cast<double>(free_rows));

  Matrix solution(static_cast<Eigen::Index>(free_rows), k);
  std::vector<bool> signs(p);
  std::vector<std::vector<double>> histories;
  histories.reserve(free_rows);
  SubproblemResult res{DenseMatrix(1, 1), {}, 0, g0, 0.0, true, {}};
  double gf_sq = 0.0;
  for (Index j = 0; j < free_rows; ++j) {
    auto out = sign_set_iterate(blocks[j].design, blocks[j].b, omega, ridge,
                                Vector(warm.row(static_cast<Eigen::Index>(j)).transpose()), caps.max_inner, block_tol);
    solution.row(static_cast<Eigen::Index>(j)) = out.solution.transpose();
    for (Index q = 0; q < blocks[j].ids.size(); ++q) signs[blocks[j].ids[q]] = out.signs[q] != 0;
    res.inner_iterations = std::max(res.inner_iterations, out.iterations);
    res.converged = res.converged && out.converged;
    gf_sq += out.final_gradient_norm * out.final_gradient_norm;
    histories.push_back(std::move(out.history));
  }

  Index longest = 0;
  for (const auto& h : histories) longest = std::max(longest, h.size());
  res.objective_history.assign(longest, 0.0);
  for (const auto& h : histories) {
    for (Index t = 0; t < longest; ++t) res.objective_history[t] += h[std::min(t, h.size() - 1)];
  }
  res.solution = DenseMatrix(std::move(solution));
  res.sign_pattern = std::move(signs);
  res.final_gradient_norm = std::sqrt(gf_sq);
  return res;
}

// Row i of the returned p x (free_rows*k) matrix is vec(A_i^T X) when
// `transpose_measurement` is true (Y step) and vec(A_i Y) otherwise (X step),
// both flattened row-major.
DynMatrix coupled_design(const Matrix& fixed, const GeneralObs& g, bool y_step) {
  const auto k = fixed.cols();
  const Index free_rows = y_step ? g.cols() : g.rows();
  DynMatrix d = DynMatrix::Zero(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(free_rows) * k);
  const auto& a = g.measurements();
  for (Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index r = 0; r < a[i].outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(a[i], r); it; ++it) {
        const auto fixed_row = y_step ? it.row() : it.col();
        const auto free_row = y_step ? it.col() : it.row();
        d.row(static_cast<Eigen::Index>(i)).segment(free_row * k, k) += it.value() * fixed.row(fixed_row);
      }
    }
  }
  return d;
}

DynMatrix entry_design(const Matrix& x, const EntryObs& e) {
  const auto k = x.cols();
  DynMatrix d = DynMatrix::Zero(static_cast<Eigen::Index>(e.size()), static_cast<Eigen::Index>(e.cols()) * k);
  for (Index i = 0; i < e.size(); ++i) {
    d.row(static_cast<Eigen::Index>(i)).segment(static_cast<Eigen::Index>(e[i].col) * k, k) =
        x.row(static_cast<Eigen::Index>(e[i].row));
  }
  return d;
}

Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Matrix unflatten(const Vector& v, Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(v.data(), static_cast<Eigen::Index>(rows), cols);
}

SubproblemResult solve_coupled(const Matrix& fixed, const GeneralObs& g, bool y_step, double omega, double ridge,
                               const Matrix& warm, const SubproblemCaps& caps) {
  const Index free_rows = y_step ? g.cols() : g.rows();
  CgDesign design(coupled_design(fixed, g, y_step), ridge);
  const Vector start = flatten(warm);
  const auto s0 = evaluate(design, g.values(), start, omega, ridge);
  const double g0 = gradient_norm(design, s0, start, omega, ridge);
  auto out = sign_set_iterate(design, g.values(), omega, ridge, start, caps.max_inner,
                              caps.tol_gradient * (1.0 + g0));
  SubproblemResult res{DenseMatrix(unflatten(out.solution, free_rows, fixed.cols())),
                       std::vector<bool>(out.signs.begin(), out.signs.end()),
                       out.iterations,
                       g0,
                       out.final_gradient_norm,
                       out.converged,
                       std::move(out.history)};
  return res;
}

Matrix warm_or_zero(const std::optional<DenseMatrix>& warm, Index rows, Index k) {
  if (!warm) return Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(k));
  if (warm->rows() != rows || warm->cols() != k) {
    throw Error(ErrorCode::ShapeMismatch, "warm start has the wrong shape");
  }
  return warm->mat();
}

void validate_inputs(double omega, double ridge, const SubproblemCaps& caps) {
  check_omega(omega);
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw Error(ErrorCode::InvalidArgument, "ridge must be >= 0");
  if (caps.max_inner < 1) throw Error(ErrorCode::InvalidArgument, "max_inner must be at least 1");
}

}  // namespace

SubproblemResult solve_y(const DenseMatrix& x_fixed, const ObservationSet& obs, double omega, double ridge,
                         const std::optional<DenseMatrix>& warm_start, const SubproblemCaps& caps) {
  validate_inputs(omega, ridge, caps);
  if (x_fixed.rows() != obs.rows()) throw Error(ErrorCode::ShapeMismatch, "X rows do not match observations");
  const Matrix warm = warm_or_zero(warm_start, obs.cols(), x_fixed.cols());
  if (!obs.is_entry()) return solve_coupled(x_fixed.mat(), obs.general(), true, omega, ridge, warm, caps);
  const auto& e = obs.entry();
  return solve_rows(
      x_fixed.mat(), e, e.cols(), [&](Index j) { return e.col_group(j); },
      [&](Index id) { return e[id].row; }, omega, ridge, warm, caps);
}

SubproblemResult solve_x(const DenseMatrix& y_fixed, const ObservationSet& obs, double omega, double ridge,
                         const std::optional<DenseMatrix>& warm_start, const SubproblemCaps& caps) {
  validate_inputs(omega, ridge, caps);
  if (y_fixed.rows() != obs.cols()) throw Error(ErrorCode::ShapeMismatch, "Y rows do not match observations");
  const Matrix warm = warm_or_zero(warm_start, obs.rows(), y_fixed.cols());
  if (!obs.is_entry()) return solve_coupled(y_fixed.mat(), obs.general(), false, omega, ridge, warm, caps);
  const auto& e = obs.entry();
  return solve_rows(
      y_fixed.mat(), e, e.rows(), [&](Index i) { return e.row_group(i); },
      [&](Index id) { return e[id].col; }, omega, ridge, warm, caps);
}

DenseMatrix reference_qp_solve(const DenseMatrix& x_fixed, const ObservationSet& obs, double omega, double ridge) {
  check_omega(omega);
  if (!(ridge >= 0.0)) throw Error(ErrorCode::InvalidArgument, "ridge must be >= 0");
  if (x_fixed.rows() != obs.rows()) throw Error(ErrorCode::ShapeMismatch, "X rows do not match observations");
  const Index p = obs.size();
  const Index k = x_fixed.cols();
  const Index n = obs.cols();
  if (p > kReferenceMaxObservations || p * n * k > kReferenceMaxProducts) {
    std::ostringstream os;
    os << "reference solver accepts p <= " << kReferenceMaxObservations << " and p*n*k <= "
       << kReferenceMaxProducts << " (got p=" << p << ", n=" << n << ", k=" << k << ")";
    throw Error(ErrorCode::CapExceeded, os.str());
  }

  const DynMatrix g = obs.is_entry() ? entry_design(x_fixed.mat(), obs.entry())
                                     : coupled_design(x_fixed.mat(), obs.general(), true);
  const Vector b = obs.values();

  // Walk all 2^p weight patterns in Gray-code order so each step is a
  // rank-one update of the normal equations; rebuild periodically to bound
  // accumulated rounding.
  std::vector<char> nonneg(p, 1);
  auto rebuild = [&](DynMatrix& h, Vector& rhs) {
    const Vector w = weights_from_signs(nonneg, omega);
    h = g.transpose() * w.asDiagonal() * g;
    h.diagonal().array() += ridge;
    rhs = g.transpose() * w.cwiseProduct(b);
  };
  DynMatrix h;
  Vector rhs;
  rebuild(h, rhs);

  auto solve = [&](const DynMatrix& hm, const Vector& v) -> Vector {
    Eigen::LLT<DynMatrix> llt(hm);
    if (llt.info() == Eigen::Success) {
      const auto piv = llt.matrixLLT().diagonal().array().square();
      if (piv.minCoeff() > kSingularPivotRatio * piv.maxCoeff()) return llt.solve(v);
    }
    return Eigen::CompleteOrthogonalDecomposition<DynMatrix>(hm).solve(v);
  };
  auto value = [&](const Vector& y) {
    const Vector r = b - g * y;
    double f = ridge * y.squaredNorm();
    for (Eigen::Index i = 0; i < r.size(); ++i) f += loss_of(r[i], omega);
    return f;
  };

  Vector best = solve(h, rhs);
  double best_f = value(best);
  const std::uint64_t total = std::uint64_t{1} << p;
  for (std::uint64_t t = 1; t < total; ++t) {
    const auto bit = static_cast<Index>(std::countr_zero(t));
    const double delta = nonneg[bit] ? (1.0 - 2.0 * omega) : (2.0 * omega - 1.0);
    nonneg[bit] = !nonneg[bit];
    if ((t & 255U) == 0) {
      rebuild(h, rhs);
    } else {
      const auto gi = g.row(static_cast<Eigen::Index>(bit)).transpose();
      h.noalias() += delta * gi * gi.transpose();
      rhs += (delta * b[static_cast<Eigen::Index>(bit)]) * gi;
    }
    const Vector y = solve(h, rhs);
    const double f = value(y);
    if (f < best_f) {
      best_f = f;
      best = y;
    }
  }
  return DenseMatrix(unflatten(best, n, static_cast<Eigen::Index>(k)));
}

QrFactors qr_orthonormalize(const DenseMatrix& a) {
  const auto m = static_cast<Eigen::Index>(a.rows());
  const auto k = static_cast<Eigen::Index>(a.cols());
  if (m < k) throw Error(ErrorCode::RankDeficient, "QR needs at least as many rows as columns");
  Eigen::HouseholderQR<DynMatrix> qr(DynMatrix(a.mat()));
  DynMatrix q = qr.householderQ() * DynMatrix::Identity(m, k);
  DynMatrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const double scale = r.diagonal().cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(std::abs(r(j, j)) > 1e-12 * scale)) {
      throw Error(ErrorCode::RankDeficient, "matrix does not have full column rank");
    }
    if (r(j, j) < 0.0) {
      q.col(j) *= -1.0;
      r.row(j) *= -1.0;
    }
  }
  return {DenseMatrix(Matrix(q)), DenseMatrix(Matrix(r))};
}

}  // namespace emf
