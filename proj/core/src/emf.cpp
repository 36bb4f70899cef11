#include "emf/emf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "emf/loss.hpp"
#include "emf/random.hpp"
#include "emf/subsolver.hpp"

namespace emf {

namespace {

using DynMatrix = Eigen::MatrixXd;
using ColSparse = Eigen::SparseMatrix<double, Eigen::ColMajor>;

constexpr Eigen::Index kOversampling = 10;
constexpr int kMaxPowerIterations = 1000;
// Stop once every retained pair satisfies |S v - sigma u| <= tol * sigma_1.
constexpr double kResidualTolerance = 1e-12;

ColSparse weighted_sum(const ObservationSet& obs) {
  const auto m = static_cast<Eigen::Index>(obs.rows());
  const auto n = static_cast<Eigen::Index>(obs.cols());
  std::vector<Eigen::Triplet<double>> t;
  if (obs.is_entry()) {
    t.reserve(obs.size());
    for (const auto& e : obs.entry().entries()) {
      t.emplace_back(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col), e.value);
    }
  } else {
    const auto& g = obs.general();
    for (Index i = 0; i < g.size(); ++i) {
      const double b = g.values()[static_cast<Eigen::Index>(i)];
      const auto& a = g.measurements()[i];
      for (Eigen::Index r = 0; r < a.outerSize(); ++r) {
        for (SparseMatrix::InnerIterator it(a, r); it; ++it) t.emplace_back(it.row(), it.col(), b * it.value());
      }
    }
  }
  ColSparse s(m, n);
  s.setFromTriplets(t.begin(), t.end());  // sums duplicates
  return s;
}

DynMatrix orthonormal_basis(const DynMatrix& a) {
  Eigen::HouseholderQR<DynMatrix> qr(a);
  return qr.householderQ() * DynMatrix::Identity(a.rows(), a.cols());
}

// Flip each singular pair so the largest-magnitude entry of u is positive.
void canonical_signs(DynMatrix& u, DynMatrix& v) {
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    Eigen::Index idx = 0;
    u.col(j).cwiseAbs().maxCoeff(&idx);
    if (u(idx, j) < 0.0) {
      u.col(j) *= -1.0;
      v.col(j) *= -1.0;
    }
  }
}

}  // namespace

InitTriple svd_init(const ObservationSet& obs, Index k, std::uint64_t seed) {
  const Index m = obs.rows();
  const Index n = obs.cols();
  if (k < 1 || k > std::min(m, n)) throw Error(ErrorCode::InvalidArgument, "rank must lie in [1, min(m, n)]");
  const ColSparse s = weighted_sum(obs);
  if (s.norm() == 0.0) throw Error(ErrorCode::DegenerateInit, "sum of b_i A_i is the zero matrix");

  const auto kk = static_cast<Eigen::Index>(k);
  const auto small = static_cast<Eigen::Index>(std::min(m, n));
  const Eigen::Index block = std::min(kk + kOversampling, small);

  DynMatrix u;
  DynMatrix v;
  Eigen::VectorXd sv;
  if (block >= small) {
    Eigen::JacobiSVD<DynMatrix> svd(DynMatrix(s), Eigen::ComputeThinU | Eigen::ComputeThinV);
    u = svd.matrixU().leftCols(kk);
    v = svd.matrixV().leftCols(kk);
    sv = svd.singularValues().head(kk);
  } else {
    Pcg32 rng(seed, streams::kSvdInit);
    DynMatrix omega(static_cast<Eigen::Index>(n), block);
    for (Eigen::Index j = 0; j < block; ++j) {
      for (Eigen::Index i = 0; i < omega.rows(); ++i) omega(i, j) = rng.normal();
    }
    const ColSparse st = s.transpose();
    DynMatrix q = orthonormal_basis(s * omega);
    for (int it = 0; it < kMaxPowerIterations; ++it) {
      const DynMatrix z = orthonormal_basis(st * q);
      q = orthonormal_basis(s * z);
      const DynMatrix bt = st * q;  // (Q^T S)^T, n x block
      Eigen::JacobiSVD<DynMatrix> svd(bt, Eigen::ComputeThinU | Eigen::ComputeThinV);
      // bt = Ub S Vb^T  =>  Q^T S = Vb S Ub^T, so left vectors are Q Vb.
      sv = svd.singularValues().head(kk);
      u = q * svd.matrixV().leftCols(kk);
      v = svd.matrixU().leftCols(kk);
      const DynMatrix residual = s * v - u * sv.asDiagonal();
      if (residual.colwise().norm().maxCoeff() <= kResidualTolerance * sv[0]) break;
    }
  }
  canonical_signs(u, v);
  return InitTriple{DenseMatrix(Matrix(u)), std::vector<double>(sv.data(), sv.data() + sv.size()),
                    DenseMatrix(Matrix(v))};
}

SolveReport fit(const ObservationSet& obs, const EmfConfig& config) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const double omega = config.omega;
  const double ridge = config.ridge;

  InitTriple init = svd_init(obs, config.rank, config.seed);
  if (config.scale_init) {
    const double inv_rate = static_cast<double>(obs.rows() * obs.cols()) / static_cast<double>(obs.size());
    for (double& d : init.d0) d *= inv_rate;
  }
  const Eigen::Map<const Eigen::VectorXd> d0(init.d0.data(), static_cast<Eigen::Index>(init.d0.size()));

  Matrix x_fixed = init.x0.mat();
  Matrix y_warm = init.y0.mat() * d0.asDiagonal();
  SolveReport report{FactorPair(init.x0, DenseMatrix(y_warm)), {}, {}, false, StopReason::MaxIterations, 0.0};
  report.objective_trace.push_back(objective(obs, report.factors, omega, ridge));

  const SubproblemCaps caps{config.max_inner, config.tol_gradient};
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };
  auto finish = [&](StopReason reason) {
    report.stop_reason = reason;
    report.converged = reason != StopReason::MaxIterations;
    report.wall_seconds = elapsed();
    return report;
  };
  if (report.objective_trace.back() == 0.0) return finish(StopReason::ToleranceObjective);

  for (Index t = 0; t < config.max_outer; ++t) {
    const auto ys = solve_y(DenseMatrix(x_fixed), obs, omega, ridge, DenseMatrix(y_warm), caps);
    Matrix y_fixed;
    Matrix x_warm;
    if (config.use_qr) {
      const auto qr = qr_orthonormalize(ys.solution);
      y_fixed = qr.q.mat();
      x_warm = x_fixed * qr.r.mat().transpose();
    } else {
      y_fixed = ys.solution.mat();
      x_warm = x_fixed;
    }

    const auto xs = solve_x(DenseMatrix(y_fixed), obs, omega, ridge, DenseMatrix(x_warm), caps);
    FactorPair candidate(xs.solution, DenseMatrix(y_fixed));
    const double previous = report.objective_trace.back();
    const double current = objective(obs, candidate, omega, ridge);
    if (current > previous) {
      // Exact block minimization cannot increase F; an increase is rounding
      // at the noise floor, so keep the previous iterate and stop.
      return finish(StopReason::ToleranceObjective);
    }

    report.factors = candidate;
    report.objective_trace.push_back(current);
    report.inner_iters.push_back(std::max(ys.inner_iterations, xs.inner_iterations));

    if (config.use_qr) {
      const auto qr = qr_orthonormalize(xs.solution);
      x_fixed = qr.q.mat();
      y_warm = y_fixed * qr.r.mat().transpose();
    } else {
      x_fixed = xs.solution.mat();
      y_warm = y_fixed;
    }

    const double decrease = (previous - current) / std::max(previous, std::numeric_limits<double>::min());
    if (current == 0.0 || decrease < config.tol_objective) return finish(StopReason::ToleranceObjective);
    const double gx = frobenius_norm(gradient_x(obs, report.factors, omega, ridge));
    const double gy = frobenius_norm(gradient_y(obs, report.factors, omega, ridge));
    if (gx < config.tol_gradient && gy < config.tol_gradient) return finish(StopReason::ToleranceGradient);
  }
  return finish(StopReason::MaxIterations);
}

double predict(const FactorPair& f, Index i, Index j) { return product_entry(f, i, j); }

DenseMatrix reconstruct(const FactorPair& f) {
  if (f.rows() * f.cols() > kMaxReconstructEntries) {
    throw Error(ErrorCode::CapExceeded, "product too large to materialize");
  }
  return DenseMatrix(Matrix(f.x().mat() * f.y().mat().transpose()));
}

}  // namespace emf
