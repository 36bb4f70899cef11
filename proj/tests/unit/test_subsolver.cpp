#include <gtest/gtest.h>

#include <cmath>

#include "emf/loss.hpp"
#include "emf/subsolver.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace emf {
namespace {

using oracle::Dense;

ObservationSet gaussian_obs(oracle::Gen& gen, Index m, Index n, Index p, const std::function<double(const Matrix&)>& value) {
  std::vector<SparseMatrix> a;
  Vector b(static_cast<Eigen::Index>(p));
  for (Index i = 0; i < p; ++i) {
    Matrix d(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      for (Eigen::Index c = 0; c < d.cols(); ++c) d(r, c) = gen.normal();
    }
    b(static_cast<Eigen::Index>(i)) = value(d);
    a.push_back(d.sparseView());
  }
  return GeneralObs(m, n, std::move(a), std::move(b));
}

// Completion data whose every column (and row) holds at least `min_count`
// entries, with values from `value`.
ObservationSet covered_entries(oracle::Gen& gen, Index m, Index n, Index p, Index min_count,
                               const std::function<double(Index, Index)>& value) {
  return EntryObs(m, n, gen.covering_entries(m, n, p, min_count, value));
}

Eigen::VectorXd pattern_weights(const std::vector<bool>& pattern, double w) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(pattern.size()));
  for (std::size_t i = 0; i < pattern.size(); ++i) out(static_cast<Eigen::Index>(i)) = pattern[i] ? w : 1.0 - w;
  return out;
}

TEST(SolveY, NoiselessSystemIsRecovered) {
  oracle::Gen gen(41);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = gen.matrix(7, 2);
    const auto y_star = gen.matrix(6, 2);
    const FactorPair truth(x, y_star);
    const double w = gen.uniform(0.05, 0.95);
    const ObservationSet obs = trial % 2 == 0
                                   ? covered_entries(gen, 7, 6, 24, 2, [&](Index i, Index j) { return product_entry(truth, i, j); })
                                   : gaussian_obs(gen, 7, 6, 20, [&](const Matrix& a) {
                                       return (a.cwiseProduct(Matrix(x.mat() * y_star.mat().transpose()))).sum();
                                     });
    const auto r = solve_y(x, obs, w, 0.0);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(frobenius_distance(r.solution, y_star), 1e-9);
    EXPECT_LE(frobenius_norm(gradient_y(obs, FactorPair(x, r.solution), w, 0.0)), 1e-10);
    EXPECT_LT(objective(obs, FactorPair(x, r.solution), w, 0.0), 1e-18);
  }
}

TEST(SolveX, NoiselessSystemIsRecovered) {
  oracle::Gen gen(42);
  const auto x_star = gen.matrix(6, 3);
  const auto y = gen.matrix(8, 3);
  const FactorPair truth(x_star, y);
  const auto obs = covered_entries(gen, 6, 8, 36, 3, [&](Index i, Index j) { return product_entry(truth, i, j); });
  const auto r = solve_x(y, obs, 0.8, 0.0);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(frobenius_distance(r.solution, x_star), 1e-9);
}

TEST(SolveY, LeastSquaresAtOneHalf) {
  oracle::Gen gen(43);
  for (int trial = 0; trial < 12; ++trial) {
    const double ridge = trial % 3 == 0 ? 0.25 : 0.0;
    const auto x = gen.matrix(6, 2);
    const ObservationSet obs = trial % 2 == 0
                                   ? covered_entries(gen, 6, 5, 20, 2, [&](Index, Index) { return gen.normal(); })
                                   : gaussian_obs(gen, 6, 5, 16, [&](const Matrix&) { return gen.normal(); });
    const auto d = oracle::densify(obs);
    const Dense expected =
        oracle::weighted_ls_y(d, oracle::to_dense(x), Eigen::VectorXd::Constant(static_cast<Eigen::Index>(obs.size()), 0.5), ridge);
    const auto r = solve_y(x, obs, 0.5, ridge);
    EXPECT_LT((oracle::to_dense(r.solution) - expected).norm(), 1e-10);
  }
}

TEST(SolveX, LeastSquaresAtOneHalf) {
  oracle::Gen gen(44);
  for (int trial = 0; trial < 8; ++trial) {
    const auto y = gen.matrix(5, 2);
    const ObservationSet obs = trial % 2 == 0
                                   ? covered_entries(gen, 6, 5, 20, 2, [&](Index, Index) { return gen.normal(); })
                                   : gaussian_obs(gen, 6, 5, 16, [&](const Matrix&) { return gen.normal(); });
    const Dense expected = oracle::weighted_ls_x(oracle::densify(obs), oracle::to_dense(y),
                                                 Eigen::VectorXd::Constant(static_cast<Eigen::Index>(obs.size()), 0.5), 0.0);
    EXPECT_LT((oracle::to_dense(solve_x(y, obs, 0.5, 0.0).solution) - expected).norm(), 1e-10);
  }
}

TEST(SolveY, MatchesReferenceQpOnSmallCompletion) {
  oracle::Gen gen(45);
  const auto x = gen.matrix(6, 2);
  const auto obs = covered_entries(gen, 6, 8, 20, 2, [&](Index, Index) { return 2.0 * gen.normal(); });
  const auto fast = solve_y(x, obs, 0.1, 0.0);
  const auto ref = reference_qp_solve(x, obs, 0.1, 0.0);
  EXPECT_LT(frobenius_distance(fast.solution, ref), 1e-6);
}

TEST(SolveY, BlockDecompositionMatchesCoupledReference) {
  oracle::Gen gen(46);
  for (int trial = 0; trial < 10; ++trial) {
    const double w = gen.uniform(0.05, 0.95);
    const auto x = gen.matrix(5, 2);
    const auto obs = covered_entries(gen, 5, 6, 18, 2, [&](Index, Index) { return gen.uniform(-3, 3); });
    const auto fast = solve_y(x, obs, w, 0.0, std::nullopt, {200, 1e-14});
    EXPECT_LT(frobenius_distance(fast.solution, reference_qp_solve(x, obs, w, 0.0)), 1e-10);
  }
}

TEST(SolveX, TransposeDuality) {
  oracle::Gen gen(47);
  for (int trial = 0; trial < 10; ++trial) {
    const double w = gen.uniform(0.05, 0.95);
    const auto y = gen.matrix(6, 2);
    const ObservationSet obs = trial % 2 == 0
                                   ? covered_entries(gen, 7, 6, 25, 2, [&](Index, Index) { return gen.normal(); })
                                   : gaussian_obs(gen, 7, 6, 18, [&](const Matrix&) { return gen.normal(); });
    const auto a = solve_x(y, obs, w, 0.1);
    const auto b = solve_y(y, obs.transposed(), w, 0.1);
    EXPECT_LT(frobenius_distance(a.solution, b.solution), 1e-9);
  }
}

TEST(SolveY, SingleObservationWithRidgeHasClosedForm) {
  oracle::Gen gen(48);
  for (double b : {2.5, -1.5}) {
    const auto x = gen.matrix(3, 2);
    const ObservationSet obs(EntryObs(3, 2, {{1, 0, b}}));
    const double w = 0.2;
    const double ridge = 0.3;
    // Y = w b g / (w |g|^2 + ridge) with g = A^T X; r keeps the sign of b.
    const double weight = b >= 0 ? w : 1 - w;
    Dense g = Dense::Zero(2, 2);
    g.row(0) = oracle::to_dense(x).row(1);
    const Dense expected = weight * b * g / (weight * g.squaredNorm() + ridge);
    EXPECT_LT((oracle::to_dense(solve_y(x, obs, w, ridge).solution) - expected).norm(), 1e-14);
    EXPECT_LT((oracle::to_dense(reference_qp_solve(x, obs, w, ridge)) - expected).norm(), 1e-14);
  }
}

TEST(ReferenceQp, SingleObservationWithoutRidgeGivesMinimumNormInterpolant) {
  oracle::Gen gen(49);
  const auto x = gen.matrix(3, 2);
  const ObservationSet obs(EntryObs(3, 2, {{2, 1, 4.0}}));
  Dense g = Dense::Zero(2, 2);
  g.row(1) = oracle::to_dense(x).row(2);
  const Dense expected = 4.0 * g / g.squaredNorm();
  EXPECT_LT((oracle::to_dense(reference_qp_solve(x, obs, 0.7, 0.0)) - expected).norm(), 1e-13);
  // The fast path has no minimum-norm rule and reports the singular design.
  EXPECT_EMF_ERROR(solve_y(x, obs, 0.7, 0.0), ErrorCode::SingularDesign);
}

TEST(ReferenceQp, LeastSquaresAtOneHalf) {
  oracle::Gen gen(50);
  const auto x = gen.matrix(4, 2);
  const auto obs = gaussian_obs(gen, 4, 3, 12, [&](const Matrix&) { return gen.normal(); });
  const Dense expected = oracle::weighted_ls_y(oracle::densify(obs), oracle::to_dense(x),
                                               Eigen::VectorXd::Constant(12, 0.5), 0.0);
  EXPECT_LT((oracle::to_dense(reference_qp_solve(x, obs, 0.5, 0.0)) - expected).norm(), 1e-10);
}

TEST(ReferenceQp, EnforcesCaps) {
  oracle::Gen gen(51);
  const auto x = gen.matrix(6, 2);
  const auto obs = covered_entries(gen, 6, 6, 21, 1, [&](Index, Index) { return 1.0; });
  EXPECT_EMF_ERROR(reference_qp_solve(x, obs, 0.5, 0.0), ErrorCode::CapExceeded);
  const auto big_x = gen.matrix(40, 30);
  const ObservationSet wide(EntryObs(40, 4000, {{0, 0, 1.0}}));  // p n k = 120000
  EXPECT_EMF_ERROR(reference_qp_solve(big_x, wide, 0.5, 0.0), ErrorCode::CapExceeded);
}

// Optimality certificate, self-consistent sign pattern and monotone inner
// descent for every converged solve.
TEST(SolveY, ConvergedResultsCarryACertificate) {
  oracle::Gen gen(52);
  for (int trial = 0; trial < 30; ++trial) {
    const double w = gen.uniform(0.02, 0.98);
    const double ridge = trial % 4 == 0 ? 0.05 : 0.0;
    const auto x = gen.matrix(8, 3);
    const ObservationSet obs = trial % 3 == 2
                                   ? gaussian_obs(gen, 8, 5, 40, [&](const Matrix&) { return 3.0 * gen.normal(); })
                                   : covered_entries(gen, 8, 10, 50, 3, [&](Index, Index) { return 3.0 * gen.normal(); });
    const std::optional<DenseMatrix> warm =
        trial % 2 == 0 ? std::optional<DenseMatrix>(gen.matrix(obs.cols(), 3)) : std::nullopt;
    const SubproblemCaps caps{100, 1e-9};
    const auto r = solve_y(x, obs, w, ridge, warm, caps);
    ASSERT_TRUE(r.converged);
    const FactorPair at(x, r.solution);
    const double grad = frobenius_norm(gradient_y(obs, at, w, ridge));
    EXPECT_LE(grad, caps.tol_gradient * (1.0 + r.initial_gradient_norm));
    EXPECT_NEAR(r.final_gradient_norm, grad, 1e-12 * (1.0 + grad));

    const auto res = residuals(obs, at);
    ASSERT_EQ(r.sign_pattern.size(), obs.size());
    Index mismatches = 0;
    for (Index i = 0; i < obs.size(); ++i) {
      // Residuals within rounding of zero may land on either side.
      if (std::abs(res(static_cast<Eigen::Index>(i))) > 1e-9 && r.sign_pattern[i] != (res(static_cast<Eigen::Index>(i)) >= 0)) {
        ++mismatches;
      }
    }
    EXPECT_EQ(mismatches, 0u);
    // No point does better than the weighted least-squares solution for the
    // returned pattern by more than rounding. Ill-conditioned columns make a
    // distance check meaningless here, so the objective is compared instead.
    const auto d = oracle::densify(obs);
    const Dense wls = oracle::weighted_ls_y(d, oracle::to_dense(x), pattern_weights(r.sign_pattern, w), ridge);
    const double f_sol = objective(obs, at, w, ridge);
    EXPECT_LE(f_sol, oracle::dense_objective(d, oracle::to_dense(x), wls, w, ridge) * (1.0 + 1e-9) + 1e-12);

    ASSERT_FALSE(r.objective_history.empty());
    for (Index t = 1; t < r.objective_history.size(); ++t) {
      EXPECT_LE(r.objective_history[t], r.objective_history[t - 1] * (1.0 + 1e-12));
    }
    if (warm) EXPECT_LE(objective(obs, at, w, ridge), objective(obs, FactorPair(x, *warm), w, ridge));
  }
}

TEST(SolveY, CoupledPathOnLargerMeasurementSets) {
  oracle::Gen gen(53);
  const auto x = gen.matrix(10, 2);
  const auto obs = gaussian_obs(gen, 10, 12, 90, [&](const Matrix&) { return gen.normal() + gen.uniform(0, 4); });
  for (double w : {0.1, 0.5, 0.9}) {
    const auto r = solve_y(x, obs, w, 0.0, std::nullopt, {100, 1e-12});
    ASSERT_TRUE(r.converged);
    const Dense wls = oracle::weighted_ls_y(oracle::densify(obs), oracle::to_dense(x), pattern_weights(r.sign_pattern, w), 0.0);
    EXPECT_LT((wls - oracle::to_dense(r.solution)).norm(), 1e-8 * (1.0 + wls.norm()));
  }
}

TEST(SolveY, UnderdeterminedColumnIsSingularWithoutRidge) {
  const DenseMatrix x(3, 2, {1, 0, 0, 1, 1, 1});
  const ObservationSet obs(EntryObs(3, 2, {{0, 0, 1}, {1, 0, 2}, {2, 1, 3}}));
  EXPECT_EMF_ERROR(solve_y(x, obs, 0.4, 0.0), ErrorCode::SingularDesign);
  const auto r = solve_y(x, obs, 0.4, 0.1);
  EXPECT_TRUE(r.converged);
}

TEST(SolveY, UnderdeterminedCoupledProblemIsSingularWithoutRidge) {
  oracle::Gen gen(54);
  const auto x = gen.matrix(4, 2);
  const auto obs = gaussian_obs(gen, 4, 5, 6, [&](const Matrix&) { return gen.normal(); });  // 6 < 5 * 2
  EXPECT_EMF_ERROR(solve_y(x, obs, 0.4, 0.0), ErrorCode::SingularDesign);
  EXPECT_NO_THROW(solve_y(x, obs, 0.4, 0.1));
}

TEST(SolveY, InnerCapReturnsResult) {
  oracle::Gen gen(55);
  const auto x = gen.matrix(8, 3);
  const auto obs = covered_entries(gen, 8, 10, 50, 3, [&](Index, Index) { return 5.0 * gen.normal(); });
  const auto r = solve_y(x, obs, 0.05, 0.0, gen.matrix(10, 3), {1, 0.0});
  EXPECT_LE(r.inner_iterations, 1u);
  EXPECT_FALSE(r.converged);
}

TEST(SolveY, ValidatesArguments) {
  const DenseMatrix x(2, 1, {1, 1});
  const ObservationSet obs(EntryObs(2, 2, {{0, 0, 1}, {1, 1, 1}}));
  EXPECT_EMF_ERROR(solve_y(DenseMatrix(3, 1), obs, 0.5, 0.0), ErrorCode::ShapeMismatch);
  EXPECT_EMF_ERROR(solve_y(x, obs, 1.0, 0.0), ErrorCode::InvalidArgument);
  EXPECT_EMF_ERROR(solve_y(x, obs, 0.5, -1.0), ErrorCode::InvalidArgument);
  EXPECT_EMF_ERROR(solve_y(x, obs, 0.5, 0.0, DenseMatrix(3, 1)), ErrorCode::ShapeMismatch);
  EXPECT_EMF_ERROR(solve_y(x, obs, 0.5, 0.0, std::nullopt, {0, 1e-8}), ErrorCode::InvalidArgument);
  EXPECT_EMF_ERROR(solve_x(DenseMatrix(3, 1), obs, 0.5, 0.0), ErrorCode::ShapeMismatch);
}

TEST(Qr, Examples) {
  const auto id = qr_orthonormalize(DenseMatrix::identity(3));
  EXPECT_EQ(frobenius_distance(id.q, DenseMatrix::identity(3)), 0.0);
  EXPECT_EQ(frobenius_distance(id.r, DenseMatrix::identity(3)), 0.0);

  const auto scaled = qr_orthonormalize(DenseMatrix(2, 2, {2, 0, 0, 3}));
  EXPECT_LT(frobenius_distance(scaled.q, DenseMatrix::identity(2)), 1e-15);
  EXPECT_LT(frobenius_distance(scaled.r, DenseMatrix(2, 2, {2, 0, 0, 3})), 1e-15);
}

TEST(Qr, RandomTallMatrices) {
  oracle::Gen gen(56);
  for (int trial = 0; trial < 30; ++trial) {
    const Index m = 3 + gen.index(20);
    const Index k = 1 + gen.index(std::min<Index>(m, 5));
    const auto a = gen.matrix(m, k, -3, 3);
    const auto [q, r] = qr_orthonormalize(a);
    const Dense qd = oracle::to_dense(q);
    const Dense rd = oracle::to_dense(r);
    EXPECT_LE((qd.transpose() * qd - Dense::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k))).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((qd * rd - oracle::to_dense(a)).norm(), 1e-12 * oracle::to_dense(a).norm());
    for (Eigen::Index i = 0; i < rd.rows(); ++i) {
      EXPECT_GE(rd(i, i), 0.0);
      for (Eigen::Index j = 0; j < i; ++j) EXPECT_EQ(rd(i, j), 0.0);
    }
  }
}

TEST(Qr, RejectsRankDeficient) {
  EXPECT_EMF_ERROR(qr_orthonormalize(DenseMatrix(3, 2, {1, 2, 2, 4, 3, 6})), ErrorCode::RankDeficient);
  EXPECT_EMF_ERROR(qr_orthonormalize(DenseMatrix(1, 2, {1, 2})), ErrorCode::RankDeficient);
}

}  // namespace
}  // namespace emf
