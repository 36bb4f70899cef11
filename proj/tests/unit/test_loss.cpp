#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emf/loss.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace emf {
namespace {

using oracle::Dense;

TEST(AsymmetricWeight, Examples) {
  EXPECT_EQ(asymmetric_weight(2.0, 0.1), 0.1);
  EXPECT_EQ(asymmetric_weight(-2.0, 0.1), 0.9);
  EXPECT_EQ(asymmetric_weight(0.0, 0.3), 0.3);
  EXPECT_EMF_ERROR(asymmetric_weight(1.0, 0.0), ErrorCode::InvalidArgument);
  EXPECT_EMF_ERROR(asymmetric_weight(1.0, 1.0), ErrorCode::InvalidArgument);
}

TEST(ExpectileLoss, Examples) {
  EXPECT_DOUBLE_EQ(expectile_loss(2.0, 0.1), 0.4);
  EXPECT_DOUBLE_EQ(expectile_loss(-2.0, 0.1), 3.6);
  for (double t : {-3.0, -0.5, 0.0, 0.25, 7.0}) EXPECT_EQ(expectile_loss(t, 0.5), 0.5 * t * t);
  EXPECT_EMF_ERROR(expectile_loss(1.0, 1.5), ErrorCode::InvalidArgument);
}

TEST(ExpectileLoss, MirrorSymmetry) {
  oracle::Gen gen(21);
  for (int i = 0; i < 1000; ++i) {
    const double t = gen.uniform(-10, 10);
    // Dyadic levels keep 1 - w exact, so the identity holds bit for bit.
    const double w = static_cast<double>(1 + gen.index(1023)) / 1024.0;
    EXPECT_EQ(expectile_loss(t, w), expectile_loss(-t, 1.0 - w));
  }
}

TEST(ExpectileLoss, Convex) {
  oracle::Gen gen(22);
  for (int i = 0; i < 2000; ++i) {
    const double a = gen.uniform(-5, 5);
    const double b = gen.uniform(-5, 5);
    const double th = gen.uniform();
    const double w = gen.uniform(0.01, 0.99);
    const double lhs = expectile_loss(th * a + (1 - th) * b, w);
    const double rhs = th * expectile_loss(a, w) + (1 - th) * expectile_loss(b, w);
    EXPECT_LE(lhs, rhs + 1e-12 * (1 + std::abs(rhs)));
  }
}

FactorPair scalar_pair(double x, double y) { return FactorPair(DenseMatrix(1, 1, {x}), DenseMatrix(1, 1, {y})); }

TEST(Residuals, Examples) {
  const ObservationSet obs(EntryObs(1, 1, {{0, 0, 5.0}}));
  EXPECT_EQ(residuals(obs, scalar_pair(1.5, 2.0))(0), 2.0);

  oracle::Gen gen(23);
  const FactorPair f(gen.matrix(4, 2), gen.matrix(5, 2));
  const auto exact = gen.entries(4, 5, 9, [&](Index i, Index j) { return product_entry(f, i, j); });
  EXPECT_LT(residuals(ObservationSet(EntryObs(4, 5, exact)), f).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Residuals, EntryAndIndicatorPathsAgree) {
  oracle::Gen gen(24);
  for (int trial = 0; trial < 30; ++trial) {
    const Index m = 1 + gen.index(6);
    const Index n = 1 + gen.index(6);
    const Index k = 1 + gen.index(3);
    const FactorPair f(gen.matrix(m, k), gen.matrix(n, k));
    const ObservationSet obs(
        EntryObs(m, n, gen.entries(m, n, 1 + gen.index(m * n), [&](Index, Index) { return gen.uniform(-3, 3); })));
    const ObservationSet general(obs.as_general());
    const Vector a = residuals(obs, f);
    const Vector b = residuals(general, f);
    const Vector c = oracle::dense_residuals(oracle::densify(obs), oracle::to_dense(f.x()), oracle::to_dense(f.y()));
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((a - c).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Residuals, RejectsDimensionMismatch) {
  const ObservationSet obs(EntryObs(2, 2, {{0, 0, 1.0}}));
  EXPECT_EMF_ERROR(residuals(obs, scalar_pair(1, 1)), ErrorCode::ShapeMismatch);
}

TEST(Objective, Examples) {
  const ObservationSet obs(EntryObs(1, 2, {{0, 0, 3.0}, {0, 1, -1.0}}));
  const FactorPair f(DenseMatrix(1, 1, {1.0}), DenseMatrix(2, 1, {1.0, 1.0}));
  // residuals [2, -2]
  EXPECT_DOUBLE_EQ(objective(obs, f, 0.1, 0.0), 4.0);
  const ObservationSet exact(EntryObs(1, 2, {{0, 0, 1.0}, {0, 1, 1.0}}));
  EXPECT_EQ(objective(exact, f, 0.3, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(objective(exact, f, 0.3, 0.5), 0.5 * 3.0);
  EXPECT_EMF_ERROR(objective(obs, f, 0.3, -1.0), ErrorCode::InvalidArgument);
}

TEST(Objective, HalfSquaredResidualsAtOneHalf) {
  oracle::Gen gen(25);
  for (int trial = 0; trial < 30; ++trial) {
    const FactorPair f(gen.matrix(5, 2), gen.matrix(4, 2));
    const ObservationSet obs(EntryObs(5, 4, gen.entries(5, 4, 12, [&](Index, Index) { return gen.normal(); })));
    EXPECT_DOUBLE_EQ(objective(obs, f, 0.5, 0.0), 0.5 * residuals(obs, f).squaredNorm());
  }
}

TEST(Objective, MatchesDenseOracle) {
  oracle::Gen gen(26);
  for (int trial = 0; trial < 30; ++trial) {
    const double w = gen.uniform(0.05, 0.95);
    const double ridge = gen.uniform(0, 1);
    const FactorPair f(gen.matrix(4, 3), gen.matrix(6, 3));
    const ObservationSet obs(EntryObs(4, 6, gen.entries(4, 6, 10, [&](Index, Index) { return gen.normal(); })));
    const double expected =
        oracle::dense_objective(oracle::densify(obs), oracle::to_dense(f.x()), oracle::to_dense(f.y()), w, ridge);
    EXPECT_NEAR(objective(obs, f, w, ridge), expected, 1e-12 * (1 + expected));
  }
}

TEST(Gradient, ZeroAtExactFit) {
  oracle::Gen gen(27);
  const FactorPair f(gen.matrix(4, 2), gen.matrix(5, 2));
  const ObservationSet obs(EntryObs(4, 5, gen.entries(4, 5, 11, [&](Index i, Index j) {
    return product_entry(f, i, j);
  })));
  EXPECT_LT(frobenius_norm(gradient_y(obs, f, 0.2, 0.0)), 1e-14);
  EXPECT_LT(frobenius_norm(gradient_x(obs, f, 0.2, 0.0)), 1e-14);
}

ObservationSet random_general(oracle::Gen& gen, Index m, Index n, Index p) {
  std::vector<SparseMatrix> a;
  Vector b(static_cast<Eigen::Index>(p));
  for (Index i = 0; i < p; ++i) {
    Matrix d = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    for (int t = 0; t < 3; ++t) {
      d(static_cast<Eigen::Index>(gen.index(m)), static_cast<Eigen::Index>(gen.index(n))) = gen.normal();
    }
    a.push_back(d.sparseView());
    b(static_cast<Eigen::Index>(i)) = gen.uniform(-2, 2);
  }
  return GeneralObs(m, n, std::move(a), std::move(b));
}

TEST(Gradient, LeastSquaresAtOneHalf) {
  oracle::Gen gen(28);
  for (int trial = 0; trial < 20; ++trial) {
    const FactorPair f(gen.matrix(4, 2), gen.matrix(3, 2));
    const ObservationSet obs = trial % 2 == 0 ? ObservationSet(EntryObs(4, 3, gen.entries(4, 3, 8, [&](Index, Index) {
                                                  return gen.normal();
                                                })))
                                              : random_general(gen, 4, 3, 7);
    // Classical least-squares gradient of sum r_i^2 / 2: -sum r_i A_i^T X.
    const auto d = oracle::densify(obs);
    const Dense x = oracle::to_dense(f.x());
    const Dense y = oracle::to_dense(f.y());
    const auto r = oracle::dense_residuals(d, x, y);
    Dense gy = Dense::Zero(3, 2);
    Dense gx = Dense::Zero(4, 2);
    for (std::size_t i = 0; i < d.a.size(); ++i) {
      gy -= r(static_cast<Eigen::Index>(i)) * d.a[i].transpose() * x;
      gx -= r(static_cast<Eigen::Index>(i)) * d.a[i] * y;
    }
    EXPECT_LT((oracle::to_dense(gradient_y(obs, f, 0.5, 0.0)) - gy).norm(), 1e-13);
    EXPECT_LT((oracle::to_dense(gradient_x(obs, f, 0.5, 0.0)) - gx).norm(), 1e-13);
  }
}

TEST(Gradient, MatchesCentralDifferences) {
  oracle::Gen gen(29);
  int accepted = 0;
  while (accepted < 40) {
    const double w = gen.uniform(0.05, 0.95);
    const double ridge = accepted % 4 == 0 ? 0.3 : 0.0;
    const FactorPair f(gen.matrix(4, 2), gen.matrix(5, 2));
    const ObservationSet obs = accepted % 2 == 0 ? ObservationSet(EntryObs(4, 5, gen.entries(4, 5, 10, [&](Index, Index) {
                                                     return gen.uniform(-2, 2);
                                                   })))
                                                 : random_general(gen, 4, 5, 8);
    if (residuals(obs, f).cwiseAbs().minCoeff() <= 1e-4) continue;
    ++accepted;
    const auto d = oracle::densify(obs);
    const Dense x = oracle::to_dense(f.x());
    const Dense y = oracle::to_dense(f.y());
    const Dense fy =
        oracle::finite_difference([&](const Dense& yy) { return oracle::dense_objective(d, x, yy, w, ridge); }, y, 1e-6);
    const Dense fx =
        oracle::finite_difference([&](const Dense& xx) { return oracle::dense_objective(d, xx, y, w, ridge); }, x, 1e-6);
    EXPECT_LE((oracle::to_dense(gradient_y(obs, f, w, ridge)) - fy).norm(), 1e-5 * fy.norm());
    EXPECT_LE((oracle::to_dense(gradient_x(obs, f, w, ridge)) - fx).norm(), 1e-5 * fx.norm());
  }
}

TEST(Gradient, TransposeSymmetry) {
  oracle::Gen gen(30);
  for (int trial = 0; trial < 20; ++trial) {
    const double w = gen.uniform(0.05, 0.95);
    const FactorPair f(gen.matrix(5, 3), gen.matrix(4, 3));
    const ObservationSet obs = trial % 2 == 0 ? ObservationSet(EntryObs(5, 4, gen.entries(5, 4, 9, [&](Index, Index) {
                                                  return gen.normal();
                                                })))
                                              : random_general(gen, 5, 4, 9);
    const FactorPair ft(f.y(), f.x());
    const auto gx = gradient_x(obs, f, w, 0.2);
    const auto gy_t = gradient_y(obs.transposed(), ft, w, 0.2);
    EXPECT_LT(frobenius_distance(gx, gy_t), 1e-13);
  }
}

double foc_residual(const std::vector<double>& v, double m, double w) {
  double up = 0.0;
  double down = 0.0;
  for (double x : v) {
    up += std::max(x - m, 0.0);
    down += std::max(m - x, 0.0);
  }
  return std::abs(w * up - (1 - w) * down);
}

TEST(ScalarExpectile, Examples) {
  const std::vector<double> zero_one{0.0, 1.0};
  for (double w : {0.1, 0.25, 0.5, 0.8}) EXPECT_EQ(scalar_expectile(zero_one, w), w);
  const std::vector<double> v{3.0, -1.0, 4.0, 1.5, 9.0};
  EXPECT_DOUBLE_EQ(scalar_expectile(v, 0.5), std::accumulate(v.begin(), v.end(), 0.0) / 5.0);
  EXPECT_EMF_ERROR(scalar_expectile(std::vector<double>{}, 0.5), ErrorCode::EmptyObservations);
  EXPECT_EMF_ERROR(scalar_expectile(std::vector<double>{1.0, std::nan("")}, 0.5), ErrorCode::NonFinite);
  EXPECT_EQ(scalar_expectile(std::vector<double>{2.5}, 0.9), 2.5);
}

TEST(ScalarExpectile, SkewedSampleLowLevelMovesTowardTheMode) {
  oracle::Gen gen(31);
  std::vector<double> v(5000);
  for (auto& x : v) x = std::pow(gen.normal(), 2) + std::pow(gen.normal(), 2) + std::pow(gen.normal(), 2);
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  const double median = oracle::percentile(v, 0.5);
  const double mode = 1.0;  // chi-square with 3 degrees of freedom
  const double e = scalar_expectile(v, 0.1);
  EXPECT_LT(e, mean);
  EXPECT_LT(e, median);
  EXPECT_LT(std::abs(e - mode), std::abs(mean - mode));
  // Bisection oracle on the first-order condition.
  double lo = *std::min_element(v.begin(), v.end());
  double hi = *std::max_element(v.begin(), v.end());
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    double up = 0.0;
    double down = 0.0;
    for (double x : v) (x > mid ? up : down) += std::abs(x - mid);
    (0.1 * up > 0.9 * down ? lo : hi) = mid;
  }
  EXPECT_NEAR(e, 0.5 * (lo + hi), 1e-10);
}

TEST(ScalarExpectile, FirstOrderConditionAndMonotonicity) {
  oracle::Gen gen(32);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(2 + gen.index(100));
    for (auto& x : v) x = trial % 3 == 0 ? std::round(gen.uniform(-3, 3)) : gen.normal() * 10.0;
    if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; })) v.push_back(v[0] + 1.0);
    const double scale = std::accumulate(v.begin(), v.end(), 0.0, [](double a, double b) { return a + std::abs(b); });
    double prev = -1e300;
    for (double w : {0.02, 0.1, 0.3, 0.5, 0.7, 0.9, 0.98}) {
      const double m = scalar_expectile(v, w);
      EXPECT_LE(foc_residual(v, m, w), 1e-10 * scale);
      EXPECT_GE(m, prev);
      prev = m;
    }
    EXPECT_LT(scalar_expectile(v, 0.1), scalar_expectile(v, 0.5));
    EXPECT_LT(scalar_expectile(v, 0.5), scalar_expectile(v, 0.9));
  }
}

}  // namespace
}  // namespace emf
