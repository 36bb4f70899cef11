#pragma once

#include <cstdint>
#include <vector>

#include "emf/types.hpp"

namespace emf {

/// Top-k singular triple of S = sum_i b_i A_i.
struct InitTriple {
  DenseMatrix x0;         // m x k, orthonormal columns
  std::vector<double> d0;  // k singular values, non-increasing
  DenseMatrix y0;         // n x k, orthonormal columns
};

/// Randomized subspace iteration on S, refined until every retained pair
/// satisfies |S v - sigma u| <= 1e-12 sigma_1 (or 1000 sweeps pass), with
/// the triple read off a small dense SVD of the projected matrix. Falls back to a dense SVD when min(m, n) is no larger than the
/// subspace block. Each left singular vector is signed so that its largest
/// magnitude entry is positive, which makes the triple a deterministic
/// function of S and the seed.
///
/// Throws InvalidArgument if k > min(m, n) and DegenerateInit if S == 0.
InitTriple svd_init(const ObservationSet& obs, Index k, std::uint64_t seed);

/// Alternating minimization: SVD initialization followed by up to
/// `config.max_outer` rounds of {Y step, optional QR, X step, optional QR}.
/// The returned factors are (X^(t+1/2), Y^(t+1)) of the last accepted round.
SolveReport fit(const ObservationSet& obs, const EmfConfig& config);

/// Estimated entry (i, j); the omega-th conditional expectile of the
/// observation at that position.
double predict(const FactorPair& f, Index i, Index j);

/// Largest m * n that reconstruct() will materialize.
inline constexpr Index kMaxReconstructEntries = 100'000'000;

DenseMatrix reconstruct(const FactorPair& f);

}  // namespace emf
