#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "emf/types.hpp"

namespace emf {

using IndexPair = std::pair<Index, Index>;

/// X (m x k) and Y (n x k) with i.i.d. U[0,1) entries.
FactorPair gen_low_rank(Index m, Index n, Index k, std::uint64_t seed);

/// scale * chi-square(dof) entries, each the sum of dof squared normals.
DenseMatrix chi_square_noise(Index m, Index n, Index dof, double scale, std::uint64_t seed);

/// floor(rate * m * n) distinct (i, j) pairs, uniformly without replacement,
/// in draw order.
std::vector<IndexPair> sample_mask(Index m, Index n, double rate, std::uint64_t seed);

/// `count` distinct values from [0, population), uniformly without
/// replacement, in draw order (partial Fisher-Yates over a lazily indexed
/// range). Used by sample_mask and by the held-out splitter.
std::vector<Index> sample_without_replacement(Index population, Index count, std::uint64_t seed,
                                              std::uint64_t stream);

/// Largest p * m * n accepted by gaussian_measurements.
inline constexpr Index kMaxGaussianEntries = 50'000'000;

/// p dense m x n measurement matrices with i.i.d. standard normal entries.
/// Values are zero until paired with a matrix through apply_measurements.
ObservationSet gaussian_measurements(Index m, Index n, Index p, std::uint64_t seed);

/// The same measurement matrices with b_i = <A_i, m>.
ObservationSet apply_measurements(const ObservationSet& ensemble, const DenseMatrix& m);

/// Materializes X * Y^T.
DenseMatrix product(const FactorPair& f);

struct SyntheticInstance {
  DenseMatrix truth;
  DenseMatrix noisy;
  ObservationSet observed;
  std::vector<IndexPair> heldout;
  std::uint64_t seed = 0;
};

/// truth = X Y^T with uniform factors; noisy = truth + noise_scale * chi2(dof);
/// observed = noisy on a uniform mask of rate R; heldout = every other index
/// in row-major order.
SyntheticInstance make_completion_instance(Index m, Index n, Index k, double noise_scale, Index dof, double rate,
                                           std::uint64_t seed);

}  // namespace emf
