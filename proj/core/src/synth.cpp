#include "emf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "emf/random.hpp"

namespace emf {

namespace {

void check_dims(Index m, Index n) {
  if (m == 0 || n == 0) throw Error(ErrorCode::InvalidArgument, "matrix dimensions must be positive");
}

Matrix uniform_matrix(Index rows, Index cols, Pcg32& rng) {
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.uniform();
  return out;
}

}  // namespace

FactorPair gen_low_rank(Index m, Index n, Index k, std::uint64_t seed) {
  check_dims(m, n);
  if (k < 1 || k > std::min(m, n)) throw Error(ErrorCode::InvalidArgument, "rank must lie in [1, min(m, n)]");
  Pcg32 rng(seed, streams::kFactors);
  Matrix x = uniform_matrix(m, k, rng);
  Matrix y = uniform_matrix(n, k, rng);
  return {DenseMatrix(std::move(x)), DenseMatrix(std::move(y))};
}

DenseMatrix chi_square_noise(Index m, Index n, Index dof, double scale, std::uint64_t seed) {
  check_dims(m, n);
  if (dof < 1) throw Error(ErrorCode::InvalidArgument, "dof must be at least 1");
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw Error(ErrorCode::InvalidArgument, "scale must be >= 0");
  Pcg32 rng(seed, streams::kNoise);
  Matrix out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (Index d = 0; d < dof; ++d) {
      const double z = rng.normal();
      s += z * z;
    }
    out.data()[i] = scale * s;
  }
  return DenseMatrix(std::move(out));
}

std::vector<Index> sample_without_replacement(Index population, Index count, std::uint64_t seed,
                                              std::uint64_t stream) {
  if (count > population) throw Error(ErrorCode::InvalidArgument, "sample larger than population");
  Pcg32 rng(seed, stream);
  std::vector<Index> out;
  out.reserve(count);
  // Position i of the virtual array holds i until a swap displaces it.
  std::unordered_map<Index, Index> displaced;
  displaced.reserve(2 * count);
  auto at = [&](Index i) {
    auto it = displaced.find(i);
    return it == displaced.end() ? i : it->second;
  };
  for (Index t = 0; t < count; ++t) {
    const Index j = t + static_cast<Index>(rng.bounded(population - t));
    const Index vt = at(t);
    const Index vj = at(j);
    displaced[j] = vt;
    displaced.erase(t);
    out.push_back(vj);
  }
  return out;
}

std::vector<IndexPair> sample_mask(Index m, Index n, double rate, std::uint64_t seed) {
  check_dims(m, n);
  if (!(rate > 0.0 && rate <= 1.0)) throw Error(ErrorCode::InvalidArgument, "sampling rate must lie in (0, 1]");
  const Index total = m * n;
  const auto count = static_cast<Index>(std::floor(rate * static_cast<double>(total)));
  const auto linear = sample_without_replacement(total, count, seed, streams::kMask);
  std::vector<IndexPair> out;
  out.reserve(count);
  for (Index l : linear) out.emplace_back(l / n, l % n);
  return out;
}

ObservationSet gaussian_measurements(Index m, Index n, Index p, std::uint64_t seed) {
  check_dims(m, n);
  if (p < 1) throw Error(ErrorCode::InvalidArgument, "need at least one measurement");
  if (p * m * n > kMaxGaussianEntries) {
    throw Error(ErrorCode::CapExceeded, "gaussian ensemble exceeds kMaxGaussianEntries");
  }
  Pcg32 rng(seed, streams::kMeasurements);
  std::vector<SparseMatrix> a;
  a.reserve(p);
  for (Index i = 0; i < p; ++i) {
    Matrix dense(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    for (Eigen::Index t = 0; t < dense.size(); ++t) dense.data()[t] = rng.normal();
    a.emplace_back(dense.sparseView());
  }
  return ObservationSet(GeneralObs(m, n, std::move(a), Vector::Zero(static_cast<Eigen::Index>(p))));
}

ObservationSet apply_measurements(const ObservationSet& ensemble, const DenseMatrix& m) {
  const auto& g = ensemble.is_entry() ? ensemble.as_general() : ensemble.general();
  if (g.rows() != m.rows() || g.cols() != m.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "measurement shape does not match the matrix");
  }
  Vector b(static_cast<Eigen::Index>(g.size()));
  for (Index i = 0; i < g.size(); ++i) {
    double s = 0.0;
    const auto& a = g.measurements()[i];
    for (Eigen::Index r = 0; r < a.outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(a, r); it; ++it) s += it.value() * m.mat()(it.row(), it.col());
    }
    b[static_cast<Eigen::Index>(i)] = s;
  }
  return ObservationSet(g.with_values(std::move(b)));
}

DenseMatrix product(const FactorPair& f) { return DenseMatrix(Matrix(f.x().mat() * f.y().mat().transpose())); }

SyntheticInstance make_completion_instance(Index m, Index n, Index k, double noise_scale, Index dof, double rate,
                                           std::uint64_t seed) {
  const FactorPair factors = gen_low_rank(m, n, k, seed);
  DenseMatrix truth = product(factors);
  const DenseMatrix noise = chi_square_noise(m, n, dof, noise_scale, seed);
  DenseMatrix noisy(Matrix(truth.mat() + noise.mat()));

  const auto mask = sample_mask(m, n, rate, seed);
  std::vector<char> seen(m * n, 0);
  std::vector<Entry> entries;
  entries.reserve(mask.size());
  for (const auto& [i, j] : mask) {
    seen[i * n + j] = 1;
    entries.push_back({i, j, noisy(i, j)});
  }
  std::vector<IndexPair> heldout;
  heldout.reserve(m * n - mask.size());
  for (Index l = 0; l < m * n; ++l) {
    if (!seen[l]) heldout.emplace_back(l / n, l % n);
  }
  return SyntheticInstance{std::move(truth), std::move(noisy), ObservationSet(EntryObs(m, n, std::move(entries))),
                           std::move(heldout), seed};
}

}  // namespace emf
