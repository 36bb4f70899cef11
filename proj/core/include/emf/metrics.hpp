#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emf/synth.hpp"
#include "emf/types.hpp"

namespace emf {

/// Order statistics of a batch of relative errors. Quantiles use linear
/// interpolation between closest ranks: with sorted values v[0..N-1] the
/// q-quantile is v[floor(h)] + (h - floor(h)) (v[floor(h)+1] - v[floor(h)]),
/// h = (N - 1) q.
struct ErrorSummary {
  std::vector<double> values;  // sorted ascending
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  Index count = 0;

  double min() const { return values.front(); }
  double max() const { return values.back(); }
};

/// Half-open bins [b0, b1), [b1, b2), ...
class BinSpec {
 public:
  explicit BinSpec(std::vector<double> boundaries);

  const std::vector<double>& boundaries() const noexcept { return boundaries_; }
  Index bin_count() const noexcept { return boundaries_.size() - 1; }
  /// Bin holding v, or nullopt when v lies outside [b0, b_last).
  std::optional<Index> locate(double v) const;
  std::string label(Index bin) const;

 private:
  std::vector<double> boundaries_;
};

double quantile(std::span<const double> sorted, double q);

/// |truth(i,j) - estimate(i,j)| / truth(i,j) per entry of eval_set, in order.
/// Throws DenominatorTooSmall if |truth(i,j)| < floor.
std::vector<double> relative_errors(const DenseMatrix& truth, const FactorPair& estimate,
                                    std::span<const IndexPair> eval_set, double floor);

/// Fraction of values <= g for each grid point g.
std::vector<double> empirical_cdf(std::span<const double> values, std::span<const double> grid);

ErrorSummary summarize(std::span<const double> values);

struct BinnedSummary {
  std::string label;     // "[lo,hi)" or "overflow"
  Index count = 0;
  std::optional<ErrorSummary> summary;  // empty when the bin holds no entries
};

/// Relative errors partitioned by the truth value into `bins`; entries whose
/// truth falls outside every bin go to a trailing "overflow" bucket, which is
/// always present.
std::vector<BinnedSummary> binned_summaries(const DenseMatrix& truth, const FactorPair& estimate,
                                            std::span<const IndexPair> eval_set, const BinSpec& bins,
                                            double floor);

/// Evenly spaced grid from lo to hi inclusive.
std::vector<double> linear_grid(double lo, double hi, Index points);

}  // namespace emf
