#include "emf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "emf/emf.hpp"
#include "emf/io.hpp"

namespace emf {

BinSpec::BinSpec(std::vector<double> boundaries) : boundaries_(std::move(boundaries)) {
  if (boundaries_.size() < 2) throw Error(ErrorCode::InvalidArgument, "a bin spec needs at least two boundaries");
  for (Index i = 0; i < boundaries_.size(); ++i) {
    if (!std::isfinite(boundaries_[i])) throw Error(ErrorCode::NonFinite, "bin boundary is not finite");
    if (i > 0 && !(boundaries_[i] > boundaries_[i - 1])) {
      throw Error(ErrorCode::InvalidArgument, "bin boundaries must be strictly increasing");
    }
  }
}

std::optional<Index> BinSpec::locate(double v) const {
  if (v < boundaries_.front() || v >= boundaries_.back()) return std::nullopt;
  const auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), v);
  return static_cast<Index>(it - boundaries_.begin()) - 1;
}

std::string BinSpec::label(Index bin) const {
  return "[" + format_double(boundaries_[bin]) + "," + format_double(boundaries_[bin + 1]) + ")";
}

double quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorCode::EmptyObservations, "quantile of an empty sample");
  const double h = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<Index>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

std::vector<double> relative_errors(const DenseMatrix& truth, const FactorPair& estimate,
                                    std::span<const IndexPair> eval_set, double floor) {
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "truth and estimate shapes differ");
  }
  std::vector<double> out;
  out.reserve(eval_set.size());
  for (const auto& [i, j] : eval_set) {
    const double t = truth.at(i, j);
    if (std::abs(t) < floor) {
      std::ostringstream os;
      os << "truth at (" << i << ", " << j << ") is " << t << ", below the floor " << floor;
      throw Error(ErrorCode::DenominatorTooSmall, os.str());
    }
    out.push_back(std::abs(t - predict(estimate, i, j)) / t);
  }
  return out;
}

std::vector<double> empirical_cdf(std::span<const double> values, std::span<const double> grid) {
  if (values.empty()) throw Error(ErrorCode::EmptyObservations, "CDF of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(grid.size());
  const auto n = static_cast<double>(sorted.size());
  for (double g : grid) {
    const auto count = std::upper_bound(sorted.begin(), sorted.end(), g) - sorted.begin();
    out.push_back(static_cast<double>(count) / n);
  }
  return out;
}

ErrorSummary summarize(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyObservations, "summary of an empty sample");
  ErrorSummary s;
  s.values.assign(values.begin(), values.end());
  std::sort(s.values.begin(), s.values.end());
  s.count = s.values.size();
  s.median = quantile(s.values, 0.5);
  s.q1 = quantile(s.values, 0.25);
  s.q3 = quantile(s.values, 0.75);
  s.iqr = s.q3 - s.q1;
  return s;
}

std::vector<BinnedSummary> binned_summaries(const DenseMatrix& truth, const FactorPair& estimate,
                                            std::span<const IndexPair> eval_set, const BinSpec& bins,
                                            double floor) {
  const auto re = relative_errors(truth, estimate, eval_set, floor);
  std::vector<std::vector<double>> groups(bins.bin_count() + 1);
  for (Index k = 0; k < eval_set.size(); ++k) {
    const auto [i, j] = eval_set[k];
    const auto bin = bins.locate(truth(i, j));
    groups[bin.value_or(bins.bin_count())].push_back(re[k]);
  }
  std::vector<BinnedSummary> out;
  out.reserve(groups.size());
  for (Index b = 0; b < groups.size(); ++b) {
    BinnedSummary s;
    s.label = b < bins.bin_count() ? bins.label(b) : "overflow";
    s.count = groups[b].size();
    if (!groups[b].empty()) s.summary = summarize(groups[b]);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<double> linear_grid(double lo, double hi, Index points) {
  if (points < 2 || !(hi > lo)) throw Error(ErrorCode::InvalidArgument, "grid needs hi > lo and >= 2 points");
  std::vector<double> g(points);
  for (Index i = 0; i < points; ++i) {
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return g;
}

}  // namespace emf
