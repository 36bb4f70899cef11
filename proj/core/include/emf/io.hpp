#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emf/metrics.hpp"
#include "emf/types.hpp"

namespace emf {

enum class MatrixFormat { DenseText, TripletText };

struct MatrixFileSpec {
  MatrixFormat format = MatrixFormat::DenseText;
  /// Marks a missing entry in DenseText files.
  double missing_sentinel = -1.0;
};

struct DenseFile {
  /// Values as read, with holes still holding the sentinel.
  DenseMatrix matrix;
  /// Every non-sentinel entry.
  ObservationSet observed;
};

/// Whitespace-separated reals, one matrix row per line. Blank lines are
/// ignored. Throws ParseError (with line and column), RaggedRows, EmptyFile,
/// EmptyObservations when every entry is missing, and SentinelCollision
/// when the sentinel lies inside [min, max] of the observed values.
DenseFile load_dense(const std::filesystem::path& path, const MatrixFileSpec& spec = {});
void write_dense(const std::filesystem::path& path, const DenseMatrix& m);
/// A DenseText file with no missing entries (e.g. saved factors).
DenseMatrix load_matrix(const std::filesystem::path& path);

/// Header "m n", then one "i j value" line per entry (0-based).
ObservationSet load_triplets(const std::filesystem::path& path);
void write_triplets(const std::filesystem::path& path, const EntryObs& obs);

/// Every whitespace-separated real in the file, in reading order, dropping
/// tokens equal to `skip` when given.
std::vector<double> load_values(const std::filesystem::path& path, std::optional<double> skip = std::nullopt);

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);
double parse_double(std::string_view token);

struct CdfTable {
  std::vector<double> grid;
  std::vector<double> fraction;
};

/// One fitted (or pooled) cell of an experiment.
struct RunResult {
  std::string run_id;
  double omega = 0.5;
  Index rank = 1;
  double sampling_rate = 0.0;
  /// Absent for rows pooled over several seeds.
  std::optional<std::uint64_t> seed;
  /// Absent for pooled rows.
  std::optional<SolveReport> report;
  std::vector<BinnedSummary> summaries;
  CdfTable cdf;
};

enum class ExportFormat { CSV, JSON };

inline constexpr const char* kResultsHeader = "run_id,omega,rank,sampling_rate,seed,metric,bin,value";

/// CSV: one row per scalar under kResultsHeader. Solver rows are
/// objective_final, outer_iterations, converged, stop_reason_code and one
/// objective_trace row per iteration (bin = iteration index). Each summary
/// bin contributes count and, when non-empty, min, q1, median, q3, max, iqr.
/// JSON holds the same rows as objects plus each run's CDF table.
void export_results(std::span<const RunResult> runs, const std::filesystem::path& path, ExportFormat format);

/// Two-column "grid,fraction" CSV; header only when the table is empty.
void export_cdf(const CdfTable& cdf, const std::filesystem::path& path);

/// Parses a results CSV back into its rows (for checks and tooling).
struct ResultRow {
  std::string run_id;
  std::string omega;
  std::string rank;
  std::string sampling_rate;
  std::string seed;
  std::string metric;
  std::string bin;
  double value = 0.0;
};
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

}  // namespace emf
