#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "emf/error.hpp"

namespace emf {

using Index = std::size_t;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Row-major real matrix with at least one row and one column and only
/// finite entries. Validated once at construction; read-only afterwards.
class DenseMatrix {
 public:
  DenseMatrix(Index rows, Index cols);
  DenseMatrix(Index rows, Index cols, std::vector<double> data);
  explicit DenseMatrix(Matrix m);

  static DenseMatrix zeros(Index rows, Index cols) { return DenseMatrix(rows, cols); }
  static DenseMatrix identity(Index n);

  Index rows() const noexcept { return static_cast<Index>(m_.rows()); }
  Index cols() const noexcept { return static_cast<Index>(m_.cols()); }
  Index size() const noexcept { return rows() * cols(); }

  double operator()(Index i, Index j) const { return m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); }
  double at(Index i, Index j) const;

  std::span<const double> data() const { return {m_.data(), size()}; }
  const Matrix& mat() const noexcept { return m_; }

  DenseMatrix transposed() const { return DenseMatrix(Matrix(m_.transpose())); }

  bool operator==(const DenseMatrix& other) const {
    return m_.rows() == other.m_.rows() && m_.cols() == other.m_.cols() && m_ == other.m_;
  }

 private:
  Matrix m_;
};

/// Frobenius norm of a − b. Throws ShapeMismatch on unequal shapes.
double frobenius_distance(const DenseMatrix& a, const DenseMatrix& b);
double frobenius_norm(const DenseMatrix& a);

/// Low-rank factors with M = X·Yᵀ, X m×k and Y n×k.
class FactorPair {
 public:
  FactorPair(DenseMatrix x, DenseMatrix y);

  const DenseMatrix& x() const noexcept { return x_; }
  const DenseMatrix& y() const noexcept { return y_; }
  Index rows() const noexcept { return x_.rows(); }
  Index cols() const noexcept { return y_.rows(); }
  Index rank() const noexcept { return x_.cols(); }

 private:
  DenseMatrix x_;
  DenseMatrix y_;
};

/// Entry (i, j) of X·Yᵀ without materializing the product.
double product_entry(const FactorPair& f, Index i, Index j);

struct Entry {
  Index row = 0;
  Index col = 0;
  double value = 0.0;
};

/// Observed matrix entries (the completion case). Entries are stored sorted
/// by (row, col); that stored order defines the observation index used by
/// residual vectors and sign patterns. A column-grouped index is built once
/// at construction.
class EntryObs {
 public:
  EntryObs(Index rows, Index cols, std::vector<Entry> entries);

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index size() const noexcept { return entries_.size(); }
  std::span<const Entry> entries() const { return entries_; }
  const Entry& operator[](Index k) const { return entries_[k]; }

  /// Observation indices of row i, contiguous in stored order.
  std::span<const Index> row_group(Index i) const;
  /// Observation indices of column j, ascending by row.
  std::span<const Index> col_group(Index j) const;

  EntryObs transposed() const;

 private:
  Index rows_;
  Index cols_;
  std::vector<Entry> entries_;
  std::vector<Index> row_ids_;
  std::vector<Index> row_ptr_;
  std::vector<Index> col_ids_;
  std::vector<Index> col_ptr_;
};

/// General linear measurements bᵢ = ⟨Aᵢ, M⟩ with sparse m×n matrices Aᵢ.
class GeneralObs {
 public:
  GeneralObs(Index rows, Index cols, std::vector<SparseMatrix> measurements, Vector values);

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index size() const noexcept { return measurements_.size(); }
  const std::vector<SparseMatrix>& measurements() const noexcept { return measurements_; }
  const Vector& values() const noexcept { return values_; }

  GeneralObs transposed() const;
  GeneralObs with_values(Vector values) const;

 private:
  Index rows_;
  Index cols_;
  std::vector<SparseMatrix> measurements_;
  Vector values_;
};

class ObservationSet {
 public:
  ObservationSet(EntryObs obs) : obs_(std::move(obs)) {}     // NOLINT(google-explicit-constructor)
  ObservationSet(GeneralObs obs) : obs_(std::move(obs)) {}   // NOLINT(google-explicit-constructor)

  Index rows() const;
  Index cols() const;
  /// Number of observations p.
  Index size() const;
  double value(Index k) const;
  Vector values() const;

  bool is_entry() const noexcept { return std::holds_alternative<EntryObs>(obs_); }
  const EntryObs& entry() const { return std::get<EntryObs>(obs_); }
  const GeneralObs& general() const { return std::get<GeneralObs>(obs_); }

  /// Observations of Mᵀ: (i, j) → (j, i), Aᵢ → Aᵢᵀ.
  ObservationSet transposed() const;
  /// Same measurement pattern with every value replaced by its negation.
  ObservationSet negated() const;

  /// The single-entry-indicator encoding of an EntryObs as GeneralObs.
  GeneralObs as_general() const;

 private:
  std::variant<EntryObs, GeneralObs> obs_;
};

struct EmfConfig {
  double omega = 0.5;
  Index rank = 1;
  Index max_outer = 100;
  double tol_objective = 1e-10;
  double tol_gradient = 1e-8;
  double ridge = 0.0;
  bool use_qr = false;
  std::uint64_t seed = 0;
  Index max_inner = 100;
  double eval_denominator_floor = 1e-12;
  /// Scale the initial spectrum by mn/p; off by default, so S is used as is.
  bool scale_init = false;

  /// Throws InvalidArgument naming the first violated constraint.
  void validate() const;
};

enum class StopReason { ToleranceObjective, ToleranceGradient, MaxIterations };

std::string_view to_string(StopReason reason);

struct SolveReport {
  FactorPair factors;
  std::vector<double> objective_trace;
  std::vector<Index> inner_iters;
  bool converged = false;
  StopReason stop_reason = StopReason::MaxIterations;
  double wall_seconds = 0.0;
};

}  // namespace emf
