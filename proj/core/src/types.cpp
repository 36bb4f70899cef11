#include "emf/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace emf {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DuplicateEntry: return "DuplicateEntry";
    case ErrorCode::EmptyObservations: return "EmptyObservations";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::DegenerateInit: return "DegenerateInit";
    case ErrorCode::CapExceeded: return "CapExceeded";
    case ErrorCode::DenominatorTooSmall: return "DenominatorTooSmall";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::SentinelCollision: return "SentinelCollision";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::ToleranceObjective: return "ToleranceObjective";
    case StopReason::ToleranceGradient: return "ToleranceGradient";
    case StopReason::MaxIterations: return "MaxIterations";
  }
  return "Unknown";
}

namespace {

void require_finite(const Matrix& m) {
  if (!m.allFinite()) throw Error(ErrorCode::NonFinite, "matrix has non-finite entries");
}

void require_shape(Index rows, Index cols) {
  if (rows == 0 || cols == 0) {
    throw Error(ErrorCode::InvalidArgument, "matrix dimensions must be at least 1x1");
  }
}

}  // namespace

DenseMatrix::DenseMatrix(Index rows, Index cols) {
  require_shape(rows, cols);
  m_ = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

DenseMatrix::DenseMatrix(Index rows, Index cols, std::vector<double> data) {
  require_shape(rows, cols);
  if (data.size() != rows * cols) {
    throw Error(ErrorCode::ShapeMismatch, "data length does not equal rows*cols");
  }
  m_ = Eigen::Map<const Matrix>(data.data(), static_cast<Eigen::Index>(rows),
                                static_cast<Eigen::Index>(cols));
  require_finite(m_);
}

DenseMatrix::DenseMatrix(Matrix m) : m_(std::move(m)) {
  require_shape(static_cast<Index>(m_.rows()), static_cast<Index>(m_.cols()));
  require_finite(m_);
}

DenseMatrix DenseMatrix::identity(Index n) {
  require_shape(n, n);
  return DenseMatrix(Matrix(Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))));
}

double DenseMatrix::at(Index i, Index j) const {
  if (i >= rows() || j >= cols()) {
    std::ostringstream os;
    os << "(" << i << ", " << j << ") outside " << rows() << "x" << cols();
    throw Error(ErrorCode::IndexOutOfRange, os.str());
  }
  return (*this)(i, j);
}

double frobenius_distance(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "frobenius_distance needs equal shapes");
  }
  return (a.mat() - b.mat()).norm();
}

double frobenius_norm(const DenseMatrix& a) { return a.mat().norm(); }

FactorPair::FactorPair(DenseMatrix x, DenseMatrix y) : x_(std::move(x)), y_(std::move(y)) {
  if (x_.cols() != y_.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "X and Y must have the same number of columns");
  }
}

double product_entry(const FactorPair& f, Index i, Index j) {
  if (i >= f.rows() || j >= f.cols()) {
    std::ostringstream os;
    os << "(" << i << ", " << j << ") outside " << f.rows() << "x" << f.cols();
    throw Error(ErrorCode::IndexOutOfRange, os.str());
  }
  const auto ii = static_cast<Eigen::Index>(i);
  const auto jj = static_cast<Eigen::Index>(j);
  return f.x().mat().row(ii).dot(f.y().mat().row(jj));
}

// EntryObs

EntryObs::EntryObs(Index rows, Index cols, std::vector<Entry> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  require_shape(rows, cols);
  if (entries_.empty()) throw Error(ErrorCode::EmptyObservations, "no observed entries");
  for (const auto& e : entries_) {
    if (e.row >= rows || e.col >= cols) {
      std::ostringstream os;
      os << "entry (" << e.row << ", " << e.col << ") outside " << rows << "x" << cols;
      throw Error(ErrorCode::IndexOutOfRange, os.str());
    }
    if (!std::isfinite(e.value)) throw Error(ErrorCode::NonFinite, "observed value is not finite");
  }
  std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (Index k = 1; k < entries_.size(); ++k) {
    if (entries_[k].row == entries_[k - 1].row && entries_[k].col == entries_[k - 1].col) {
      std::ostringstream os;
      os << "duplicate entry (" << entries_[k].row << ", " << entries_[k].col << ")";
      throw Error(ErrorCode::DuplicateEntry, os.str());
    }
  }

  const Index p = entries_.size();
  row_ids_.resize(p);
  std::iota(row_ids_.begin(), row_ids_.end(), Index{0});
  row_ptr_.assign(rows + 1, 0);
  col_ptr_.assign(cols + 1, 0);
  for (const auto& e : entries_) {
    ++row_ptr_[e.row + 1];
    ++col_ptr_[e.col + 1];
  }
  std::partial_sum(row_ptr_.begin(), row_ptr_.end(), row_ptr_.begin());
  std::partial_sum(col_ptr_.begin(), col_ptr_.end(), col_ptr_.begin());

  // Counting sort by column; stable, so rows stay ascending within a column.
  col_ids_.resize(p);
  std::vector<Index> cursor(col_ptr_.begin(), col_ptr_.end() - 1);
  for (Index k = 0; k < p; ++k) col_ids_[cursor[entries_[k].col]++] = k;
}

std::span<const Index> EntryObs::row_group(Index i) const {
  return std::span<const Index>(row_ids_).subspan(row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]);
}

std::span<const Index> EntryObs::col_group(Index j) const {
  return std::span<const Index>(col_ids_).subspan(col_ptr_[j], col_ptr_[j + 1] - col_ptr_[j]);
}

EntryObs EntryObs::transposed() const {
  std::vector<Entry> t;
  t.reserve(entries_.size());
  for (const auto& e : entries_) t.push_back({e.col, e.row, e.value});
  return EntryObs(cols_, rows_, std::move(t));
}

// GeneralObs

GeneralObs::GeneralObs(Index rows, Index cols, std::vector<SparseMatrix> measurements, Vector values)
    : rows_(rows), cols_(cols), measurements_(std::move(measurements)), values_(std::move(values)) {
  require_shape(rows, cols);
  if (measurements_.empty()) throw Error(ErrorCode::EmptyObservations, "no measurements");
  if (static_cast<Index>(values_.size()) != measurements_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "measurements and values differ in length");
  }
  if (!values_.allFinite()) throw Error(ErrorCode::NonFinite, "measurement value is not finite");
  for (auto& a : measurements_) {
    if (static_cast<Index>(a.rows()) != rows || static_cast<Index>(a.cols()) != cols) {
      throw Error(ErrorCode::ShapeMismatch, "measurement matrix has wrong shape");
    }
    a.makeCompressed();
    for (Eigen::Index k = 0; k < a.nonZeros(); ++k) {
      if (!std::isfinite(a.valuePtr()[k])) {
        throw Error(ErrorCode::NonFinite, "measurement matrix has non-finite entries");
      }
    }
  }
}

GeneralObs GeneralObs::transposed() const {
  std::vector<SparseMatrix> t;
  t.reserve(measurements_.size());
  for (const auto& a : measurements_) t.emplace_back(a.transpose());
  return GeneralObs(cols_, rows_, std::move(t), values_);
}

GeneralObs GeneralObs::with_values(Vector values) const {
  return GeneralObs(rows_, cols_, measurements_, std::move(values));
}

// ObservationSet

Index ObservationSet::rows() const {
  return std::visit([](const auto& o) { return o.rows(); }, obs_);
}

Index ObservationSet::cols() const {
  return std::visit([](const auto& o) { return o.cols(); }, obs_);
}

Index ObservationSet::size() const {
  return std::visit([](const auto& o) { return o.size(); }, obs_);
}

double ObservationSet::value(Index k) const {
  if (is_entry()) return entry()[k].value;
  return general().values()[static_cast<Eigen::Index>(k)];
}

Vector ObservationSet::values() const {
  if (!is_entry()) return general().values();
  const auto& e = entry();
  Vector v(static_cast<Eigen::Index>(e.size()));
  for (Index k = 0; k < e.size(); ++k) v[static_cast<Eigen::Index>(k)] = e[k].value;
  return v;
}

ObservationSet ObservationSet::transposed() const {
  if (is_entry()) return ObservationSet(entry().transposed());
  return ObservationSet(general().transposed());
}

ObservationSet ObservationSet::negated() const {
  if (!is_entry()) return ObservationSet(general().with_values(-general().values()));
  const auto& e = entry();
  std::vector<Entry> out(e.entries().begin(), e.entries().end());
  for (auto& x : out) x.value = -x.value;
  return ObservationSet(EntryObs(e.rows(), e.cols(), std::move(out)));
}

GeneralObs ObservationSet::as_general() const {
  if (!is_entry()) return general();
  const auto& e = entry();
  std::vector<SparseMatrix> a;
  a.reserve(e.size());
  for (const auto& x : e.entries()) {
    SparseMatrix s(static_cast<Eigen::Index>(e.rows()), static_cast<Eigen::Index>(e.cols()));
    s.insert(static_cast<Eigen::Index>(x.row), static_cast<Eigen::Index>(x.col)) = 1.0;
    a.push_back(std::move(s));
  }
  return GeneralObs(e.rows(), e.cols(), std::move(a), values());
}

void EmfConfig::validate() const {
  auto fail = [](const char* what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (!(omega > 0.0 && omega < 1.0)) fail("omega must lie in (0, 1)");
  if (rank < 1) fail("rank must be at least 1");
  if (!(tol_objective >= 0.0)) fail("tol_objective must be >= 0");
  if (!(tol_gradient >= 0.0)) fail("tol_gradient must be >= 0");
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) fail("ridge must be finite and >= 0");
  if (max_inner < 1) fail("max_inner must be at least 1");
  if (!(eval_denominator_floor > 0.0)) fail("eval_denominator_floor must be > 0");
  // QR rescales the factors, which changes the ridge term.
  if (use_qr && ridge > 0.0) fail("use_qr requires ridge == 0");
}

}  // namespace emf
