#include "emf/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace emf {

void check_omega(double omega) {
  if (!(omega > 0.0 && omega < 1.0)) throw Error(ErrorCode::InvalidArgument, "omega must lie in (0, 1)");
}

double asymmetric_weight(double t, double omega) {
  check_omega(omega);
  return weight_of(t, omega);
}

double expectile_loss(double t, double omega) {
  check_omega(omega);
  return loss_of(t, omega);
}

namespace {

void check_dims(const ObservationSet& obs, const FactorPair& f) {
  if (obs.rows() != f.rows() || obs.cols() != f.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "observation dimensions do not match the factors");
  }
}

// Calls visit(k, row, col, coeff) for every nonzero of every A_k.
template <typename Visit>
void for_each_term(const GeneralObs& g, Visit&& visit) {
  const auto& a = g.measurements();
  for (Index k = 0; k < a.size(); ++k) {
    for (Eigen::Index r = 0; r < a[k].outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(a[k], r); it; ++it) {
        visit(k, static_cast<Eigen::Index>(it.row()), static_cast<Eigen::Index>(it.col()), it.value());
      }
    }
  }
}

// Coefficients c_i = -2 w_i r_i; the loss gradient with respect to <A_i, XY^T>.
Vector loss_derivatives(const ObservationSet& obs, const FactorPair& f, double omega) {
  Vector r = residuals(obs, f);
  for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = -2.0 * weight_of(r[i], omega) * r[i];
  return r;
}

}  // namespace

ResidualVector residuals(const ObservationSet& obs, const FactorPair& f) {
  check_dims(obs, f);
  const auto& x = f.x().mat();
  const auto& y = f.y().mat();
  ResidualVector r(static_cast<Eigen::Index>(obs.size()));
  if (obs.is_entry()) {
    const auto& e = obs.entry();
    for (Index k = 0; k < e.size(); ++k) {
      const auto& en = e[k];
      r[static_cast<Eigen::Index>(k)] =
          en.value - x.row(static_cast<Eigen::Index>(en.row)).dot(y.row(static_cast<Eigen::Index>(en.col)));
    }
    return r;
  }
  const auto& g = obs.general();
  r = g.values();
  for_each_term(g, [&](Index k, Eigen::Index a, Eigen::Index b, double v) {
    r[static_cast<Eigen::Index>(k)] -= v * x.row(a).dot(y.row(b));
  });
  return r;
}

double objective(const ObservationSet& obs, const FactorPair& f, double omega, double ridge) {
  check_omega(omega);
  if (!(ridge >= 0.0)) throw Error(ErrorCode::InvalidArgument, "ridge must be >= 0");
  const ResidualVector r = residuals(obs, f);
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) total += loss_of(r[i], omega);
  if (ridge > 0.0) total += ridge * (f.x().mat().squaredNorm() + f.y().mat().squaredNorm());
  return total;
}

DenseMatrix gradient_y(const ObservationSet& obs, const FactorPair& f, double omega, double ridge) {
  check_omega(omega);
  const Vector c = loss_derivatives(obs, f, omega);
  const auto& x = f.x().mat();
  Matrix g = 2.0 * ridge * f.y().mat();
  if (obs.is_entry()) {
    const auto& e = obs.entry();
    for (Index k = 0; k < e.size(); ++k) {
      g.row(static_cast<Eigen::Index>(e[k].col)) += c[static_cast<Eigen::Index>(k)] * x.row(static_cast<Eigen::Index>(e[k].row));
    }
  } else {
    for_each_term(obs.general(), [&](Index k, Eigen::Index a, Eigen::Index b, double v) {
      g.row(b) += (c[static_cast<Eigen::Index>(k)] * v) * x.row(a);
    });
  }
  return DenseMatrix(std::move(g));
}

DenseMatrix gradient_x(const ObservationSet& obs, const FactorPair& f, double omega, double ridge) {
  check_omega(omega);
  const Vector c = loss_derivatives(obs, f, omega);
  const auto& y = f.y().mat();
  Matrix g = 2.0 * ridge * f.x().mat();
  if (obs.is_entry()) {
    const auto& e = obs.entry();
    for (Index k = 0; k < e.size(); ++k) {
      g.row(static_cast<Eigen::Index>(e[k].row)) += c[static_cast<Eigen::Index>(k)] * y.row(static_cast<Eigen::Index>(e[k].col));
    }
  } else {
    for_each_term(obs.general(), [&](Index k, Eigen::Index a, Eigen::Index b, double v) {
      g.row(a) += (c[static_cast<Eigen::Index>(k)] * v) * y.row(b);
    });
  }
  return DenseMatrix(std::move(g));
}

double scalar_expectile(std::span<const double> values, double omega) {
  check_omega(omega);
  if (values.empty()) throw Error(ErrorCode::EmptyObservations, "scalar_expectile of an empty sample");
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "sample value is not finite");
  }

  // Values at or above m carry weight omega, the rest 1 - omega. A sign
  // pattern is therefore identified by how many values lie below m.
  auto below = [&](double m) {
    return std::count_if(values.begin(), values.end(), [m](double v) { return v < m; });
  };
  auto weighted_mean = [&](double m) {
    double sw = 0.0, swv = 0.0;
    for (double v : values) {
      const double w = weight_of(v - m, omega);
      sw += w;
      swv += w * v;
    }
    return swv / sw;
  };

  double m = weighted_mean(-std::numeric_limits<double>::infinity());
  auto pattern = below(m);
  for (Index it = 0; it <= values.size() + 2; ++it) {
    const double next = weighted_mean(m);
    const auto next_pattern = below(next);
    m = next;
    if (next_pattern == pattern) return m;
    pattern = next_pattern;
  }

  // Not reached for finite samples in practice; bisection on the first-order
  // condition is the safe fallback.
  auto foc = [&](double t) {
    double s = 0.0;
    for (double v : values) s += weight_of(v - t, omega) * (v - t);
    return s;
  };
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  for (int i = 0; i < 200 && lo < hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (foc(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace emf
