#pragma once

#include <span>

#include "emf/types.hpp"

namespace emf {

using ResidualVector = Vector;

/// Weight of a squared residual under the asymmetric least squares loss:
/// omega for t >= 0, 1 - omega for t < 0.
double asymmetric_weight(double t, double omega);

/// rho_omega(t) = t^2 * |omega - 1(t < 0)|.
double expectile_loss(double t, double omega);

/// Unchecked variants for inner loops; omega must already be validated.
inline double weight_of(double t, double omega) noexcept { return t < 0.0 ? 1.0 - omega : omega; }
inline double loss_of(double t, double omega) noexcept { return weight_of(t, omega) * t * t; }

/// r_i = b_i - <A_i, X Y^T>, in the observation order of `obs`.
ResidualVector residuals(const ObservationSet& obs, const FactorPair& f);

/// sum_i rho_omega(r_i) + ridge * (|X|_F^2 + |Y|_F^2). No 1/2 factor.
double objective(const ObservationSet& obs, const FactorPair& f, double omega, double ridge);

/// Partial gradients of `objective`. The loss is C^1 so both are defined
/// everywhere: grad_Y = -2 sum_i w_i r_i A_i^T X + 2 ridge Y.
DenseMatrix gradient_y(const ObservationSet& obs, const FactorPair& f, double omega, double ridge);
DenseMatrix gradient_x(const ObservationSet& obs, const FactorPair& f, double omega, double ridge);

/// The omega-expectile of a sample: the unique minimizer of
/// sum_i rho_omega(v_i - m). Solved exactly by sign-set iteration.
double scalar_expectile(std::span<const double> values, double omega);

void check_omega(double omega);

}  // namespace emf
