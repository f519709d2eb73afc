#pragma once

#include <Eigen/Dense>
#include <complex>

#include "gridplan/errors.hpp"

namespace gridplan {

using cplx = std::complex<double>;

// Per-phase complex quantity, phases (a, b, c), per-unit.
using Complex3 = Eigen::Vector3cd;

// 3x3 complex phase-coupling matrix (admittance, impedance, flow, voltage).
using Matrix3C = Eigen::Matrix3cd;

// alpha = e^{-i 2pi/3}
inline cplx phase_rotation() { return std::polar(1.0, -2.0 * M_PI / 3.0); }

// alpha_+ = [1, alpha, alpha^2]: the balanced positive-sequence phasor.
Complex3 alpha_plus();

// gamma: rank-1 constant phase matrix with gamma(p,q) = alpha^(p-q).
// Identical to alpha_+ alpha_+^H.
Matrix3C gamma_matrix();

// v_c * A with A = alpha_+ alpha_+^H. Hermitian, rank 1, diagonal = v_c.
// Throws NegativeVoltageSquare for v_c < 0.
Matrix3C balanced_outer(double v_c);

// true iff sigma_min(y) > tol * sigma_max(y).
bool is_invertible(const Matrix3C& y, double tol = 1e-9);

bool is_hermitian(const Matrix3C& m, double tol = 1e-12);

bool all_finite(const Matrix3C& m);
bool all_finite(const Complex3& v);

}  // namespace gridplan
