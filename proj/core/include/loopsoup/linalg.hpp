#pragma once

#include <complex>

#include <Eigen/Dense>

namespace loopsoup {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

/// log|det| together with the sign of the determinant (+1, -1, or 0).
struct LogDet {
  double log_abs = 0.0;
  int sign = 1;
};

LogDet log_det(const Matrix& m);

/// Complex determinant as log-modulus plus phase.
struct ComplexLogDet {
  double log_abs = 0.0;
  double phase = 0.0;
};

ComplexLogDet log_det(const CMatrix& m);

/// Matrix exponential. Symmetric input goes through a self-adjoint
/// eigendecomposition, everything else through Pade scaling-and-squaring.
Matrix expm(const Matrix& m);

/// I - exp(m), evaluated by the power series when ||m|| is small so that
/// the result keeps full relative accuracy as m -> 0.
Matrix one_minus_expm(const Matrix& m);

/// -log det(I - m) for a matrix with spectral radius below one. Uses the
/// trace series sum_k tr(m^k)/k when ||m||_1 < 1/2 (no cancellation against 1).
double neg_log_det_one_minus(const Matrix& m);

bool is_symmetric(const Matrix& m, double tol = 0.0);

double norm1(const Matrix& m);

}  // namespace loopsoup
