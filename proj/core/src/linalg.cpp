#include "loopsoup/linalg.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "loopsoup/rng.hpp"

namespace loopsoup {

LogDet log_det(const Matrix& m) {
  LogDet out;
  if (m.rows() == 0) return out;
  Eigen::PartialPivLU<Matrix> lu(m);
  const Matrix& packed = lu.matrixLU();
  int sign = static_cast<int>(lu.permutationP().determinant());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    const double pivot = packed(i, i);
    if (pivot == 0.0) return {-std::numeric_limits<double>::infinity(), 0};
    if (pivot < 0.0) sign = -sign;
    acc += std::log(std::abs(pivot));
  }
  out.log_abs = acc;
  out.sign = sign;
  return out;
}

ComplexLogDet log_det(const CMatrix& m) {
  ComplexLogDet out;
  if (m.rows() == 0) return out;
  Eigen::PartialPivLU<CMatrix> lu(m);
  const CMatrix& packed = lu.matrixLU();
  double phase = lu.permutationP().determinant() < 0 ? M_PI : 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    const Complex pivot = packed(i, i);
    if (pivot == Complex(0.0, 0.0)) return {-std::numeric_limits<double>::infinity(), 0.0};
    acc += std::log(std::abs(pivot));
    phase += std::arg(pivot);
  }
  out.log_abs = acc;
  out.phase = std::remainder(phase, 2.0 * M_PI);
  return out;
}

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j)
      if (std::abs(m(i, j) - m(j, i)) > tol) return false;
  return true;
}

double norm1(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().colwise().sum().maxCoeff();
}

Matrix expm(const Matrix& m) {
  if (m.rows() == 0) return m;
  if (m.rows() == 1) return Matrix::Constant(1, 1, std::exp(m(0, 0)));
  if (is_symmetric(m)) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
    const Matrix& v = eig.eigenvectors();
    return v * eig.eigenvalues().array().exp().matrix().asDiagonal() * v.transpose();
  }
  Matrix out = m.exp();
  return out;
}

Matrix one_minus_expm(const Matrix& m) {
  const Eigen::Index n = m.rows();
  if (norm1(m) >= 0.5) return Matrix::Identity(n, n) - expm(m);
  // -(m + m^2/2! + ...), truncated once a term drops below machine precision.
  Matrix term = m;
  Matrix sum = m;
  for (int k = 2; k < 40; ++k) {
    term = term * m / static_cast<double>(k);
    sum += term;
    if (norm1(term) <= 1e-18 * norm1(sum)) break;
  }
  return -sum;
}

double neg_log_det_one_minus(const Matrix& m) {
  const Eigen::Index n = m.rows();
  if (n == 0) return 0.0;
  if (norm1(m) < 0.5) {
    Matrix power = m;
    double sum = power.trace();
    for (int k = 2; k < 200; ++k) {
      power = power * m;
      const double term = power.trace() / k;
      sum += term;
      if (std::abs(term) <= 1e-18 * std::abs(sum) || norm1(power) < 1e-300) break;
    }
    return sum;
  }
  const LogDet ld = log_det(Matrix(Matrix::Identity(n, n) - m));
  return -ld.log_abs;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  engine_.seed(seq);
}

double Rng::uniform() {
  // 53 random mantissa bits, shifted off zero.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::exponential(double rate) { return -std::log(uniform()) / rate; }

double Rng::normal() {
  std::normal_distribution<double> dist;
  return dist(engine_);
}

std::uint64_t Rng::poisson(double mean) {
  if (!(mean > 0.0)) return 0;
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(engine_);
}

}  // namespace loopsoup
