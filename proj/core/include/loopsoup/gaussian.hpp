#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "loopsoup/graph.hpp"
#include "loopsoup/linalg.hpp"
#include "loopsoup/loopmeas.hpp"
#include "loopsoup/rng.hpp"
#include "loopsoup/stats.hpp"

namespace loopsoup {

/// Complex Gaussian weight e^{-<phi, A conj(phi)>} with A = hermitian + skew.
/// Construction fails unless the Hermitian part is positive definite.
class QuadraticForm {
 public:
  explicit QuadraticForm(CMatrix a);
  /// A = -(Q + mu I).
  static QuadraticForm from_generator(const Generator& q, double mu);

  const CMatrix& a() const { return a_; }
  const CMatrix& hermitian_part() const { return hermitian_; }
  const CMatrix& skew_part() const { return skew_; }
  int size() const { return static_cast<int>(a_.rows()); }
  CMatrix covariance() const;  // A^{-1}
  QuadraticForm scaled(double s) const { return QuadraticForm(s * a_); }

 private:
  CMatrix a_, hermitian_, skew_;
};

/// pi^|G| / det A.
Complex normalization(const QuadraticForm& a);

/// E_A[conj(phi_x) phi_y] = (A^{-1})(x, y).
Complex gaussian_moment(const QuadraticForm& a, int x, int y);

struct ComplexFieldSample {
  CVector phi;
  Complex weight;
};

/// Draws phi from the Hermitian-part Gaussian: with Ahat = L L^*,
/// conj(phi) = L^{-*} z for standard complex normal z. The weight
/// (det A / det Ahat) e^{-<phi, A^S conj(phi)>} turns averages into E_A.
/// Since the exponent is purely imaginary the weights all have the same
/// modulus, so any skew part is admissible.
class FieldSampler {
 public:
  explicit FieldSampler(const QuadraticForm& a);
  ComplexFieldSample sample(Rng& rng) const;
  int size() const { return static_cast<int>(l_.rows()); }

 private:
  CMatrix l_;
  CMatrix skew_;
  Complex det_ratio_;
};

ComplexFieldSample sample_field(const QuadraticForm& a, Rng& rng);

/// One line of a verification report.
struct IdentityReport {
  std::string identity;
  nlohmann::json parameters = nlohmann::json::object();
  double exact = 0.0;
  double estimate = 0.0;
  double stderr_ = 0.0;
  double z_score = 0.0;
  bool pass = false;

  nlohmann::json to_json() const;
};

/// Builds a report passing when |estimate - exact| <= 3 stderr.
IdentityReport make_report(std::string identity, nlohmann::json parameters, double exact,
                           const Estimate& e);

/// E[e^{-<v, L>}] for the Markovian soup at mu: det A / det(A + V) against
/// weighted Gaussian Monte Carlo of e^{-<v,|phi|^2>} and against loop soup
/// Monte Carlo (genuine loops sampled, point loops folded in exactly).
std::vector<IdentityReport> verify_lejan(const Generator& q, double mu, const Vector& v,
                                         std::size_t samples, std::uint64_t seed);

/// Closed form (A+V)^{-1}(x,y) det A / det(A+V), evaluated twice: through the
/// killed Green function, and through complex normalizations and moments of
/// the shifted Gaussian.
std::pair<double, double> dynkin_identity(const Generator& q, double mu, int x, int y, const Vector& v);

/// Weighted Gaussian Monte Carlo of E_A[conj(phi_x) phi_y e^{-<v,|phi|^2>}].
Estimate dynkin_monte_carlo(const Generator& q, double mu, int x, int y, const Vector& v,
                            std::size_t samples, std::uint64_t seed);

/// Paths from the bridge measure int_0^inf e^{mu t} P^{(t)}_{x,y} dt,
/// normalized by its mass G(x,y). With R = I + (Q + mu)/Lambda the number of
/// uniformized steps m has law proportional to R^m(x, y) and the duration
/// is Gamma(m + 1, Lambda).
class GreenPathSampler {
 public:
  GreenPathSampler(const Generator& q, double mu, int x, int y);

  double mass() const { return mass_; }
  /// Local times of one sampled path.
  Vector sample_local_time(Rng& rng) const;

 private:
  Matrix r_;
  double rate_ = 0.0;
  int x_ = 0;
  double mass_ = 0.0;
  std::vector<Vector> columns_;  // R^k e_y
  std::vector<double> cumulative_;
};

/// J(u) = prod_x sum_i p_i e^{-u_x w_i} for a finite measure nu = sum_i p_i delta_{w_i}.
struct MixtureJ {
  std::vector<double> points;
  std::vector<double> masses;

  void validate() const;
  double operator()(const Vector& u) const;
  static MixtureJ from_json(const nlohmann::json& doc);
};

struct SymanzikResult {
  double lhs = 0.0;
  double lhs_stderr = 0.0;
  double rhs = 0.0;
  double rhs_stderr = 0.0;
  double closed_form = 0.0;  // NaN when J has no closed form
  bool pass = false;

  nlohmann::json to_json() const;
};

/// J(u) = e^{-<v,u>}: both sides reduce to (1/beta)(A+V)^{-1}(x,y). The lhs is
/// the moment of the form beta(A + V), the rhs the bridge mass times the
/// path Laplace transform, assembled separately.
SymanzikResult symanzik_linear(const Generator& q, double mu, double beta, int x, int y, const Vector& v);

/// Mixture J by Monte Carlo on both sides: weighted Gaussian ratio under
/// beta A with J(beta |phi|^2), against
/// (1/beta) G(x,y) E[J(L_soup + L_path)] / E[J(L_soup)] with shared soups.
SymanzikResult symanzik_mixture(const Generator& q, double mu, double beta, int x, int y,
                                const MixtureJ& j, std::size_t samples, std::uint64_t seed);

/// Ratio of int F(theta sqrt(L)) e^{-<theta sqrt(L), A sqrt(L) conj(theta)>} dS(theta)
/// and the same integral with F = 1, over independent uniform angles, with
/// one set of angles for both.
Complex conditional_angular_expectation(const QuadraticForm& a, const Vector& occupation,
                                        const std::function<Complex(const CVector&)>& f,
                                        std::size_t samples, std::uint64_t seed);

}  // namespace loopsoup
