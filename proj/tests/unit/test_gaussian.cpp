#include <doctest.h>

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <Eigen/Eigenvalues>

#include "helpers.hpp"
#include "loopsoup/error.hpp"
#include "loopsoup/gaussian.hpp"
#include "loopsoup/soup.hpp"

using namespace loopsoup;
using testing::pair;
using testing::random_graph;
using testing::single;
using testing::skewed;

namespace {

constexpr double kPi = std::numbers::pi;

CMatrix random_form(std::uint64_t seed, int n, double skew) {
  Rng rng(seed, 0);
  CMatrix b(n, n), s(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      b(i, j) = Complex(rng.normal(), rng.normal());
      s(i, j) = Complex(rng.normal(), rng.normal());
    }
  const CMatrix herm = b * b.adjoint() + 0.5 * CMatrix::Identity(n, n);
  CMatrix k = (s - s.adjoint()) / 2.0;
  k *= skew / k.operatorNorm();
  return herm + k;
}

Complex det_by_eigenvalues(const CMatrix& a) {
  Eigen::ComplexEigenSolver<CMatrix> es(a);
  Complex d(1.0, 0.0);
  for (Eigen::Index i = 0; i < a.rows(); ++i) d *= es.eigenvalues()(i);
  return d;
}

// (A + V)^{-1} by the uniformized Neumann series (1/L) sum_k (I - (A+V)/L)^k.
Matrix neumann_inverse(const Matrix& a) {
  const double l = a.diagonal().maxCoeff() * 1.01;
  const Matrix r = Matrix::Identity(a.rows(), a.cols()) - a / l;
  Matrix term = Matrix::Identity(a.rows(), a.cols()), sum = term;
  for (int k = 0; k < 200000 && term.cwiseAbs().maxCoeff() > 1e-17; ++k) {
    term = term * r;
    sum += term;
  }
  return sum / l;
}

// Largest mu below -0.05 keeping the Hermitian part of -(Q + mu) positive definite.
double admissible_mu(const Generator& q) {
  const Matrix h = -(q.q + q.q.transpose()) / 2.0;
  const double lo = Eigen::SelfAdjointEigenSolver<Matrix>(h).eigenvalues().minCoeff();
  return std::min(-0.05, lo - 0.1);
}

}  // namespace

TEST_CASE("quadratic form parts and validation") {
  CMatrix a(2, 2);
  a << Complex(2, 0), Complex(-1, 0.3), Complex(0.5, 0), Complex(1.5, 0);
  const QuadraticForm f(a);
  CHECK((f.hermitian_part() - f.hermitian_part().adjoint()).norm() < 1e-15);
  CHECK((f.skew_part() + f.skew_part().adjoint()).norm() < 1e-15);
  CHECK((f.hermitian_part() + f.skew_part() - a).norm() < 1e-15);
  CMatrix bad(1, 1);
  bad << Complex(-1, 0);
  CHECK_THROWS_AS(QuadraticForm{bad}, ValidationError);
  CHECK_THROWS_AS(QuadraticForm::from_generator(build_generator(pair()), 0.0), ValidationError);
}

TEST_CASE("normalization examples") {
  CMatrix a(1, 1);
  a << Complex(2, 0);
  CHECK(normalization(QuadraticForm(a)).real() == doctest::Approx(kPi / 2));
  CHECK(normalization(QuadraticForm(CMatrix::Identity(3, 3))).real() == doctest::Approx(std::pow(kPi, 3)));
  // 2-D quadrature of e^{-(1 + 0.5i)(x^2 + y^2)}.
  const Complex z(1.0, 0.5);
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  auto part = [&](bool imag) {
    return GK::integrate(
        [&](double x) {
          return GK::integrate(
              [&](double y) {
                const Complex e = std::exp(-z * (x * x + y * y));
                return imag ? e.imag() : e.real();
              },
              -9.0, 9.0, 12, 1e-12);
        },
        -9.0, 9.0, 12, 1e-12);
  };
  a << z;
  const Complex n = normalization(QuadraticForm(a));
  CHECK(std::abs(n - kPi / z) < 1e-12);
  CHECK(std::abs(n - Complex(part(false), part(true))) < 1e-4);
}

TEST_CASE("determinant identity on random forms") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int n = 1 + static_cast<int>(seed % 8);
    const CMatrix a = random_form(seed, n, 0.7);
    const Complex prod = normalization(QuadraticForm(a)) * det_by_eigenvalues(a);
    CHECK(std::abs(prod - std::pow(kPi, n)) < 1e-10 * std::pow(kPi, n));
  }
}

TEST_CASE("gaussian moment examples") {
  const QuadraticForm d(Vector::LinSpaced(3, 1.0, 3.0).cast<Complex>().asDiagonal().toDenseMatrix());
  CHECK(std::abs(gaussian_moment(d, 0, 2)) == 0.0);
  CMatrix a(1, 1);
  a << Complex(2, 0);
  CHECK(gaussian_moment(QuadraticForm(a), 0, 0).real() == doctest::Approx(0.5));
  CMatrix b(2, 2);
  b << 2, -1, -1, 2;
  CHECK(gaussian_moment(QuadraticForm(b), 0, 1).real() == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(gaussian_moment(QuadraticForm(b), 0, 5), ValidationError);
}

TEST_CASE("moment orientation pinned by Monte Carlo") {
  // Strongly non-symmetric: (A^{-1})(0,1) and (A^{-1})(1,0) differ by a lot.
  CMatrix a(2, 2);
  a << 2.0, -1.2, 0.2, 1.5;
  const QuadraticForm f(a);
  const FieldSampler sampler(f);
  std::vector<double> re(200000);
  for (std::size_t i = 0; i < re.size(); ++i) {
    Rng rng(5, i);
    const ComplexFieldSample s = sampler.sample(rng);
    re[i] = (s.weight * std::conj(s.phi(0)) * s.phi(1)).real();
  }
  const Estimate e = summarize(re);
  const CMatrix inv = a.inverse();
  CHECK(gaussian_moment(f, 0, 1).real() == doctest::Approx(inv(0, 1).real()));
  CHECK(e.z_score(inv(0, 1).real()) < 3.0);
  CHECK(e.z_score(inv(1, 0).real()) > 10.0);
}

TEST_CASE("hermitian sampling has unit weights and the right covariance") {
  const Generator q = build_generator(random_graph(6, 4, true));
  const QuadraticForm f = QuadraticForm::from_generator(q, -0.1);
  const FieldSampler sampler(f);
  const CMatrix cov = f.covariance();
  std::vector<double> sq(100000);
  for (std::size_t i = 0; i < sq.size(); ++i) {
    Rng rng(6, i);
    const ComplexFieldSample s = sampler.sample(rng);
    CHECK(s.weight == Complex(1.0, 0.0));
    sq[i] = std::norm(s.phi(2));
  }
  CHECK(summarize(sq).z_score(cov(2, 2).real()) < 3.0);
}

TEST_CASE("weighted sampling reproduces moments for a small skew part") {
  const CMatrix a = random_form(8, 3, 0.2);
  const QuadraticForm f(a);
  const FieldSampler sampler(f);
  std::vector<double> re(100000), im(100000);
  for (std::size_t i = 0; i < re.size(); ++i) {
    Rng rng(9, i);
    const ComplexFieldSample s = sampler.sample(rng);
    const Complex m = s.weight * std::conj(s.phi(0)) * s.phi(2);
    re[i] = m.real();
    im[i] = m.imag();
  }
  const Complex exact = gaussian_moment(f, 0, 2);
  CHECK(summarize(re).z_score(exact.real()) < 3.0);
  CHECK(summarize(im).z_score(exact.imag()) < 3.0);
}

TEST_CASE("Le Jan verification") {
  for (const auto& r : verify_lejan(build_generator(pair(0.5, 0.5)), -0.1, Vector::Zero(2), 1000, 1)) {
    CHECK(r.exact == 1.0);
    CHECK(r.estimate == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.pass);
  }
  for (const auto& r : verify_lejan(build_generator(single(1.0)), 0.0, Vector::Ones(1), 50000, 2)) {
    CHECK(r.exact == doctest::Approx(0.5));
    CHECK(r.pass);
  }
  const auto reports = verify_lejan(build_generator(skewed()), 0.0, Vector::Ones(2), 50000, 3);
  for (const auto& r : reports) CHECK(r.pass);
  const nlohmann::json j = reports[0].to_json();
  for (const char* key : {"identity", "parameters", "exact", "estimate", "stderr", "z_score", "pass"})
    CHECK(j.contains(key));
}

TEST_CASE("Dynkin closed forms") {
  auto [l0, r0] = dynkin_identity(build_generator(single(1.0)), 0.0, 0, 0, Vector::Zero(1));
  CHECK(l0 == doctest::Approx(1.0));
  CHECK(r0 == doctest::Approx(1.0));
  auto [l1, r1] = dynkin_identity(build_generator(pair()), -1.0, 0, 1, Vector::Zero(2));
  CHECK(l1 == doctest::Approx(1.0 / 3.0));
  CHECK(r1 == doctest::Approx(1.0 / 3.0));
  auto [l2, r2] = dynkin_identity(build_generator(pair()), -1.0, 0, 1, Vector::Ones(2));
  CHECK(l2 == doctest::Approx(0.046875).epsilon(1e-12));
  CHECK(r2 == doctest::Approx(0.046875).epsilon(1e-12));
}

TEST_CASE("Dynkin on random graphs against a Neumann series oracle") {
  for (std::uint64_t seed = 200; seed < 220; ++seed) {
    const int n = 2 + static_cast<int>(seed % 5);
    const Generator q = build_generator(random_graph(seed, n));
    const double mu = admissible_mu(q);
    Rng rng(seed, 1);
    Vector v(n);
    for (int x = 0; x < n; ++x) v(x) = rng.uniform();
    const int x = static_cast<int>(seed % n), y = static_cast<int>((seed / 2) % n);
    auto [lhs, rhs] = dynkin_identity(q, mu, x, y, v);
    CHECK(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(lhs)));
    const Matrix a = -(q.q + mu * Matrix::Identity(n, n));
    const Matrix av = a + Matrix(v.asDiagonal());
    const double ratio = (det_by_eigenvalues(a.cast<Complex>()) / det_by_eigenvalues(av.cast<Complex>())).real();
    CHECK(lhs == doctest::Approx(neumann_inverse(av)(x, y) * ratio).epsilon(1e-9));
  }
}

TEST_CASE("Dynkin Monte Carlo") {
  const Generator q = build_generator(skewed(0.5));
  const Vector v(Vector::LinSpaced(2, 0.3, 0.6));
  const auto [lhs, rhs] = dynkin_identity(q, -0.2, 0, 1, v);
  CHECK(dynkin_monte_carlo(q, -0.2, 0, 1, v, 100000, 4).z_score(lhs) < 3.0);
}

TEST_CASE("Green path sampler local times") {
  const Generator q = build_generator(random_graph(10, 3));
  const double mu = -0.2;
  const GreenPathSampler paths(q, mu, 0, 2);
  const Matrix g = green_function(q, mu);
  CHECK(paths.mass() == doctest::Approx(g(0, 2)));
  std::vector<double> l1(50000), total(50000);
  for (std::size_t i = 0; i < l1.size(); ++i) {
    Rng rng(11, i);
    const Vector l = paths.sample_local_time(rng);
    l1[i] = l(1);
    total[i] = l.sum();
  }
  CHECK(summarize(l1).z_score(g(0, 1) * g(1, 2) / g(0, 2)) < 3.0);
  // Mean duration: sum_z G(0,z) G(z,2) / G(0,2).
  CHECK(summarize(total).z_score((g * g)(0, 2) / g(0, 2)) < 3.0);
  // Linear J through paths: E[e^{-<v,L>}] = (A+V)^{-1}(x,y) / G(x,y).
  const Vector v(Vector::LinSpaced(3, 0.2, 0.9));
  std::vector<double> lap(50000);
  for (std::size_t i = 0; i < lap.size(); ++i) {
    Rng rng(12, i);
    lap[i] = std::exp(-v.dot(paths.sample_local_time(rng)));
  }
  const Matrix av = -(q.q + mu * Matrix::Identity(3, 3)) + Matrix(v.asDiagonal());
  CHECK(summarize(lap).z_score(av.inverse()(0, 2) / g(0, 2)) < 3.0);
}

TEST_CASE("Symanzik with linear J") {
  const Generator q = build_generator(pair(0.3, 0.0));
  const SymanzikResult one = symanzik_linear(q, -0.2, 2.0, 0, 1, Vector::Zero(2));
  const QuadraticForm ba = QuadraticForm::from_generator(q, -0.2).scaled(2.0);
  CHECK(std::abs(one.lhs - gaussian_moment(ba, 0, 1).real()) < 1e-10);
  CHECK(std::abs(one.rhs - bridge_measure_green(q, {-0.2, 2.0}, 0, 1, LoopLaw::markov)) < 1e-10);
  CHECK(one.pass);
  const SymanzikResult s = symanzik_linear(build_generator(single(1.0)), 0.0, 1.0, 0, 0, Vector::Ones(1));
  CHECK(s.lhs == doctest::Approx(0.5));
  CHECK(s.rhs == doctest::Approx(0.5));
  for (std::uint64_t seed = 300; seed < 320; ++seed) {
    const int n = 2 + static_cast<int>(seed % 5);
    const Generator g = build_generator(random_graph(seed, n));
    Rng rng(seed, 1);
    Vector v(n);
    for (int x = 0; x < n; ++x) v(x) = rng.uniform();
    const double beta = 0.5 + rng.uniform();
    const SymanzikResult r = symanzik_linear(g, admissible_mu(g), beta, 0, n - 1, v);
    CHECK(std::abs(r.lhs - r.rhs) < 1e-10 * std::max(1.0, std::abs(r.lhs)));
    CHECK(r.lhs == doctest::Approx(r.closed_form).epsilon(1e-10));
    CHECK(r.pass);
  }
}

TEST_CASE("Symanzik with a point-mass mixture") {
  const Generator q = build_generator(skewed(0.5));
  const MixtureJ j{{0.5}, {1.0}};
  const SymanzikResult r = symanzik_mixture(q, -0.1, 1.0, 0, 1, j, 100000, 13);
  CHECK(r.pass);
  CHECK(std::abs(r.lhs - r.closed_form) < 3 * r.lhs_stderr);
  CHECK(std::abs(r.rhs - r.closed_form) < 3 * r.rhs_stderr);
  CHECK(symanzik_linear(q, -0.1, 1.0, 0, 1, Vector::Constant(2, 0.5)).lhs == doctest::Approx(r.closed_form));
  CHECK_THROWS_AS((MixtureJ{{-1.0}, {1.0}}.validate()), ValidationError);
}

TEST_CASE("Symanzik with a two-point mixture") {
  const Generator q = build_generator(pair(0.4, 0.2));
  const MixtureJ j = MixtureJ::from_json(nlohmann::json::parse(R"({"points": [0.2, 1.5], "masses": [0.6, 0.4]})"));
  const SymanzikResult r = symanzik_mixture(q, -0.1, 1.3, 0, 1, j, 50000, 14);
  CHECK(r.pass);
  CHECK(std::isnan(r.closed_form));
}

TEST_CASE("angular conditional expectation") {
  const QuadraticForm a = QuadraticForm::from_generator(build_generator(skewed()), -0.1);
  const Vector occ(Vector::LinSpaced(2, 0.4, 1.2));
  auto one = [](const CVector&) { return Complex(1.0, 0.0); };
  CHECK(std::abs(conditional_angular_expectation(a, occ, one, 1 << 14, 1) - 1.0) < 1e-12);
  auto modulus = [](const CVector& phi) { return Complex(std::norm(phi(1)), 0.0); };
  CHECK(std::abs(conditional_angular_expectation(a, occ, modulus, 1 << 14, 1) - occ(1)) < 1e-12);
  const QuadraticForm s = QuadraticForm::from_generator(build_generator(single(1.0)), 0.0);
  auto first = [](const CVector& phi) { return phi(0); };
  CHECK(std::abs(conditional_angular_expectation(s, Vector::Constant(1, 2.0), first, 1 << 14, 2)) <
        5.0 * std::sqrt(2.0 / (1 << 14)));
  CHECK_THROWS_AS(conditional_angular_expectation(a, -occ, one, 16, 1), ValidationError);
}

TEST_CASE("soup plus angular representation matches the weighted Gaussian moment") {
  // Non-symmetric with skew norm 0.15.
  Matrix w(2, 2);
  w << 0, 1.0, 1.3, 0;
  const Generator q = build_generator(WeightedGraph({"a", "b"}, w, Vector::Constant(2, 0.5)));
  const double mu = 0.0;
  const QuadraticForm a = QuadraticForm::from_generator(q, mu);
  const double exact = gaussian_moment(a, 0, 1).real();
  const MarkovSoupSampler soups(q, mu, 0.0, true);
  auto moment = [](const CVector& phi) { return std::conj(phi(0)) * phi(1); };
  std::vector<double> values(4000);
  for (std::size_t i = 0; i < values.size(); ++i) {
    Rng rng(15, i);
    Vector field = occupation_field(soups.sample(rng), 2);
    field += sample_point_field(q, {mu, 1.0}, LoopLaw::markov, rng);
    values[i] = conditional_angular_expectation(a, field, moment, 2048, 1000 + i).real();
  }
  CHECK(summarize(values).z_score(exact) < 3.0);
  const FieldSampler sampler(a);
  std::vector<double> weighted(100000);
  for (std::size_t i = 0; i < weighted.size(); ++i) {
    Rng rng(16, i);
    const ComplexFieldSample s = sampler.sample(rng);
    weighted[i] = (s.weight * moment(s.phi)).real();
  }
  CHECK(summarize(weighted).z_score(exact) < 3.0);
}
