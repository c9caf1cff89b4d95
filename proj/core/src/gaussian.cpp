#include "loopsoup/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "loopsoup/error.hpp"
#include "loopsoup/parallel.hpp"
#include "loopsoup/soup.hpp"

namespace loopsoup {

namespace {

Complex det_value(const ComplexLogDet& d) { return std::polar(std::exp(d.log_abs), d.phase); }

CMatrix diag_c(const Vector& v) { return v.cast<Complex>().asDiagonal(); }

void check_index(int x, int n) {
  if (x < 0 || x >= n) throw ValidationError("vertex index " + std::to_string(x) + " out of range");
}

void check_field(const Vector& v, int n, const char* what) {
  if (v.size() != n) throw ValidationError(std::string(what) + " has the wrong length");
  if ((v.array() < 0.0).any() || !v.allFinite())
    throw ValidationError(std::string(what) + " must be finite and nonnegative");
}

}  // namespace

QuadraticForm::QuadraticForm(CMatrix a) : a_(std::move(a)) {
  if (a_.rows() != a_.cols() || a_.rows() == 0) throw ValidationError("quadratic form must be square");
  hermitian_ = (a_ + a_.adjoint()) / 2.0;
  skew_ = a_ - hermitian_;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues().minCoeff() > 0.0))
    throw ValidationError("Hermitian part of the quadratic form is not positive definite");
}

QuadraticForm QuadraticForm::from_generator(const Generator& q, double mu) {
  const Matrix a = -(q.q + mu * Matrix::Identity(q.size(), q.size()));
  return QuadraticForm(a.cast<Complex>());
}

CMatrix QuadraticForm::covariance() const {
  Eigen::PartialPivLU<CMatrix> lu(a_);
  return lu.inverse();
}

Complex normalization(const QuadraticForm& a) {
  const ComplexLogDet d = log_det(a.a());
  return std::polar(std::exp(a.size() * std::log(std::numbers::pi) - d.log_abs), -d.phase);
}

Complex gaussian_moment(const QuadraticForm& a, int x, int y) {
  check_index(x, a.size());
  check_index(y, a.size());
  const ComplexLogDet d = log_det(a.a());
  if (!std::isfinite(d.log_abs)) throw NumericError("quadratic form is singular");
  return a.covariance()(x, y);
}

FieldSampler::FieldSampler(const QuadraticForm& a) : skew_(a.skew_part()) {
  Eigen::LLT<CMatrix> llt(a.hermitian_part());
  if (llt.info() != Eigen::Success) throw NumericError("Cholesky factorization of the Hermitian part failed");
  l_ = llt.matrixL();
  det_ratio_ = det_value(log_det(a.a())) / det_value(log_det(a.hermitian_part()));
}

ComplexFieldSample FieldSampler::sample(Rng& rng) const {
  const int n = size();
  CVector z(n);
  const double s = std::sqrt(0.5);
  for (int i = 0; i < n; ++i) z(i) = Complex(s * rng.normal(), s * rng.normal());
  const CVector u = l_.adjoint().triangularView<Eigen::Upper>().solve(z);
  ComplexFieldSample out;
  out.phi = u.conjugate();
  out.weight = det_ratio_ * std::exp(-u.dot(skew_ * u));
  return out;
}

ComplexFieldSample sample_field(const QuadraticForm& a, Rng& rng) { return FieldSampler(a).sample(rng); }

nlohmann::json IdentityReport::to_json() const {
  return {{"identity", identity}, {"parameters", parameters}, {"exact", exact},   {"estimate", estimate},
          {"stderr", stderr_},    {"z_score", z_score},       {"pass", pass}};
}

IdentityReport make_report(std::string identity, nlohmann::json parameters, double exact, const Estimate& e) {
  IdentityReport r;
  r.identity = std::move(identity);
  r.parameters = std::move(parameters);
  r.exact = exact;
  r.estimate = e.mean;
  r.stderr_ = e.stderr_;
  // Rounding floor: estimators that are constant in the sample (for example
  // an empty genuine soup) still carry last-digit noise.
  const double scale = std::max(e.stderr_, 1e-12 * std::max(1.0, std::abs(exact)));
  r.z_score = std::abs(e.mean - exact) / scale;
  r.pass = r.z_score <= 3.0;
  return r;
}

std::vector<IdentityReport> verify_lejan(const Generator& q, double mu, const Vector& v, std::size_t samples,
                                         std::uint64_t seed) {
  require_finite_mass(q, mu);
  check_field(v, q.size(), "v");
  if (samples < 2) throw ValidationError("samples must be >= 2");
  const double exact = occupation_laplace_markov(q, mu, v);
  const nlohmann::json params = {{"mu", mu}, {"v", std::vector<double>(v.data(), v.data() + v.size())},
                                 {"samples", samples}, {"seed", seed}};

  const FieldSampler fields(QuadraticForm::from_generator(q, mu));
  const Estimate gauss = summarize(collect(samples, [&](std::size_t i) {
    Rng rng(seed, 2 * i);
    const ComplexFieldSample s = fields.sample(rng);
    return (s.weight * std::exp(-v.dot(s.phi.cwiseAbs2()))).real();
  }));

  const MarkovSoupSampler soups(q, mu, 0.0, true);
  const Vector point = point_loop_laplace(q, LoopParams{mu, 1.0}, v, LoopLaw::markov);
  const double point_factor = point.prod();
  const Estimate soup = summarize(collect(samples, [&](std::size_t i) {
    Rng rng(seed, 2 * i + 1);
    const Vector field = occupation_field(soups.sample(rng), q.size());
    return std::exp(-v.dot(field)) * point_factor;
  }));

  return {make_report("lejan-gaussian", params, exact, gauss), make_report("lejan-soup", params, exact, soup)};
}

std::pair<double, double> dynkin_identity(const Generator& q, double mu, int x, int y, const Vector& v) {
  require_finite_mass(q, mu);
  check_index(x, q.size());
  check_index(y, q.size());
  check_field(v, q.size(), "v");
  const Generator shifted = generator_from_matrix(q.q - Matrix(v.asDiagonal()));
  const double lhs = green_function(shifted, mu)(x, y) * occupation_laplace_markov(q, mu, v);

  const QuadraticForm a = QuadraticForm::from_generator(q, mu);
  const QuadraticForm av(a.a() + diag_c(v));
  const Complex rhs = gaussian_moment(av, x, y) * normalization(av) / normalization(a);
  return {lhs, rhs.real()};
}

Estimate dynkin_monte_carlo(const Generator& q, double mu, int x, int y, const Vector& v, std::size_t samples,
                            std::uint64_t seed) {
  require_finite_mass(q, mu);
  check_index(x, q.size());
  check_index(y, q.size());
  check_field(v, q.size(), "v");
  const FieldSampler fields(QuadraticForm::from_generator(q, mu));
  return summarize(collect(samples, [&](std::size_t i) {
    Rng rng(seed, i);
    const ComplexFieldSample s = fields.sample(rng);
    return (s.weight * std::conj(s.phi(x)) * s.phi(y) * std::exp(-v.dot(s.phi.cwiseAbs2()))).real();
  }));
}

GreenPathSampler::GreenPathSampler(const Generator& q, double mu, int x, int y) : x_(x) {
  require_finite_mass(q, mu);
  check_index(x, q.size());
  check_index(y, q.size());
  const int n = q.size();
  rate_ = (q.lambda.array() - mu).maxCoeff() * (1.0 + 1e-6);
  if (!(rate_ > 0.0)) throw ValidationError("bridge measure needs a positive exit rate");
  r_ = Matrix::Identity(n, n) + (q.q + mu * Matrix::Identity(n, n)) / rate_;
  mass_ = green_function(q, mu)(x, y);
  if (!(mass_ > 0.0)) throw ValidationError("y is not reachable from x");
  const double target = mass_ * rate_ * (1.0 - 1e-13);
  Vector col = Vector::Unit(n, y);
  double acc = 0.0;
  while (true) {
    columns_.push_back(col);
    acc += col(x);
    cumulative_.push_back(acc);
    if (acc >= target) break;
    if (columns_.size() > 2000000) throw NumericError("bridge measure step series did not converge");
    col = r_ * col;
  }
}

Vector GreenPathSampler::sample_local_time(Rng& rng) const {
  const int n = static_cast<int>(r_.rows());
  const double u = rng.uniform() * cumulative_.back();
  const int m = static_cast<int>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) - cumulative_.begin());
  std::gamma_distribution<double> duration(m + 1.0, 1.0 / rate_);
  const double t = duration(rng);
  std::vector<double> times(static_cast<std::size_t>(m));
  for (auto& s : times) s = rng.uniform() * t;
  std::sort(times.begin(), times.end());

  Vector local = Vector::Zero(n);
  int s = x_;
  double last = 0.0;
  for (int i = 1; i <= m; ++i) {
    local(s) += times[static_cast<std::size_t>(i - 1)] - last;
    last = times[static_cast<std::size_t>(i - 1)];
    const Vector& ahead = columns_[static_cast<std::size_t>(m - i)];
    const double total = columns_[static_cast<std::size_t>(m - i + 1)](s);
    double pick = rng.uniform() * total, run = 0.0;
    int next = -1;
    for (int z = 0; z < n; ++z) {
      const double w = r_(s, z) * ahead(z);
      if (w <= 0.0) continue;
      next = z;
      run += w;
      if (pick < run) break;
    }
    if (next < 0) throw NumericError("bridge filtering hit a zero-weight state");
    s = next;
  }
  local(s) += t - last;
  return local;
}

void MixtureJ::validate() const {
  if (points.empty() || points.size() != masses.size())
    throw ValidationError("mixture J needs matching, nonempty points and masses");
  for (std::size_t i = 0; i < points.size(); ++i)
    if (!(points[i] >= 0.0) || !(masses[i] > 0.0) || !std::isfinite(points[i]) || !std::isfinite(masses[i]))
      throw ValidationError("mixture J needs points >= 0 and positive finite masses");
}

double MixtureJ::operator()(const Vector& u) const {
  double out = 1.0;
  for (Eigen::Index x = 0; x < u.size(); ++x) {
    double s = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) s += masses[i] * std::exp(-u(x) * points[i]);
    out *= s;
  }
  return out;
}

MixtureJ MixtureJ::from_json(const nlohmann::json& doc) {
  MixtureJ j;
  try {
    j.points = doc.at("points").get<std::vector<double>>();
    j.masses = doc.contains("masses") ? doc.at("masses").get<std::vector<double>>()
                                      : std::vector<double>(j.points.size(), 1.0 / j.points.size());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid mixture J: ") + e.what());
  }
  j.validate();
  return j;
}

nlohmann::json SymanzikResult::to_json() const {
  nlohmann::json out = {{"lhs", lhs}, {"lhs_stderr", lhs_stderr}, {"rhs", rhs}, {"rhs_stderr", rhs_stderr},
                        {"pass", pass}};
  out["closed_form"] = std::isfinite(closed_form) ? nlohmann::json(closed_form) : nlohmann::json(nullptr);
  return out;
}

SymanzikResult symanzik_linear(const Generator& q, double mu, double beta, int x, int y, const Vector& v) {
  require_finite_mass(q, mu);
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  check_index(x, q.size());
  check_index(y, q.size());
  check_field(v, q.size(), "v");
  SymanzikResult r;
  const QuadraticForm a = QuadraticForm::from_generator(q, mu);
  r.lhs = gaussian_moment(QuadraticForm(beta * (a.a() + diag_c(v))), x, y).real();

  const double bridge_mass = green_function(q, mu)(x, y) / beta;
  const Generator shifted = generator_from_matrix(q.q - Matrix(v.asDiagonal()));
  const double path_laplace = bridge_mass > 0.0 ? green_function(shifted, mu)(x, y) / (beta * bridge_mass) : 0.0;
  r.rhs = bridge_mass * path_laplace;

  const Matrix av = -(q.q + mu * Matrix::Identity(q.size(), q.size())) + Matrix(v.asDiagonal());
  r.closed_form = av.inverse()(x, y) / beta;
  r.pass = std::abs(r.lhs - r.rhs) <= 1e-10 * std::max(1.0, std::abs(r.lhs));
  return r;
}

SymanzikResult symanzik_mixture(const Generator& q, double mu, double beta, int x, int y, const MixtureJ& j,
                                std::size_t samples, std::uint64_t seed) {
  require_finite_mass(q, mu);
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  check_index(x, q.size());
  check_index(y, q.size());
  j.validate();
  if (samples < 2) throw ValidationError("samples must be >= 2");
  const int n = q.size();

  const FieldSampler fields(QuadraticForm::from_generator(q, mu).scaled(beta));
  std::vector<double> num(samples), den(samples);
  parallel_for(samples, [&](std::size_t i) {
    Rng rng(seed, 2 * i);
    const ComplexFieldSample s = fields.sample(rng);
    const double jv = j(beta * s.phi.cwiseAbs2());
    num[i] = (s.weight * std::conj(s.phi(x)) * s.phi(y)).real() * jv;
    den[i] = s.weight.real() * jv;
  });
  const Estimate lhs = ratio_estimate(num, den);

  const MarkovSoupSampler soups(q, mu, 0.0, true);
  const GreenPathSampler paths(q, mu, x, y);
  parallel_for(samples, [&](std::size_t i) {
    Rng rng(seed, 2 * i + 1);
    Vector field = occupation_field(soups.sample(rng), n);
    field += sample_point_field(q, LoopParams{mu, beta}, LoopLaw::markov, rng);
    den[i] = j(field);
    num[i] = j(field + paths.sample_local_time(rng));
  });
  const Estimate ratio = ratio_estimate(num, den);

  SymanzikResult r;
  r.lhs = lhs.mean;
  r.lhs_stderr = lhs.stderr_;
  r.rhs = paths.mass() / beta * ratio.mean;
  r.rhs_stderr = paths.mass() / beta * ratio.stderr_;
  r.closed_form = std::numeric_limits<double>::quiet_NaN();
  const bool single = std::all_of(j.points.begin(), j.points.end(), [&](double w) { return w == j.points[0]; });
  if (single) {
    const Matrix aw = -(q.q + mu * Matrix::Identity(n, n)) + j.points[0] * Matrix::Identity(n, n);
    r.closed_form = aw.inverse()(x, y) / beta;
  }
  r.pass = std::abs(r.lhs - r.rhs) <= 3.0 * std::hypot(r.lhs_stderr, r.rhs_stderr);
  return r;
}

Complex conditional_angular_expectation(const QuadraticForm& a, const Vector& occupation,
                                        const std::function<Complex(const CVector&)>& f, std::size_t samples,
                                        std::uint64_t seed) {
  check_field(occupation, a.size(), "occupation");
  if (samples < 1) throw ValidationError("samples must be >= 1");
  const int n = a.size();
  const Vector root = occupation.cwiseSqrt();
  Rng rng(seed, 0);
  Complex num(0.0, 0.0), den(0.0, 0.0);
  CVector psi(n);
  for (std::size_t s = 0; s < samples; ++s) {
    for (int x = 0; x < n; ++x) psi(x) = std::polar(root(x), 2.0 * std::numbers::pi * rng.uniform());
    const Complex e = std::exp(-(psi.transpose() * a.a() * psi.conjugate())(0, 0));
    num += f(psi) * e;
    den += e;
  }
  if (std::abs(den) == 0.0) throw NumericError("angular normalization vanished");
  return num / den;
}

}  // namespace loopsoup
