#include "loopsoup/loopmeas.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "loopsoup/error.hpp"
#include "loopsoup/quadrature.hpp"

namespace loopsoup {

void LoopParams::validate() const {
  if (!std::isfinite(mu) || mu > 0.0) throw ValidationError("mu must be finite and <= 0");
  if (!std::isfinite(beta) || !(beta > 0.0)) throw ValidationError("beta must be finite and > 0");
}

void require_finite_mass(const Generator& q, double mu) {
  const Vector kappa = q.killing();
  for (Eigen::Index x = 0; x < kappa.size(); ++x)
    if (kappa(x) - mu > 1e-14) return;
  throw ValidationError("need kappa(x) - mu > 0 for at least one vertex");
}

LengthSet::LengthSet(std::vector<Interval> intervals) : intervals_(std::move(intervals)) {
  double last = 0.0;
  for (std::size_t i = 0; i < intervals_.size(); ++i) {
    const Interval& iv = intervals_[i];
    if (!(iv.lo > 0.0) || !std::isfinite(iv.lo))
      throw ValidationError("length intervals need a finite lower endpoint > 0");
    if (!(iv.hi >= iv.lo)) throw ValidationError("length interval with upper < lower endpoint");
    if (std::isinf(iv.hi) && i + 1 != intervals_.size())
      throw ValidationError("only the last length interval may be unbounded");
    if (iv.lo < last) throw ValidationError("length intervals must be sorted and disjoint");
    last = iv.hi;
  }
}

bool LengthSet::contains(double t) const {
  for (const auto& iv : intervals_)
    if (t >= iv.lo && t < iv.hi) return true;
  return false;
}

double LengthSet::infimum() const {
  for (const auto& iv : intervals_)
    if (iv.hi > iv.lo) return iv.lo;
  return std::numeric_limits<double>::infinity();
}

bool LengthSet::bounded() const {
  return intervals_.empty() || std::isfinite(intervals_.back().hi);
}

bool LengthSet::touches_multiple_of(double beta) const {
  auto on_grid = [beta](double e) {
    if (!std::isfinite(e)) return false;
    const double j = std::round(e / beta);
    return j >= 1.0 && std::abs(e - j * beta) <= 1e-12 * std::max(1.0, e);
  };
  for (const auto& iv : intervals_)
    if (iv.hi > iv.lo && (on_grid(iv.lo) || on_grid(iv.hi))) return true;
  return false;
}

LengthSet LengthSet::from_json(const nlohmann::json& doc) {
  auto endpoint = [](const nlohmann::json& e) {
    if (e.is_string()) {
      const auto s = e.get<std::string>();
      if (s == "inf" || s == "+inf" || s == "infinity") return std::numeric_limits<double>::infinity();
      throw ValidationError("bad length endpoint '" + s + "'");
    }
    if (!e.is_number()) throw ValidationError("length endpoints must be numbers or \"inf\"");
    return e.get<double>();
  };
  if (!doc.is_array()) throw ValidationError("lengths must be a list of [a, b) pairs");
  std::vector<Interval> out;
  for (const auto& pair : doc) {
    if (!pair.is_array() || pair.size() != 2) throw ValidationError("length interval must be [a, b]");
    out.push_back({endpoint(pair[0]), endpoint(pair[1])});
  }
  return LengthSet(std::move(out));
}

nlohmann::json LengthSet::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& iv : intervals_) {
    if (std::isinf(iv.hi))
      out.push_back({iv.lo, "inf"});
    else
      out.push_back({iv.lo, iv.hi});
  }
  return out;
}

void FddQuery::validate(int num_states) const {
  if (times.empty()) throw ValidationError("fdd query needs at least one time");
  if (times.size() != states.size()) throw ValidationError("fdd query: times and states differ in length");
  double last = 0.0;
  for (double t : times) {
    if (!(t > last) || !std::isfinite(t))
      throw ValidationError("fdd times must be positive and strictly increasing");
    last = t;
  }
  for (int s : states)
    if (s < 0 || s >= num_states) throw ValidationError("fdd state index out of range");
  if (!(lengths.infimum() > times.back()))
    throw ValidationError("inf of the length set must exceed the last query time");
}

double FddQuery::chain_weight(const Generator& q) const {
  double w = 1.0;
  for (std::size_t i = 0; i + 1 < times.size(); ++i)
    w *= heat_kernel(q, times[i + 1] - times[i]).matrix(states[i], states[i + 1]);
  return w;
}

DecayBound decay_bound(const Generator& q, double mu) {
  DecayBound best{-mu, 1.0};
  const double scale = std::max(q.lambda.maxCoeff(), 1e-12);
  double s = 0.25 / scale;
  Matrix e = expm(s * q.q);
  for (int k = 0; k < 64; ++k) {
    const double survive = e.cwiseMax(0.0).rowwise().sum().maxCoeff();
    if (survive <= 0.0) break;
    if (survive < 1.0) {
      const double rate = -mu - std::log(survive) / s;
      if (rate > best.rate) best = {rate, 1.0 / survive};
    }
    e = e * e;
    s *= 2.0;
    if (s > 1e12) break;
  }
  if (!(best.rate > 0.0))
    throw NumericError("no exponential decay of exp(t(Q + mu I)): kappa - mu vanishes everywhere");
  return best;
}

TraceKernel::TraceKernel(const Matrix& q) {
  if (q.rows() == 1) {
    eigenvalues_ = CVector::Constant(1, Complex(q(0, 0), 0.0));
  } else if (is_symmetric(q)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(q, Eigen::EigenvaluesOnly);
    eigenvalues_ = es.eigenvalues().cast<Complex>();
  } else {
    Eigen::EigenSolver<Matrix> es(q, false);
    eigenvalues_ = es.eigenvalues();
  }
  top_ = eigenvalues_.real().maxCoeff();
}

double TraceKernel::trace(double t) const {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) acc += std::exp(t * eigenvalues_(i)).real();
  return acc;
}

KernelEvaluator::KernelEvaluator(const Matrix& q) : q_(q) {
  const Eigen::Index n = q.rows();
  if (n == 1) {
    eigenvalues_ = CVector::Constant(1, Complex(q(0, 0), 0.0));
    v_ = v_inv_ = CMatrix::Identity(1, 1);
    return;
  }
  if (is_symmetric(q)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(q);
    eigenvalues_ = es.eigenvalues().cast<Complex>();
    v_ = es.eigenvectors().cast<Complex>();
    v_inv_ = v_.transpose();
    return;
  }
  Eigen::EigenSolver<Matrix> es(q);
  eigenvalues_ = es.eigenvalues();
  v_ = es.eigenvectors();
  Eigen::PartialPivLU<CMatrix> lu(v_);
  v_inv_ = lu.inverse();
  // Probe at a time of order one relaxation step.
  const double probe = 1.0 / std::max(1.0, q.diagonal().cwiseAbs().maxCoeff());
  const Matrix exact = expm(probe * q);
  const Matrix spectral =
      (v_ * (probe * eigenvalues_).array().exp().matrix().asDiagonal() * v_inv_).real();
  if (!((exact - spectral).cwiseAbs().maxCoeff() <= 1e-11)) dense_ = true;
}

double KernelEvaluator::entry(double t, int a, int b) const {
  if (t == 0.0) return a == b ? 1.0 : 0.0;
  if (dense_) return expm(t * q_)(a, b);
  Complex acc(0.0, 0.0);
  for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i)
    acc += v_(a, i) * std::exp(t * eigenvalues_(i)) * v_inv_(i, b);
  return std::max(0.0, acc.real());
}

Matrix KernelEvaluator::matrix(double t) const {
  if (dense_ || t == 0.0) return t == 0.0 ? Matrix::Identity(q_.rows(), q_.cols()) : expm(t * q_);
  return (v_ * (t * eigenvalues_).array().exp().matrix().asDiagonal() * v_inv_).real().cwiseMax(0.0);
}

double integrate_to_infinity(const std::function<double(double)>& f, double a, double rate,
                             double prefactor, double abs_tol, double first_panel) {
  if (!(rate > 0.0)) throw NumericError("integrand has no exponential decay; tail is divergent");
  const double start = std::max(a, 1e-300);
  // Tail bound prefactor e^{-rate T}/(rate T) < abs_tol/4.
  double t_end = std::max(start, 1.0 / rate);
  while (prefactor * std::exp(-rate * t_end) / (rate * t_end) > 0.25 * abs_tol) t_end *= 1.25;
  std::vector<double> cuts{a};
  double edge = a > 0.0 ? a : first_panel;
  if (a == 0.0) cuts.push_back(std::min(edge, t_end));
  while (cuts.back() < t_end) {
    edge = std::max(2.0 * cuts.back(), cuts.back() + first_panel);
    cuts.push_back(std::min(edge, t_end));
  }
  const double tol = 0.75 * abs_tol / static_cast<double>(cuts.size());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    total += integrate(f, cuts[i], cuts[i + 1], tol).value;
  return total;
}

namespace {

// Entry bound for e^{beta mu j}/j p_{j beta - shift} and the smallest J with
// sum_{j > J} below tol.
int series_cutoff(const DecayBound& db, double beta, double shift, double tol, int j_min) {
  const double ratio = std::exp(-db.rate * beta);
  const double c = db.prefactor * std::exp(db.rate * shift) / (1.0 - ratio);
  int j = std::max(j_min, 1);
  while (c * std::pow(ratio, j + 1) / (j + 1) > tol) {
    ++j;
    if (j > 50000000) throw NumericError("loop series needs more than 5e7 terms");
  }
  return j;
}

}  // namespace

int bosonic_series_cutoff(const Generator& q, const LoopParams& p, double tol) {
  p.validate();
  return series_cutoff(decay_bound(q, p.mu), p.beta, 0.0, tol, 1);
}

double bosonic_fdd(const Generator& q, const LoopParams& p, const FddQuery& query) {
  p.validate();
  query.validate(q.size());
  const double delta = query.span();
  const int from = query.states.back();
  const int to = query.states.front();
  const double chain = query.chain_weight(q);
  if (chain == 0.0) return 0.0;

  const double inf = query.lengths.infimum();
  if (!std::isfinite(inf)) return 0.0;
  const int j_min = std::max(1, static_cast<int>(std::ceil(inf / p.beta - 1e-12)));
  int j_max;
  if (query.lengths.bounded()) {
    j_max = static_cast<int>(std::ceil(query.lengths.intervals().back().hi / p.beta));
  } else {
    require_finite_mass(q, p.mu);
    j_max = series_cutoff(decay_bound(q, p.mu), p.beta, delta, 1e-16, j_min);
  }
  const Matrix step = expm(p.beta * q.q);
  Eigen::RowVectorXd row = heat_kernel(q, j_min * p.beta - delta).matrix.row(from);
  double total = 0.0;
  for (int j = j_min; j <= j_max; ++j) {
    if (j > j_min) row = row * step;
    if (query.lengths.contains(j * p.beta)) total += std::exp(p.beta * p.mu * j) / j * row(to);
  }
  return chain * total;
}

double markov_fdd(const Generator& q, double mu, const FddQuery& query, double abs_tol) {
  if (mu > 0.0 || !std::isfinite(mu)) throw ValidationError("mu must be finite and <= 0");
  query.validate(q.size());
  const double delta = query.span();
  const int from = query.states.back();
  const int to = query.states.front();
  const double chain = query.chain_weight(q);
  if (chain == 0.0) return 0.0;
  const KernelEvaluator kernel(q.q);
  auto f = [&](double t) { return std::exp(mu * t) / t * kernel.entry(t - delta, from, to); };
  double total = 0.0;
  const auto& ivs = query.lengths.intervals();
  const double tol = abs_tol / std::max<std::size_t>(ivs.size(), 1) / std::max(chain, 1e-300);
  for (const auto& iv : ivs) {
    if (!(iv.hi > iv.lo)) continue;
    if (std::isfinite(iv.hi)) {
      total += integrate(f, iv.lo, iv.hi, std::max(tol, 1e-15)).value;
    } else {
      require_finite_mass(q, mu);
      const DecayBound db = decay_bound(q, mu);
      // e^{mu t} p_{t - delta} <= C e^{gamma delta} e^{-gamma t}.
      const double pref = db.prefactor * std::exp((db.rate + mu) * delta);
      total += integrate_to_infinity(f, iv.lo, db.rate, pref, std::max(tol, 1e-15));
    }
  }
  return chain * total;
}

double markov_mass_jumps(const Generator& q, double mu) {
  if (mu > 0.0) throw ValidationError("mu must be <= 0");
  require_finite_mass(q, mu);
  const Eigen::Index n = q.q.rows();
  const Matrix shifted = q.q + mu * Matrix::Identity(n, n);
  const LogDet full = log_det(shifted);
  if (full.sign == 0) throw NumericError("Q + mu I is singular");
  double diag = 0.0;
  for (Eigen::Index x = 0; x < n; ++x) diag += std::log(std::abs(q.diag(x) + mu));
  return std::max(0.0, diag - full.log_abs);
}

double bosonic_total_mass(const Generator& q, const LoopParams& p) {
  p.validate();
  require_finite_mass(q, p.mu);
  const Eigen::Index n = q.q.rows();
  const Matrix b = p.beta * (q.q + p.mu * Matrix::Identity(n, n));
  const Matrix e = expm(b);
  if (norm1(e) < 0.5) return neg_log_det_one_minus(e);
  const LogDet ld = log_det(one_minus_expm(b));
  if (ld.sign <= 0) throw NumericError("det(I - exp(beta(Q + mu I))) is not positive");
  return -ld.log_abs;
}

double bosonic_mass_jumps(const Generator& q, const LoopParams& p) {
  const double total = bosonic_total_mass(q, p);
  double points = 0.0;
  for (Eigen::Index x = 0; x < q.diag.size(); ++x) {
    const double b = p.beta * (q.diag(x) + p.mu);
    if (!(b < 0.0)) throw NumericError("point-loop mass diverges: d(x) + mu >= 0");
    points -= std::log(-std::expm1(b));
  }
  // Rounding can leave a tiny negative residue when Q is diagonal.
  return std::max(0.0, total - points);
}

double markov_mass_truncated(const Generator& q, double mu, double eps, double abs_tol) {
  if (!(eps > 0.0)) throw ValidationError("Markovian loop mass needs a cutoff eps > 0");
  require_finite_mass(q, mu);
  const TraceKernel tk(q.q);
  const double rate = -(mu + tk.top());
  auto f = [&](double t) { return std::exp(mu * t) / t * tk.trace(t); };
  return integrate_to_infinity(f, eps, rate, tk.size(), abs_tol, eps);
}

double occupation_laplace_markov(const Generator& q, double mu, const Vector& v) {
  if (mu > 0.0) throw ValidationError("mu must be <= 0");
  require_finite_mass(q, mu);
  if (v.size() != q.q.rows() || (v.array() < 0.0).any())
    throw ValidationError("v must be a nonnegative vector over the vertices");
  const Eigen::Index n = q.q.rows();
  const Matrix a = q.q + mu * Matrix::Identity(n, n);
  const Matrix av = a - Matrix(v.asDiagonal());
  const LogDet num = log_det(a), den = log_det(av);
  if (num.sign == 0 || den.sign == 0) throw NumericError("singular determinant in Laplace ratio");
  return num.sign * den.sign * std::exp(num.log_abs - den.log_abs);
}

double occupation_laplace_bosonic(const Generator& q, const LoopParams& p, const Vector& v) {
  if (v.size() != q.q.rows() || (v.array() < 0.0).any())
    throw ValidationError("v must be a nonnegative vector over the vertices");
  const double base = bosonic_total_mass(q, p);
  Generator shifted = q;
  shifted.q -= Matrix(v.asDiagonal());
  shifted.diag = shifted.q.diagonal();
  shifted.lambda = -shifted.diag;
  return std::exp(bosonic_total_mass(shifted, p) - base);
}

double occupation_laplace_markov_truncated(const Generator& q, double mu, const Vector& v,
                                           double eps, double abs_tol) {
  if (!(eps >= 0.0)) throw ValidationError("eps must be >= 0");
  if (v.size() != q.q.rows() || (v.array() < 0.0).any())
    throw ValidationError("v must be a nonnegative vector over the vertices");
  require_finite_mass(q, mu);
  const TraceKernel plain(q.q);
  const TraceKernel tilted(q.q - Matrix(v.asDiagonal()));
  const double rate = -(mu + plain.top());
  auto f = [&](double t) { return std::exp(mu * t) / t * (plain.trace(t) - tilted.trace(t)); };
  const double first = eps > 0.0 ? eps : 1.0 / std::max(1.0, q.lambda.maxCoeff() + v.maxCoeff());
  return std::exp(-integrate_to_infinity(f, eps, rate, 2.0 * plain.size(), abs_tol, first));
}

Vector point_loop_laplace(const Generator& q, const LoopParams& p, const Vector& v, LoopLaw law) {
  p.validate();
  if (v.size() != q.q.rows() || (v.array() < 0.0).any())
    throw ValidationError("v must be a nonnegative vector over the vertices");
  Vector out(v.size());
  for (Eigen::Index x = 0; x < v.size(); ++x) {
    const double gap = -(q.diag(x) + p.mu);
    if (!(gap > 0.0)) throw ValidationError("point-loop law needs d(x) + mu < 0 at every vertex");
    if (law == LoopLaw::markov) {
      out(x) = gap / (gap + v(x));
    } else {
      // (1 - c) / (1 - c e^{-beta v}), both factors via expm1 for small beta.
      const double b = -p.beta * gap;
      out(x) = std::expm1(b) / std::expm1(b - p.beta * v(x));
    }
  }
  return out;
}

Matrix bridge_green_matrix(const Generator& q, const LoopParams& p, LoopLaw law) {
  p.validate();
  require_finite_mass(q, p.mu);
  if (law == LoopLaw::markov) return green_function(q, p.mu) / p.beta;
  const Eigen::Index n = q.q.rows();
  const Matrix b = p.beta * (q.q + p.mu * Matrix::Identity(n, n));
  Eigen::PartialPivLU<Matrix> lu(one_minus_expm(b));
  if (!(lu.rcond() > 1e-15)) throw NumericError("I - exp(beta(Q + mu I)) is singular");
  return lu.solve(expm(b));
}

double bridge_measure_green(const Generator& q, const LoopParams& p, int x, int y, LoopLaw law) {
  if (x < 0 || y < 0 || x >= q.size() || y >= q.size()) throw ValidationError("vertex index out of range");
  return bridge_green_matrix(q, p, law)(x, y);
}

}  // namespace loopsoup
