#pragma once

#include <functional>
#include <limits>
#include <vector>

#include <json.hpp>

#include "loopsoup/graph.hpp"

namespace loopsoup {

/// Chemical potential mu <= 0 and time horizon beta > 0.
struct LoopParams {
  double mu = 0.0;
  double beta = 1.0;

  void validate() const;
};

/// Throws ValidationError unless kappa(x) - mu > 0 somewhere, which is what
/// makes -(Q + mu I) invertible and every mass below finite.
void require_finite_mass(const Generator& q, double mu);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;  // may be +inf
};

/// Finite union of sorted, disjoint half-open intervals [a, b) with a > 0.
class LengthSet {
 public:
  LengthSet() = default;
  explicit LengthSet(std::vector<Interval> intervals);

  static LengthSet single(double lo, double hi) { return LengthSet({{lo, hi}}); }

  const std::vector<Interval>& intervals() const { return intervals_; }
  bool contains(double t) const;
  double infimum() const;
  bool bounded() const;
  /// True when some endpoint equals j*beta (to 1e-12 relative) for j >= 1.
  bool touches_multiple_of(double beta) const;

  static LengthSet from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

 private:
  std::vector<Interval> intervals_;
};

struct FddQuery {
  std::vector<double> times;
  std::vector<int> states;
  LengthSet lengths;

  /// Checks k >= 1, 0 < t_1 < ... < t_k, states in range, inf(lengths) > t_k.
  void validate(int num_states) const;
  /// prod_i p_{t_{i+1}-t_i}(x_i, x_{i+1}), the part independent of the loop length.
  double chain_weight(const Generator& q) const;
  double span() const { return times.back() - times.front(); }
};

/// ||exp(t (Q + mu I))||_inf <= prefactor * exp(-rate * t) for all t >= 0.
/// Obtained from the survival probability q(s) = max_x P_x(alive at s) < 1:
/// rate = -mu - log(q(s)) / s, prefactor = 1 / q(s), optimised over s.
struct DecayBound {
  double rate = 0.0;
  double prefactor = 1.0;
};

DecayBound decay_bound(const Generator& q, double mu);

/// Eigenvalues of Q. tr exp(tQ) = sum_i exp(t lambda_i) holds for any
/// matrix, so traces of the heat kernel are cheap after one decomposition.
class TraceKernel {
 public:
  explicit TraceKernel(const Matrix& q);
  double trace(double t) const;
  /// Largest real part of the spectrum.
  double top() const { return top_; }
  int size() const { return static_cast<int>(eigenvalues_.size()); }

 private:
  CVector eigenvalues_;
  double top_ = 0.0;
};

/// Entries of exp(tQ) for many t after one eigendecomposition. Falls back
/// to a dense exponential per call when the eigenvector basis is too badly
/// conditioned to reproduce expm at a probe time.
class KernelEvaluator {
 public:
  explicit KernelEvaluator(const Matrix& q);
  double entry(double t, int a, int b) const;
  Matrix matrix(double t) const;
  bool spectral() const { return !dense_; }

 private:
  Matrix q_;
  CMatrix v_, v_inv_;
  CVector eigenvalues_;
  bool dense_ = false;
};

/// Integral of f over [a, inf) for an integrand bounded by
/// prefactor * e^{-rate t} / t beyond a; the neglected tail is certified
/// below abs_tol / 4 and the finite part is split into doubling panels.
double integrate_to_infinity(const std::function<double(double)>& f, double a, double rate,
                             double prefactor, double abs_tol, double first_panel = 1.0);

double bosonic_fdd(const Generator& q, const LoopParams& p, const FddQuery& query);
double markov_fdd(const Generator& q, double mu, const FddQuery& query, double abs_tol = 1e-9);

double markov_mass_jumps(const Generator& q, double mu);
double bosonic_mass_jumps(const Generator& q, const LoopParams& p);
double bosonic_total_mass(const Generator& q, const LoopParams& p);

/// Markovian loop mass of {l >= eps}: int_eps^inf e^{mu t}/t tr e^{tQ} dt.
double markov_mass_truncated(const Generator& q, double mu, double eps, double abs_tol = 1e-10);

/// det(Q + mu I) / det(Q + mu I - V).
double occupation_laplace_markov(const Generator& q, double mu, const Vector& v);
/// det(I - e^{beta(Q+mu I)}) / det(I - e^{beta(Q+mu I-V)}).
double occupation_laplace_bosonic(const Generator& q, const LoopParams& p, const Vector& v);
/// Laplace transform of the occupation field of loops with length >= eps:
/// exp(-int_eps^inf e^{mu t}/t [tr e^{tQ} - tr e^{t(Q-V)}] dt).
double occupation_laplace_markov_truncated(const Generator& q, double mu, const Vector& v,
                                           double eps, double abs_tol = 1e-10);

enum class LoopLaw { markov, bosonic };

/// Componentwise Laplace transform of the point-loop occupation field.
/// Markovian: (lambda - mu) / (lambda - mu + v). Bosonic, with
/// c = e^{beta(d + mu)}: (1 - c) / (1 - c e^{-beta v}).
Vector point_loop_laplace(const Generator& q, const LoopParams& p, const Vector& v, LoopLaw law);

/// Matrix of bridge-measure total masses. Markovian: G^mu / beta.
/// Bosonic: e^{beta(Q+mu)} (I - e^{beta(Q+mu)})^{-1} = sum_j e^{beta mu j} p_{j beta}.
Matrix bridge_green_matrix(const Generator& q, const LoopParams& p, LoopLaw law);
double bridge_measure_green(const Generator& q, const LoopParams& p, int x, int y, LoopLaw law);

/// Smallest J with a certified bound on sum_{j > J} e^{beta mu j}/j |p_{j beta}|
/// (entrywise) below tol.
int bosonic_series_cutoff(const Generator& q, const LoopParams& p, double tol);

}  // namespace loopsoup
