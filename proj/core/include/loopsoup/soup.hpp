#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "loopsoup/graph.hpp"
#include "loopsoup/loopmeas.hpp"
#include "loopsoup/path.hpp"
#include "loopsoup/rng.hpp"

namespace loopsoup {

/// Endpoint-conditioned paths by uniformization at rate
/// Lambda_u = max lambda * (1 + 1e-6) with R = I + Q / Lambda_u.
/// Powers of R are cached; the cache is guarded, so one sampler may be
/// shared by worker threads.
class BridgeSampler {
 public:
  explicit BridgeSampler(const Generator& q);

  double rate() const { return rate_; }
  int size() const { return static_cast<int>(r_.rows()); }

  /// Path x -> y of duration t distributed as P^{(t)}_{x,y} / p_t(x,y).
  Loop sample(int x, int y, double t, Rng& rng) const;

  /// Loop at x of duration t conditioned on having at least one jump.
  Loop sample_genuine(int x, double t, Rng& rng) const;

  /// Unnormalised law of the uniformized jump count m (virtual jumps
  /// included): Pois(m; Lambda_u t) R^m(x, y), m = 0..max_jumps.
  std::vector<double> jump_count_weights(int x, int y, double t) const;

  /// ceil(m + 12 sqrt(m) + 30) for Poisson mean m.
  static int max_jumps(double mean);

  const Matrix& power(int m) const;

 private:
  Loop finish(int x, const std::vector<int>& states, double t, Rng& rng) const;

  Matrix r_;
  double rate_ = 0.0;
  mutable std::mutex mutex_;
  mutable std::deque<Matrix> powers_;
};

struct LoopSoup {
  std::vector<Loop> loops;
  std::string measure;  // "bosonic", "markov" or "markov-genuine"
  LoopParams params;
  double eps = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

nlohmann::json soup_to_json(const LoopSoup& soup);

/// Poisson soup of the Bosonic loop measure: lengths j*beta with weight
/// e^{beta mu j}/j p_{j beta}(x,x); the (x, j) table is truncated where the
/// certified series tail drops below 1e-15.
class BosonicSoupSampler {
 public:
  BosonicSoupSampler(const Generator& q, const LoopParams& p);

  double mass() const { return mass_; }
  double truncated_mass() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  int max_winding() const { return j_max_; }
  const BridgeSampler& bridges() const { return bridges_; }

  LoopSoup sample(Rng& rng) const;
  Loop sample_loop(Rng& rng) const;

 private:
  LoopParams params_;
  int n_ = 0;
  int j_max_ = 0;
  double mass_ = 0.0;
  std::vector<double> cumulative_;  // over (j - 1) * n + x
  BridgeSampler bridges_;
};

/// Poisson soup of the Markovian loop measure restricted to lengths >= eps.
/// With genuine_only the intensity is restricted to loops with at least one
/// jump, for which eps = 0 is allowed (the mass is finite). Lengths come
/// from 4096 log-spaced cells with rejection against a per-cell envelope.
class MarkovSoupSampler {
 public:
  MarkovSoupSampler(const Generator& q, double mu, double eps, bool genuine_only = false,
                    int cells = 4096);

  double mass() const { return cumulative_.back(); }
  /// Certified bound on the intensity beyond the last cell (not sampled).
  double neglected_mass() const { return neglected_; }
  double horizon() const { return nodes_.back(); }
  /// Length density e^{mu t}/t g(t), g = tr e^{tQ} (minus point loops if genuine).
  double density(double t) const;
  const BridgeSampler& bridges() const { return bridges_; }

  LoopSoup sample(Rng& rng) const;
  Loop sample_loop(Rng& rng) const;
  double sample_length(Rng& rng) const;

 private:
  double trace_part(double t) const;

  Generator q_;
  double mu_ = 0.0;
  double eps_ = 0.0;
  bool genuine_ = false;
  TraceKernel trace_;
  KernelEvaluator kernel_;
  std::vector<double> series_;  // (tr Q^k - sum_x d_x^k) / k!
  double series_radius_ = 0.0;
  std::vector<double> nodes_;
  std::vector<double> envelope_;
  std::vector<double> cumulative_;
  double neglected_ = 0.0;
  BridgeSampler bridges_;
};

/// Occupation field of the point loops (loops without jumps) drawn directly
/// from its law. Markovian: independent Exp(lambda(x) - mu). Bosonic:
/// beta * sum of Poisson(c^j / j) many j's, c = e^{beta(d(x) + mu)}.
Vector sample_point_field(const Generator& q, const LoopParams& p, LoopLaw law, Rng& rng);

/// Sum of the loops' local times.
Vector occupation_field(const LoopSoup& soup, int num_states);

/// (point loops, genuine loops) by jump count.
std::pair<LoopSoup, LoopSoup> split_point_genuine(const LoopSoup& soup);

/// v(r) on lattice distances from a {distance: value} table, 0 elsewhere.
class PairPotential {
 public:
  PairPotential() = default;
  explicit PairPotential(std::map<int, double> table);

  double operator()(int r) const;
  bool is_zero() const;
  double min_value() const;
  const std::map<int, double>& table() const { return table_; }

  static PairPotential from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

 private:
  std::map<int, double> table_;
};

/// Interaction energy of a family of paths whose lengths are multiples of
/// beta: each path of length k*beta splits into k legs of duration beta and
/// V = sum over unordered pairs of distinct legs of int_0^beta v(|a(t) - b(t)|) dt.
/// The integrand is piecewise constant, so the integral is exact.
double leg_interaction(const std::vector<const Loop*>& paths, const PairPotential& v,
                       const Eigen::MatrixXi& distance, double beta);
double leg_interaction(const std::vector<Loop>& loops, const PairPotential& v,
                       const Eigen::MatrixXi& distance, double beta);

}  // namespace loopsoup
