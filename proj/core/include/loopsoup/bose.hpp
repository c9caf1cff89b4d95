#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "loopsoup/graph.hpp"
#include "loopsoup/loopmeas.hpp"
#include "loopsoup/soup.hpp"
#include "loopsoup/stats.hpp"

namespace loopsoup {

/// Lattice Bose gas: one-particle Hamiltonian -Q, pair potential v on hop
/// distances, grand-canonical parameters (mu, beta).
struct BoseSystem {
  WeightedGraph graph;
  LoopParams params;
  PairPotential potential;

  Generator generator() const { return build_generator(graph); }
  void validate() const;
};

double log_partition_free(const BoseSystem& sys);

/// (1/|L|) tr[e^B (I - e^B)^{-1}] with B = beta(Q + mu I).
double particle_density(const BoseSystem& sys);

/// Soup Monte Carlo of sum_x L_x / (beta |L|) under the Bosonic soup.
Estimate particle_density_mc(const BoseSystem& sys, std::size_t samples, std::uint64_t seed);

/// e^B (I - e^B)^{-1}.
Matrix rdm_free(const BoseSystem& sys);
double rdm_free(const BoseSystem& sys, int x, int y);

struct InteractingEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
  /// Largest single-sample share of the Monte Carlo sum of e^{-V}.
  double max_share = 0.0;
};

/// log Z_free + log mean e^{-V(soup)}. Throws NumericError when v takes
/// negative values and one sample carries more than half of the sum.
InteractingEstimate log_partition_interacting_mc(const BoseSystem& sys, std::size_t samples, std::uint64_t seed);

/// rho(x,y) = rdm_free(x,y) E[e^{-V(path, soup)}] / E[e^{-V(soup)}] with the
/// open path drawn from j ~ e^{beta mu j} p_{j beta}(x,y) and an x -> y bridge
/// of length j beta; both means use the same soups.
InteractingEstimate rdm_interacting_mc(const BoseSystem& sys, int x, int y, std::size_t samples,
                                       std::uint64_t seed);

struct FockResult {
  double log_z = 0.0;
  Matrix rho1;
  /// Bound on log Z_full - log Z_truncated from the free-gas tail beyond
  /// n_max (valid for v >= 0).
  double truncation_bound = 0.0;
  int n_max = 0;
  std::size_t dimension = 0;

  nlohmann::json to_json() const;
};

/// Exact diagonalization in the occupation-number basis, sectors 0..n_max.
/// H = sum (-Q)(x,y) a_x^+ a_y + sum_{x<y} v(d) n_x n_y + sum_x v(0) n_x(n_x-1)/2,
/// rho1(x,y) = Tr(a_y^+ a_x e^{-beta(H - mu N)}) / Z.
FockResult fock_oracle(const BoseSystem& sys, int n_max);

/// Free density on the Dirichlet box {1..side}^d from the separable spectrum
/// 2 cos(pi k / (side + 1)) - 2 per coordinate.
double box_density(int d, int side, double beta, double mu);

struct TrendRow {
  int side = 0;
  double mu = 0.0;
  double density = 0.0;
};

struct CriticalTrend {
  int d = 0;
  double beta = 1.0;
  std::vector<TrendRow> rows;
  /// |rho(largest) - rho(second largest)| / rho(largest) at the mu closest to 0.
  double box_change = 0.0;
  /// rho(mu closest to 0) / rho(mu farthest from 0) on the largest box.
  double mu_ratio = 0.0;
  bool bounded = false;

  nlohmann::json to_json() const;
};

CriticalTrend critical_density_trend(int d, double beta, const std::vector<int>& sides,
                                     const std::vector<double>& mus);

}  // namespace loopsoup
