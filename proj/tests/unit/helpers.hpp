#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "loopsoup/graph.hpp"
#include "loopsoup/rng.hpp"

namespace testing {

using loopsoup::Matrix;
using loopsoup::Vector;
using loopsoup::WeightedGraph;

inline WeightedGraph single(double kappa) {
  return WeightedGraph({"x"}, Matrix::Zero(1, 1), Vector::Constant(1, kappa));
}

// Two vertices, unit weights both ways.
inline WeightedGraph pair(double ka = 0.0, double kb = 0.0) {
  Matrix w(2, 2);
  w << 0, 1, 1, 0;
  Vector k(2);
  k << ka, kb;
  return WeightedGraph({"a", "b"}, w, k);
}

// w(a,b) = 2, w(b,a) = 1, kappa(a) = 0.5.
inline WeightedGraph skewed(double ka = 0.5) {
  Matrix w(2, 2);
  w << 0, 2, 1, 0;
  Vector k(2);
  k << ka, 0.0;
  return WeightedGraph({"a", "b"}, w, k);
}

// Random irreducible graph: a directed cycle plus random extra edges, rates
// in (0.2, 2), killing on a random subset (at least one vertex).
inline WeightedGraph random_graph(std::uint64_t seed, int n, bool symmetric = false) {
  loopsoup::Rng rng(seed, 0);
  Matrix w = Matrix::Zero(n, n);
  for (int x = 0; x < n && n > 1; ++x) w(x, (x + 1) % n) = 0.2 + 1.8 * rng.uniform();
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      if (x != y && rng.uniform() < 0.35) w(x, y) = 0.2 + 1.8 * rng.uniform();
  if (symmetric) w = (w + w.transpose()).eval() / 2.0;
  Vector k = Vector::Zero(n);
  for (int x = 0; x < n; ++x)
    if (rng.uniform() < 0.4) k(x) = 0.1 + rng.uniform();
  if (k.sum() == 0.0) k(0) = 0.5;
  std::vector<std::string> labels;
  for (int x = 0; x < n; ++x) labels.push_back("v" + std::to_string(x));
  return WeightedGraph(labels, w, k);
}

// Kolmogorov-Smirnov distance to Exp(rate).
inline double ks_exponential(std::vector<double> xs, double rate) {
  std::sort(xs.begin(), xs.end());
  double d = 0.0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = -std::expm1(-rate * xs[i]);
    d = std::max({d, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  return d;
}

}  // namespace testing
