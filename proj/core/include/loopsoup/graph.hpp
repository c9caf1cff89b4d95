#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "loopsoup/linalg.hpp"

namespace loopsoup {

/// Finite vertex set with nonnegative rates w(x,y) and killing kappa(x).
/// Vertex order is the declaration order and fixes every matrix index.
class WeightedGraph {
 public:
  WeightedGraph() = default;

  /// Validates: square shapes, finite nonnegative entries, zero diagonal,
  /// unique labels and irreducibility of the positive-weight digraph.
  WeightedGraph(std::vector<std::string> labels, Matrix weights, Vector killing);

  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(int x) const { return labels_.at(static_cast<std::size_t>(x)); }
  const Matrix& weights() const { return weights_; }
  const Vector& killing() const { return killing_; }

  /// lambda(x) = kappa(x) + sum_y w(x,y).
  Vector exit_rates() const;

  /// Index of a label; throws ValidationError naming the label if absent.
  int index_of(const std::string& label) const;

  /// Optional lattice coordinates (box and torus builders fill these).
  const std::vector<std::vector<int>>& coordinates() const { return coords_; }
  void set_coordinates(std::vector<std::vector<int>> coords);

  /// Hop distance on the undirected support of the weights (BFS). Used as
  /// |x - y| for pair potentials; on Dirichlet boxes it equals the l1 distance.
  Eigen::MatrixXi hop_distance() const;

 private:
  std::vector<std::string> labels_;
  Matrix weights_;
  Vector killing_;
  std::vector<std::vector<int>> coords_;
};

bool is_irreducible(const Matrix& weights);

WeightedGraph parse_graph(const nlohmann::json& doc);
WeightedGraph load_graph(const std::filesystem::path& path);
nlohmann::json graph_to_json(const WeightedGraph& g);

/// {0..L-1}^d with unit nearest-neighbour rates and Dirichlet killing
/// (kappa(x) = number of missing neighbours).
WeightedGraph dirichlet_box(int d, int side);

/// {-M..M}^d with periodic identification and unit nearest-neighbour rates.
WeightedGraph periodic_box(int d, int half_width, double killing = 0.0);

/// Sub-Markovian generator: off-diagonal q(x,y) >= 0, diagonal -lambda(x),
/// row sums -kappa(x).
struct Generator {
  Matrix q;
  Vector lambda;  // total exit rates
  Vector diag;    // q(x,x) = -lambda(x)

  int size() const { return static_cast<int>(q.rows()); }
  Vector killing() const { return -q.rowwise().sum(); }
};

Generator build_generator(const WeightedGraph& g);

/// Wraps an already assembled rate matrix (space-time generators). Checks
/// off-diagonal nonnegativity and nonpositive row sums.
Generator generator_from_matrix(Matrix q);

struct HeatKernel {
  double t = 0.0;
  Matrix matrix;
};

HeatKernel heat_kernel(const Generator& q, double t);

/// (-(Q + mu I))^{-1}. Throws NumericError when Q + mu I is singular.
Matrix green_function(const Generator& q, double mu);

/// tau -> P(X_t = tau | X_0 = 0) for the torus walk on Z/NZ with rate
/// N/beta up (and, if !directed, also down), via the circulant spectrum.
Vector torus_kernel(int n, double beta, double t, bool directed);

/// Single entry P(X_t = 0 | X_0 = 0) of torus_kernel in O(N).
double torus_return_probability(int n, double beta, double t, bool directed);

}  // namespace loopsoup
