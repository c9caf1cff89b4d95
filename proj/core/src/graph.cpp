#include "loopsoup/graph.hpp"

#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include <unsupported/Eigen/FFT>

#include "loopsoup/error.hpp"

namespace loopsoup {

namespace {

std::vector<bool> reachable(const Matrix& w, bool forward) {
  const Eigen::Index n = w.rows();
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::queue<Eigen::Index> todo;
  seen[0] = true;
  todo.push(0);
  while (!todo.empty()) {
    const Eigen::Index x = todo.front();
    todo.pop();
    for (Eigen::Index y = 0; y < n; ++y) {
      const double rate = forward ? w(x, y) : w(y, x);
      if (rate > 0.0 && !seen[static_cast<std::size_t>(y)]) {
        seen[static_cast<std::size_t>(y)] = true;
        todo.push(y);
      }
    }
  }
  return seen;
}

}  // namespace

bool is_irreducible(const Matrix& weights) {
  if (weights.rows() <= 1) return true;
  // One strongly connected component <=> everything reachable from vertex 0
  // in the graph and in its transpose.
  for (bool forward : {true, false}) {
    const auto seen = reachable(weights, forward);
    for (bool s : seen)
      if (!s) return false;
  }
  return true;
}

WeightedGraph::WeightedGraph(std::vector<std::string> labels, Matrix weights, Vector killing)
    : labels_(std::move(labels)), weights_(std::move(weights)), killing_(std::move(killing)) {
  const auto n = static_cast<Eigen::Index>(labels_.size());
  if (n == 0) throw ValidationError("graph has no vertices");
  if (weights_.rows() != n || weights_.cols() != n || killing_.size() != n)
    throw ValidationError("graph weight/killing shapes do not match the vertex count");
  std::set<std::string> unique(labels_.begin(), labels_.end());
  if (static_cast<Eigen::Index>(unique.size()) != n)
    throw ValidationError("duplicate vertex label");
  for (Eigen::Index x = 0; x < n; ++x) {
    if (!std::isfinite(killing_(x)) || killing_(x) < 0.0)
      throw ValidationError("killing at '" + labels_[static_cast<std::size_t>(x)] +
                            "' must be finite and nonnegative");
    if (weights_(x, x) != 0.0)
      throw ValidationError("self-loop weight at '" + labels_[static_cast<std::size_t>(x)] + "'");
    for (Eigen::Index y = 0; y < n; ++y)
      if (!std::isfinite(weights_(x, y)) || weights_(x, y) < 0.0)
        throw ValidationError("negative or non-finite weight " +
                              labels_[static_cast<std::size_t>(x)] + " -> " +
                              labels_[static_cast<std::size_t>(y)]);
  }
  if (!is_irreducible(weights_)) throw ValidationError("graph is not irreducible");
}

Vector WeightedGraph::exit_rates() const { return killing_ + weights_.rowwise().sum(); }

int WeightedGraph::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) return static_cast<int>(i);
  throw ValidationError("unknown vertex label '" + label + "'");
}

void WeightedGraph::set_coordinates(std::vector<std::vector<int>> coords) {
  if (!coords.empty() && static_cast<int>(coords.size()) != size())
    throw ValidationError("coordinate list length does not match the vertex count");
  coords_ = std::move(coords);
}

Eigen::MatrixXi WeightedGraph::hop_distance() const {
  const int n = size();
  Eigen::MatrixXi dist = Eigen::MatrixXi::Constant(n, n, -1);
  for (int s = 0; s < n; ++s) {
    std::queue<int> todo;
    dist(s, s) = 0;
    todo.push(s);
    while (!todo.empty()) {
      const int x = todo.front();
      todo.pop();
      for (int y = 0; y < n; ++y) {
        if ((weights_(x, y) > 0.0 || weights_(y, x) > 0.0) && dist(s, y) < 0) {
          dist(s, y) = dist(s, x) + 1;
          todo.push(y);
        }
      }
    }
  }
  return dist;
}

WeightedGraph parse_graph(const nlohmann::json& doc) {
  try {
    if (!doc.is_object()) throw ValidationError("graph document must be an object");
    std::vector<std::string> labels;
    for (const auto& v : doc.at("vertices")) {
      if (v.is_string())
        labels.push_back(v.get<std::string>());
      else if (v.is_number_integer())
        labels.push_back(std::to_string(v.get<long long>()));
      else
        throw ValidationError("vertex labels must be strings or integers");
    }
    const auto n = static_cast<Eigen::Index>(labels.size());
    auto lookup = [&](const nlohmann::json& v) {
      const std::string key = v.is_string() ? v.get<std::string>() : v.dump();
      for (Eigen::Index i = 0; i < n; ++i)
        if (labels[static_cast<std::size_t>(i)] == key) return i;
      throw ValidationError("unknown vertex label '" + key + "'");
    };
    Matrix w = Matrix::Zero(n, n);
    Matrix seen = Matrix::Zero(n, n);
    if (doc.contains("edges")) {
      for (const auto& e : doc.at("edges")) {
        const Eigen::Index from = lookup(e.at("from"));
        const Eigen::Index to = lookup(e.at("to"));
        const double weight = e.at("weight").get<double>();
        if (weight < 0.0) throw ValidationError("negative weight on edge " + e.dump());
        if (from == to) {
          if (weight != 0.0) throw ValidationError("self-loop weight on edge " + e.dump());
          continue;
        }
        if (seen(from, to) != 0.0) throw ValidationError("duplicate edge " + e.dump());
        seen(from, to) = 1.0;
        w(from, to) = weight;
      }
    }
    Vector kappa = Vector::Zero(n);
    if (doc.contains("killing")) {
      for (const auto& [key, value] : doc.at("killing").items()) {
        kappa(lookup(nlohmann::json(key))) = value.get<double>();
      }
    }
    WeightedGraph g(std::move(labels), std::move(w), std::move(kappa));
    if (doc.contains("coordinates")) {
      std::vector<std::vector<int>> coords(static_cast<std::size_t>(n));
      for (const auto& [key, value] : doc.at("coordinates").items())
        coords[static_cast<std::size_t>(lookup(nlohmann::json(key)))] =
            value.get<std::vector<int>>();
      g.set_coordinates(std::move(coords));
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("graph document: ") + e.what());
  }
}

WeightedGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open graph file '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("graph file '" + path.string() + "': " + e.what());
  }
  return parse_graph(doc);
}

nlohmann::json graph_to_json(const WeightedGraph& g) {
  nlohmann::json doc;
  doc["vertices"] = g.labels();
  doc["edges"] = nlohmann::json::array();
  doc["killing"] = nlohmann::json::object();
  for (int x = 0; x < g.size(); ++x) {
    for (int y = 0; y < g.size(); ++y)
      if (g.weights()(x, y) > 0.0)
        doc["edges"].push_back({{"from", g.label(x)}, {"to", g.label(y)}, {"weight", g.weights()(x, y)}});
    if (g.killing()(x) != 0.0) doc["killing"][g.label(x)] = g.killing()(x);
  }
  return doc;
}

namespace {

std::vector<std::vector<int>> lattice_points(int d, int lo, int hi) {
  std::vector<std::vector<int>> pts{{}};
  for (int k = 0; k < d; ++k) {
    std::vector<std::vector<int>> next;
    for (const auto& p : pts)
      for (int c = lo; c <= hi; ++c) {
        auto q = p;
        q.push_back(c);
        next.push_back(std::move(q));
      }
    pts = std::move(next);
  }
  return pts;
}

std::string point_label(const std::vector<int>& p) {
  std::ostringstream s;
  for (std::size_t i = 0; i < p.size(); ++i) s << (i ? "," : "") << p[i];
  return s.str();
}

}  // namespace

WeightedGraph dirichlet_box(int d, int side) {
  if (d < 1 || side < 1) throw ValidationError("box needs d >= 1 and side >= 1");
  auto pts = lattice_points(d, 0, side - 1);
  const auto n = static_cast<Eigen::Index>(pts.size());
  auto index = [&](const std::vector<int>& p) {
    Eigen::Index i = 0;
    for (int c : p) i = i * side + c;
    return i;
  };
  Matrix w = Matrix::Zero(n, n);
  Vector kappa = Vector::Zero(n);
  std::vector<std::string> labels;
  for (const auto& p : pts) {
    labels.push_back(point_label(p));
    const Eigen::Index x = index(p);
    for (int k = 0; k < d; ++k)
      for (int step : {-1, 1}) {
        auto q = p;
        q[static_cast<std::size_t>(k)] += step;
        if (q[static_cast<std::size_t>(k)] < 0 || q[static_cast<std::size_t>(k)] >= side)
          kappa(x) += 1.0;
        else
          w(x, index(q)) = 1.0;
      }
  }
  WeightedGraph g(std::move(labels), std::move(w), std::move(kappa));
  g.set_coordinates(std::move(pts));
  return g;
}

WeightedGraph periodic_box(int d, int half_width, double killing) {
  if (d < 1 || half_width < 1) throw ValidationError("periodic box needs d >= 1 and M >= 1");
  const int side = 2 * half_width + 1;
  auto pts = lattice_points(d, -half_width, half_width);
  const auto n = static_cast<Eigen::Index>(pts.size());
  auto index = [&](const std::vector<int>& p) {
    Eigen::Index i = 0;
    for (int c : p) i = i * side + (c + half_width);
    return i;
  };
  Matrix w = Matrix::Zero(n, n);
  std::vector<std::string> labels;
  for (const auto& p : pts) {
    labels.push_back(point_label(p));
    for (int k = 0; k < d; ++k)
      for (int step : {-1, 1}) {
        auto q = p;
        int& c = q[static_cast<std::size_t>(k)];
        c = ((c + step + half_width) % side + side) % side - half_width;
        w(index(p), index(q)) = 1.0;
      }
  }
  WeightedGraph g(std::move(labels), std::move(w), Vector::Constant(n, killing));
  g.set_coordinates(std::move(pts));
  return g;
}

Generator build_generator(const WeightedGraph& g) {
  Generator out;
  out.lambda = g.exit_rates();
  out.q = g.weights();
  out.q.diagonal() = -out.lambda;
  out.diag = out.q.diagonal();
  return out;
}

Generator generator_from_matrix(Matrix q) {
  if (q.rows() != q.cols() || q.rows() == 0) throw ValidationError("generator must be square");
  for (Eigen::Index x = 0; x < q.rows(); ++x) {
    for (Eigen::Index y = 0; y < q.cols(); ++y)
      if (x != y && !(q(x, y) >= 0.0)) throw ValidationError("generator has a negative rate");
    if (q.row(x).sum() > 1e-9 * std::max(1.0, std::abs(q(x, x))))
      throw ValidationError("generator row sum is positive");
  }
  Generator out;
  out.q = std::move(q);
  out.diag = out.q.diagonal();
  out.lambda = -out.diag;
  return out;
}

HeatKernel heat_kernel(const Generator& q, double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("heat kernel time must be >= 0");
  const Eigen::Index n = q.q.rows();
  if (t == 0.0) return {0.0, Matrix::Identity(n, n)};
  return {t, expm(t * q.q)};
}

Matrix green_function(const Generator& q, double mu) {
  const Eigen::Index n = q.q.rows();
  const Matrix a = -(q.q + mu * Matrix::Identity(n, n));
  Eigen::PartialPivLU<Matrix> lu(a);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14))
    throw NumericError("-(Q + mu I) is singular; need kappa(x) - mu > 0 for some x");
  return lu.inverse();
}

namespace {

Complex torus_mode(int n, double beta, double t, bool directed, int k) {
  const double rate = n / beta;
  const double theta = 2.0 * M_PI * k / n;
  if (directed) return std::exp(t * rate * (std::polar(1.0, theta) - 1.0));
  return Complex(std::exp(t * rate * (2.0 * std::cos(theta) - 2.0)), 0.0);
}

}  // namespace

Vector torus_kernel(int n, double beta, double t, bool directed) {
  if (n < 1) throw ValidationError("torus size must be >= 1");
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  if (!(t >= 0.0)) throw ValidationError("torus kernel time must be >= 0");
  Vector out = Vector::Zero(n);
  if (t == 0.0 || n == 1) {
    out(0) = 1.0;
    return out;
  }
  std::vector<Complex> modes(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) modes[static_cast<std::size_t>(k)] = torus_mode(n, beta, t, directed, k);
  // P(tau) = (1/N) sum_k exp(t lambda_k) e^{-2 pi i k tau / N} is a forward DFT.
  Eigen::FFT<double> fft;
  std::vector<Complex> values;
  fft.fwd(values, modes);
  for (int tau = 0; tau < n; ++tau)
    out(tau) = std::max(0.0, values[static_cast<std::size_t>(tau)].real() / n);
  return out;
}

double torus_return_probability(int n, double beta, double t, bool directed) {
  if (n < 1) throw ValidationError("torus size must be >= 1");
  if (t == 0.0 || n == 1) return 1.0;
  double acc = 0.0;
  for (int k = 0; k < n; ++k) acc += torus_mode(n, beta, t, directed, k).real();
  return std::max(0.0, acc / n);
}

}  // namespace loopsoup
