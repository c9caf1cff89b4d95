#include "loopsoup/soup.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "loopsoup/error.hpp"

namespace loopsoup {

namespace {

std::size_t pick(const std::vector<double>& cumulative, double u) {
  const double target = u * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

int pick_weighted(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw NumericError("sampling from an all-zero weight vector");
  double target = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    target -= weights[i];
    if (target < 0.0 && weights[i] > 0.0) return static_cast<int>(i);
  }
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return static_cast<int>(i);
  return 0;
}

double log_poisson(int m, double mean) {
  if (mean == 0.0) return m == 0 ? 0.0 : -INFINITY;
  return -mean + m * std::log(mean) - std::lgamma(m + 1.0);
}

}  // namespace

BridgeSampler::BridgeSampler(const Generator& q) {
  const Eigen::Index n = q.q.rows();
  rate_ = std::max(q.lambda.maxCoeff(), 1e-300) * (1.0 + 1e-6);
  r_ = Matrix::Identity(n, n) + q.q / rate_;
  powers_.push_back(Matrix::Identity(n, n));
}

int BridgeSampler::max_jumps(double mean) {
  return static_cast<int>(std::ceil(mean + 12.0 * std::sqrt(mean) + 30.0));
}

const Matrix& BridgeSampler::power(int m) const {
  std::lock_guard<std::mutex> lock(mutex_);
  while (static_cast<int>(powers_.size()) <= m) powers_.push_back(powers_.back() * r_);
  return powers_[static_cast<std::size_t>(m)];
}

std::vector<double> BridgeSampler::jump_count_weights(int x, int y, double t) const {
  const double mean = rate_ * t;
  const int top = max_jumps(mean);
  power(top);
  std::vector<double> w(static_cast<std::size_t>(top + 1));
  for (int m = 0; m <= top; ++m) w[static_cast<std::size_t>(m)] = std::exp(log_poisson(m, mean)) * power(m)(x, y);
  return w;
}

Loop BridgeSampler::finish(int x, const std::vector<int>& states, double t, Rng& rng) const {
  std::vector<double> times(states.size());
  for (auto& s : times) s = rng.uniform() * t;
  std::sort(times.begin(), times.end());
  Loop out;
  out.root = x;
  out.length = t;
  int cur = x;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i] == cur) continue;  // virtual self-jump
    cur = states[i];
    out.jump_times.push_back(times[i]);
    out.jump_states.push_back(cur);
  }
  return out;
}

Loop BridgeSampler::sample(int x, int y, double t, Rng& rng) const {
  if (!(t > 0.0)) throw ValidationError("bridge duration must be positive");
  const auto weights = jump_count_weights(x, y, t);
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 1e-300)) throw NumericError("bridge endpoint unreachable: p_t(x, y) = 0");
  const int m = pick_weighted(weights, rng);
  const int n = size();
  std::vector<int> states(static_cast<std::size_t>(m));
  std::vector<double> step(static_cast<std::size_t>(n));
  int cur = x;
  for (int i = 1; i <= m; ++i) {
    const Matrix& back = power(m - i);
    for (int z = 0; z < n; ++z) step[static_cast<std::size_t>(z)] = r_(cur, z) * back(z, y);
    cur = pick_weighted(step, rng);
    states[static_cast<std::size_t>(i - 1)] = cur;
  }
  return finish(x, states, t, rng);
}

Loop BridgeSampler::sample_genuine(int x, double t, Rng& rng) const {
  if (!(t > 0.0)) throw ValidationError("loop length must be positive");
  const double mean = rate_ * t;
  const int top = max_jumps(mean);
  power(top);
  const double stay = r_(x, x);
  // g_k = R^k(x,x) - stay^k: weight of k-step x -> x paths that leave x.
  std::vector<double> g(static_cast<std::size_t>(top + 1));
  std::vector<double> weights(static_cast<std::size_t>(top + 1));
  for (int k = 0; k <= top; ++k) {
    g[static_cast<std::size_t>(k)] = std::max(0.0, power(k)(x, x) - std::pow(stay, k));
    weights[static_cast<std::size_t>(k)] = std::exp(log_poisson(k, mean)) * g[static_cast<std::size_t>(k)];
  }
  const int m = pick_weighted(weights, rng);
  const int n = size();
  std::vector<int> states(static_cast<std::size_t>(m));
  std::vector<double> step(static_cast<std::size_t>(n));
  int cur = x;
  bool left = false;
  for (int i = 1; i <= m; ++i) {
    const int k = m - i;
    const Matrix& back = power(k);
    for (int z = 0; z < n; ++z) {
      double ahead = back(z, x);
      if (!left && z == x) ahead = g[static_cast<std::size_t>(k)];
      step[static_cast<std::size_t>(z)] = r_(cur, z) * ahead;
    }
    cur = pick_weighted(step, rng);
    if (cur != x) left = true;
    states[static_cast<std::size_t>(i - 1)] = cur;
  }
  return finish(x, states, t, rng);
}

nlohmann::json soup_to_json(const LoopSoup& soup) {
  nlohmann::json loops = nlohmann::json::array();
  for (const auto& l : soup.loops) loops.push_back(loop_to_json(l));
  return {{"measure", soup.measure},
          {"mu", soup.params.mu},
          {"beta", soup.params.beta},
          {"eps", soup.eps},
          {"seed", soup.seed},
          {"stream", soup.stream},
          {"loops", loops}};
}

BosonicSoupSampler::BosonicSoupSampler(const Generator& q, const LoopParams& p)
    : params_(p), n_(q.size()), bridges_(q) {
  mass_ = bosonic_total_mass(q, p);
  j_max_ = bosonic_series_cutoff(q, p, 1e-15 * std::max(mass_, 1e-300) / n_);
  const Matrix step = expm(p.beta * q.q);
  Matrix power = step;
  double acc = 0.0;
  cumulative_.reserve(static_cast<std::size_t>(j_max_ * n_));
  for (int j = 1; j <= j_max_; ++j) {
    if (j > 1) power = power * step;
    const double scale = std::exp(p.beta * p.mu * j) / j;
    for (int x = 0; x < n_; ++x) {
      acc += scale * std::max(0.0, power(x, x));
      cumulative_.push_back(acc);
    }
  }
}

Loop BosonicSoupSampler::sample_loop(Rng& rng) const {
  const std::size_t cell = pick(cumulative_, rng.uniform());
  const int j = static_cast<int>(cell) / n_ + 1;
  const int x = static_cast<int>(cell) % n_;
  return bridges_.sample(x, x, j * params_.beta, rng);
}

LoopSoup BosonicSoupSampler::sample(Rng& rng) const {
  LoopSoup soup;
  soup.measure = "bosonic";
  soup.params = params_;
  const auto count = rng.poisson(mass_);
  soup.loops.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) soup.loops.push_back(sample_loop(rng));
  return soup;
}

MarkovSoupSampler::MarkovSoupSampler(const Generator& q, double mu, double eps, bool genuine_only,
                                     int cells)
    : q_(q), mu_(mu), eps_(eps), genuine_(genuine_only), trace_(q.q), kernel_(q.q), bridges_(q) {
  if (mu > 0.0) throw ValidationError("mu must be <= 0");
  require_finite_mass(q, mu);
  if (eps < 0.0 || (!genuine_only && !(eps > 0.0)))
    throw ValidationError("Markovian soups need eps > 0 unless restricted to genuine loops");
  if (cells < 2) throw ValidationError("need at least two length cells");
  const double decay = -(mu + trace_.top());
  if (!(decay > 0.0)) throw NumericError("Markovian loop mass diverges at long lengths");

  // Small-t series for the genuine part, free of cancellation.
  const Eigen::Index n = q.q.rows();
  const double scale = std::max(norm1(q.q), 1e-300);
  series_radius_ = 0.25 / scale;
  if (genuine_) {
    Matrix power = Matrix::Identity(n, n);
    Vector dpow = Vector::Ones(n);
    double fact = 1.0;
    for (int k = 0; k <= 30; ++k) {
      if (k > 0) {
        power = power * q.q;
        dpow = dpow.cwiseProduct(q.diag);
        fact *= k;
      }
      series_.push_back((power.trace() - dpow.sum()) / fact);
    }
  }

  // Horizon where the certified tail n e^{-decay T} / (decay T) drops below 1e-14.
  const double lo = eps > 0.0 ? eps : std::min(1e-6 / scale, 1e-3 / decay);
  double hi = std::max(2.0 * lo, 1.0 / decay);
  while (static_cast<double>(n) * std::exp(-decay * hi) / (decay * hi) > 1e-14) hi *= 1.1;
  neglected_ = static_cast<double>(n) * std::exp(-decay * hi) / (decay * hi);

  nodes_.clear();
  const int log_cells = eps > 0.0 ? cells : cells - 1;
  if (!(eps > 0.0)) nodes_.push_back(0.0);
  for (int i = 0; i <= log_cells; ++i)
    nodes_.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / log_cells));

  auto f = [this](double t) { return density(t); };
  double acc = 0.0;
  for (std::size_t c = 0; c + 1 < nodes_.size(); ++c) {
    const double a = nodes_[c], b = nodes_[c + 1];
    acc += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 0);
    cumulative_.push_back(acc);
    double top = 0.0;
    for (int k = 0; k <= 8; ++k) top = std::max(top, density(a + (b - a) * (k == 0 ? 1e-12 : k / 8.0)));
    envelope_.push_back(1.25 * top);
  }
}

double MarkovSoupSampler::trace_part(double t) const {
  if (!genuine_) return trace_.trace(t);
  if (t < series_radius_) {
    double acc = 0.0, tk = 1.0;
    for (std::size_t k = 0; k < series_.size(); ++k) {
      acc += series_[k] * tk;
      tk *= t;
    }
    return std::max(0.0, acc);
  }
  double points = 0.0;
  for (Eigen::Index x = 0; x < q_.diag.size(); ++x) points += std::exp(t * q_.diag(x));
  return std::max(0.0, trace_.trace(t) - points);
}

double MarkovSoupSampler::density(double t) const {
  if (!(t > 0.0)) return 0.0;
  return std::exp(mu_ * t) / t * trace_part(t);
}

double MarkovSoupSampler::sample_length(Rng& rng) const {
  for (int attempt = 0; attempt < 1000000; ++attempt) {
    const std::size_t c = pick(cumulative_, rng.uniform());
    const double a = nodes_[c], b = nodes_[c + 1];
    const double t = a + (b - a) * rng.uniform();
    if (rng.uniform() * envelope_[c] <= density(t)) return t;
  }
  throw NumericError("loop length rejection sampler did not accept");
}

Loop MarkovSoupSampler::sample_loop(Rng& rng) const {
  const double t = sample_length(rng);
  const int n = q_.size();
  std::vector<double> weights(static_cast<std::size_t>(n));
  for (int x = 0; x < n; ++x) {
    double w = kernel_.entry(t, x, x);
    if (genuine_) w -= std::exp(t * q_.diag(x));
    weights[static_cast<std::size_t>(x)] = std::max(0.0, w);
  }
  const int x = pick_weighted(weights, rng);
  return genuine_ ? bridges_.sample_genuine(x, t, rng) : bridges_.sample(x, x, t, rng);
}

LoopSoup MarkovSoupSampler::sample(Rng& rng) const {
  LoopSoup soup;
  soup.measure = genuine_ ? "markov-genuine" : "markov";
  soup.params.mu = mu_;
  soup.eps = eps_;
  const auto count = rng.poisson(mass());
  soup.loops.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) soup.loops.push_back(sample_loop(rng));
  return soup;
}

Vector sample_point_field(const Generator& q, const LoopParams& p, LoopLaw law, Rng& rng) {
  const Eigen::Index n = q.q.rows();
  Vector out = Vector::Zero(n);
  for (Eigen::Index x = 0; x < n; ++x) {
    const double gap = -(q.diag(x) + p.mu);
    if (!(gap > 0.0)) throw ValidationError("point-loop field needs d(x) + mu < 0");
    if (law == LoopLaw::markov) {
      out(x) = rng.exponential(gap);
      continue;
    }
    // Point loops at x: Poisson(-log(1-c)) many, each with a logarithmic j.
    const double c = std::exp(-p.beta * gap);
    const double total = -std::log1p(-c);
    const auto count = rng.poisson(total);
    for (std::uint64_t i = 0; i < count; ++i) {
      double u = rng.uniform() * total;
      int j = 1;
      double term = c;
      while (u > term && j < 100000000) {
        u -= term;
        ++j;
        term *= c * (j - 1) / j;
      }
      out(x) += j * p.beta;
    }
  }
  return out;
}

Vector occupation_field(const LoopSoup& soup, int num_states) {
  Vector out = Vector::Zero(num_states);
  for (const auto& l : soup.loops) l.add_local_time(out);
  return out;
}

std::pair<LoopSoup, LoopSoup> split_point_genuine(const LoopSoup& soup) {
  LoopSoup point = soup, genuine = soup;
  point.loops.clear();
  genuine.loops.clear();
  for (const auto& l : soup.loops) (l.is_point() ? point : genuine).loops.push_back(l);
  return {point, genuine};
}

PairPotential::PairPotential(std::map<int, double> table) : table_(std::move(table)) {
  for (const auto& [r, v] : table_) {
    if (r < 0) throw ValidationError("pair potential distances must be >= 0");
    if (!std::isfinite(v)) throw ValidationError("pair potential values must be finite");
  }
}

double PairPotential::operator()(int r) const {
  const auto it = table_.find(r);
  return it == table_.end() ? 0.0 : it->second;
}

bool PairPotential::is_zero() const {
  for (const auto& [r, v] : table_)
    if (v != 0.0) return false;
  return true;
}

double PairPotential::min_value() const {
  double lo = 0.0;
  for (const auto& [r, v] : table_) lo = std::min(lo, v);
  return lo;
}

PairPotential PairPotential::from_json(const nlohmann::json& doc) {
  std::map<int, double> table;
  try {
    for (const auto& [key, value] : doc.items()) table[std::stoi(key)] = value.get<double>();
  } catch (const std::exception& e) {
    throw ValidationError(std::string("pair potential table: ") + e.what());
  }
  return PairPotential(std::move(table));
}

nlohmann::json PairPotential::to_json() const {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [r, v] : table_) out[std::to_string(r)] = v;
  return out;
}

namespace {

struct Leg {
  std::vector<double> starts;  // offsets in [0, beta), first is 0
  std::vector<int> states;
};

void append_legs(const Loop& path, double beta, std::vector<Leg>& legs) {
  const double k_real = path.length / beta;
  const long k = std::lround(k_real);
  if (k < 1 || std::abs(path.length - k * beta) > 1e-9 * beta)
    throw ValidationError("path length is not a positive multiple of beta");
  std::size_t next = 0;
  int state = path.root;
  for (long m = 0; m < k; ++m) {
    const double lo = m * beta, hi = (m + 1) * beta;
    Leg leg;
    while (next < path.jump_times.size() && path.jump_times[next] <= lo) state = path.jump_states[next++];
    leg.starts.push_back(0.0);
    leg.states.push_back(state);
    while (next < path.jump_times.size() && path.jump_times[next] < hi) {
      state = path.jump_states[next];
      leg.starts.push_back(path.jump_times[next] - lo);
      leg.states.push_back(state);
      ++next;
    }
    legs.push_back(std::move(leg));
  }
}

double pair_integral(const Leg& a, const Leg& b, const PairPotential& v, const Eigen::MatrixXi& d,
                     double beta) {
  double total = 0.0, t = 0.0;
  std::size_t i = 0, j = 0;
  while (t < beta) {
    const double na = i + 1 < a.starts.size() ? a.starts[i + 1] : beta;
    const double nb = j + 1 < b.starts.size() ? b.starts[j + 1] : beta;
    const double end = std::min(na, nb);
    total += (end - t) * v(d(a.states[i], b.states[j]));
    t = end;
    if (na <= end && i + 1 < a.starts.size()) ++i;
    if (nb <= end && j + 1 < b.starts.size()) ++j;
    if (end >= beta) break;
  }
  return total;
}

}  // namespace

double leg_interaction(const std::vector<const Loop*>& paths, const PairPotential& v,
                       const Eigen::MatrixXi& distance, double beta) {
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  std::vector<Leg> legs;
  for (const Loop* p : paths) append_legs(*p, beta, legs);
  if (v.is_zero()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < legs.size(); ++i)
    for (std::size_t j = i + 1; j < legs.size(); ++j) total += pair_integral(legs[i], legs[j], v, distance, beta);
  return total;
}

double leg_interaction(const std::vector<Loop>& loops, const PairPotential& v,
                       const Eigen::MatrixXi& distance, double beta) {
  std::vector<const Loop*> ptrs;
  ptrs.reserve(loops.size());
  for (const auto& l : loops) ptrs.push_back(&l);
  return leg_interaction(ptrs, v, distance, beta);
}

}  // namespace loopsoup
