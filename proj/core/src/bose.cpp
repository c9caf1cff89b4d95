#include "loopsoup/bose.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>

#include "loopsoup/error.hpp"
#include "loopsoup/parallel.hpp"

namespace loopsoup {

void BoseSystem::validate() const {
  params.validate();
  require_finite_mass(generator(), params.mu);
}

double log_partition_free(const BoseSystem& sys) {
  sys.validate();
  return bosonic_total_mass(sys.generator(), sys.params);
}

Matrix rdm_free(const BoseSystem& sys) {
  sys.validate();
  return bridge_green_matrix(sys.generator(), sys.params, LoopLaw::bosonic);
}

double rdm_free(const BoseSystem& sys, int x, int y) {
  const Matrix r = rdm_free(sys);
  if (x < 0 || y < 0 || x >= r.rows() || y >= r.rows()) throw ValidationError("vertex index out of range");
  return r(x, y);
}

double particle_density(const BoseSystem& sys) { return rdm_free(sys).trace() / sys.graph.size(); }

Estimate particle_density_mc(const BoseSystem& sys, std::size_t samples, std::uint64_t seed) {
  sys.validate();
  const Generator q = sys.generator();
  const BosonicSoupSampler soups(q, sys.params);
  const double scale = 1.0 / (sys.params.beta * q.size());
  return summarize(collect(samples, [&](std::size_t i) {
    Rng rng(seed, i);
    return occupation_field(soups.sample(rng), q.size()).sum() * scale;
  }));
}

namespace {

double max_share(const std::vector<double>& w) {
  double sum = 0.0, top = 0.0;
  for (double x : w) {
    sum += x;
    top = std::max(top, x);
  }
  return sum > 0.0 ? top / sum : 0.0;
}

// Exponentiates log weights after shifting by their maximum; returns the shift.
double exponentiate_shifted(std::vector<double>& logs) {
  const double shift = *std::max_element(logs.begin(), logs.end());
  if (!std::isfinite(shift)) throw NumericError("interaction energy is not finite");
  for (double& l : logs) l = std::exp(l - shift);
  return shift;
}

void check_stability(const BoseSystem& sys, double share, std::size_t samples) {
  if (sys.potential.min_value() < 0.0 && samples >= 100 && share > 0.5)
    throw NumericError("unstable pair potential: one soup carries more than half of the Monte Carlo weight");
}

}  // namespace

InteractingEstimate log_partition_interacting_mc(const BoseSystem& sys, std::size_t samples, std::uint64_t seed) {
  sys.validate();
  if (samples < 2) throw ValidationError("samples must be >= 2");
  const Generator q = sys.generator();
  const double log_free = bosonic_total_mass(q, sys.params);
  InteractingEstimate out;
  out.samples = samples;
  if (sys.potential.is_zero()) {
    out.value = log_free;
    return out;
  }
  const BosonicSoupSampler soups(q, sys.params);
  const Eigen::MatrixXi dist = sys.graph.hop_distance();
  std::vector<double> w = collect(samples, [&](std::size_t i) {
    Rng rng(seed, i);
    return -leg_interaction(soups.sample(rng).loops, sys.potential, dist, sys.params.beta);
  });
  const double shift = exponentiate_shifted(w);
  out.max_share = max_share(w);
  check_stability(sys, out.max_share, samples);
  const Estimate e = summarize(w);
  if (!(e.mean > 0.0)) throw NumericError("Monte Carlo mean of e^{-V} vanished");
  out.value = log_free + shift + std::log(e.mean);
  out.stderr_ = e.stderr_ / e.mean;
  return out;
}

InteractingEstimate rdm_interacting_mc(const BoseSystem& sys, int x, int y, std::size_t samples,
                                       std::uint64_t seed) {
  sys.validate();
  if (samples < 2) throw ValidationError("samples must be >= 2");
  const Generator q = sys.generator();
  const int n = q.size();
  if (x < 0 || y < 0 || x >= n || y >= n) throw ValidationError("vertex index out of range");
  const LoopParams& p = sys.params;
  const double free = bridge_green_matrix(q, p, LoopLaw::bosonic)(x, y);
  InteractingEstimate out;
  out.samples = samples;
  if (!(free > 0.0)) return out;
  if (sys.potential.is_zero()) {
    out.value = free;
    return out;
  }

  // Winding law of the open path.
  const int j_max = std::max(1, bosonic_series_cutoff(q, p, 1e-18));
  const Matrix step = expm(p.beta * q.q);
  std::vector<double> cumulative;
  Eigen::RowVectorXd row = step.row(x);
  double acc = 0.0;
  for (int j = 1; j <= j_max; ++j) {
    if (j > 1) row = row * step;
    acc += std::exp(p.beta * p.mu * j) * std::max(0.0, row(y));
    cumulative.push_back(acc);
  }

  const BosonicSoupSampler soups(q, p);
  const Eigen::MatrixXi dist = sys.graph.hop_distance();
  std::vector<double> num(samples), den(samples);
  parallel_for(samples, [&](std::size_t i) {
    Rng rng(seed, i);
    const LoopSoup soup = soups.sample(rng);
    const double u = rng.uniform() * cumulative.back();
    const int j = 1 + static_cast<int>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    const Loop path = soups.bridges().sample(x, y, std::min(j, j_max) * p.beta, rng);
    std::vector<const Loop*> all;
    all.reserve(soup.loops.size() + 1);
    for (const Loop& l : soup.loops) all.push_back(&l);
    den[i] = -leg_interaction(all, sys.potential, dist, p.beta);
    all.push_back(&path);
    num[i] = -leg_interaction(all, sys.potential, dist, p.beta);
  });
  const double scale = std::exp(exponentiate_shifted(num) - exponentiate_shifted(den));
  out.max_share = std::max(max_share(den), max_share(num));
  check_stability(sys, out.max_share, samples);
  if (!std::isfinite(scale)) throw NumericError("interaction energy is not finite");
  const Estimate ratio = ratio_estimate(num, den);
  out.value = free * scale * ratio.mean;
  out.stderr_ = free * scale * ratio.stderr_;
  return out;
}

nlohmann::json FockResult::to_json() const {
  nlohmann::json rho = nlohmann::json::array();
  for (Eigen::Index x = 0; x < rho1.rows(); ++x) {
    std::vector<double> r(static_cast<std::size_t>(rho1.cols()));
    for (Eigen::Index y = 0; y < rho1.cols(); ++y) r[static_cast<std::size_t>(y)] = rho1(x, y);
    rho.push_back(r);
  }
  return {{"log_z", log_z}, {"rho1", rho}, {"truncation_bound", truncation_bound},
          {"n_max", n_max}, {"dimension", dimension}};
}

namespace {

using Occupation = std::vector<int>;

void enumerate(int sites, int particles, Occupation& cur, int pos, std::vector<Occupation>& out) {
  if (pos == sites - 1) {
    cur[static_cast<std::size_t>(pos)] = particles;
    out.push_back(cur);
    return;
  }
  for (int k = particles; k >= 0; --k) {
    cur[static_cast<std::size_t>(pos)] = k;
    enumerate(sites, particles - k, cur, pos + 1, out);
  }
}

// Free N-particle traces h_N = tr_sym e^{beta Q} by Newton's identities.
std::vector<double> free_sector_traces(const Generator& q, double beta, int count) {
  const TraceKernel trace(q.q);
  std::vector<double> power(static_cast<std::size_t>(count) + 1), h(static_cast<std::size_t>(count) + 1);
  for (int k = 1; k <= count; ++k) power[static_cast<std::size_t>(k)] = trace.trace(k * beta);
  h[0] = 1.0;
  for (int m = 1; m <= count; ++m) {
    double s = 0.0;
    for (int k = 1; k <= m; ++k) s += power[static_cast<std::size_t>(k)] * h[static_cast<std::size_t>(m - k)];
    h[static_cast<std::size_t>(m)] = s / m;
  }
  return h;
}

}  // namespace

FockResult fock_oracle(const BoseSystem& sys, int n_max) {
  sys.validate();
  if (n_max < 0) throw ValidationError("n_max must be >= 0");
  const Generator q = sys.generator();
  const int n = q.size();
  const double beta = sys.params.beta, mu = sys.params.mu;
  const Eigen::MatrixXi dist = sys.graph.hop_distance();

  std::vector<std::vector<Occupation>> sectors(static_cast<std::size_t>(n_max) + 1);
  std::size_t dimension = 0;
  for (int m = 0; m <= n_max; ++m) {
    Occupation cur(static_cast<std::size_t>(n), 0);
    enumerate(n, m, cur, 0, sectors[static_cast<std::size_t>(m)]);
    dimension += sectors[static_cast<std::size_t>(m)].size();
    if (sectors[static_cast<std::size_t>(m)].size() > 5000)
      throw ValidationError("Fock sector dimension exceeds 5000; reduce n_max or the graph size");
  }

  double z = 0.0;
  Matrix rho = Matrix::Zero(n, n);
  for (int m = 0; m <= n_max; ++m) {
    const auto& basis = sectors[static_cast<std::size_t>(m)];
    const auto dim = static_cast<Eigen::Index>(basis.size());
    std::map<Occupation, Eigen::Index> index;
    for (Eigen::Index i = 0; i < dim; ++i) index[basis[static_cast<std::size_t>(i)]] = i;
    Matrix h = Matrix::Zero(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      const Occupation& occ = basis[static_cast<std::size_t>(i)];
      double diag = 0.0;
      for (int x = 0; x < n; ++x) {
        const double nx = occ[static_cast<std::size_t>(x)];
        diag += -q.q(x, x) * nx + sys.potential(0) * nx * (nx - 1.0) / 2.0;
        for (int y = x + 1; y < n; ++y) diag += sys.potential(dist(x, y)) * nx * occ[static_cast<std::size_t>(y)];
      }
      h(i, i) = diag;
      // a_x^+ a_y moves one particle from y to x: <occ'| H |occ> = -Q(x,y) sqrt(n_y (n_x + 1)).
      for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) {
          if (x == y || q.q(x, y) == 0.0 || occ[static_cast<std::size_t>(y)] == 0) continue;
          Occupation next = occ;
          next[static_cast<std::size_t>(y)] -= 1;
          next[static_cast<std::size_t>(x)] += 1;
          h(index.at(next), i) +=
              -q.q(x, y) * std::sqrt(static_cast<double>(occ[static_cast<std::size_t>(y)]) *
                                     (occ[static_cast<std::size_t>(x)] + 1));
        }
    }
    const Matrix e = expm(-beta * h);
    const double fug = std::exp(beta * mu * m);
    z += fug * e.trace();
    // Tr(a_y^+ a_x e) = sum_i <i| a_y^+ a_x e |i> = sum_i sqrt(.) e(j, i), j = i with one particle y -> x.
    for (Eigen::Index i = 0; i < dim; ++i) {
      const Occupation& occ = basis[static_cast<std::size_t>(i)];
      for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) {
          if (occ[static_cast<std::size_t>(y)] == 0) continue;
          double amp;
          Eigen::Index j;
          if (x == y) {
            amp = occ[static_cast<std::size_t>(x)];
            j = i;
          } else {
            Occupation next = occ;
            next[static_cast<std::size_t>(y)] -= 1;
            next[static_cast<std::size_t>(x)] += 1;
            j = index.at(next);
            amp = std::sqrt(static_cast<double>(occ[static_cast<std::size_t>(y)]) *
                            (occ[static_cast<std::size_t>(x)] + 1));
          }
          // <i| a_y^+ a_x |j> with |j> = |i> moved y -> x.
          rho(x, y) += fug * amp * e(j, i);
        }
    }
  }

  FockResult out;
  out.n_max = n_max;
  out.dimension = dimension;
  out.log_z = std::log(z);
  out.rho1 = rho / z;

  // Free tail sum_{m > n_max} e^{beta mu m} h_m, extended until negligible.
  int count = std::max(n_max + 16, 64);
  double tail = 0.0;
  for (int attempt = 0; attempt < 12; ++attempt) {
    const std::vector<double> hs = free_sector_traces(q, beta, count);
    tail = 0.0;
    double last = 0.0;
    for (int m = n_max + 1; m <= count; ++m) {
      last = std::exp(beta * mu * m) * hs[static_cast<std::size_t>(m)];
      tail += last;
    }
    if (last <= 1e-17 * std::max(tail, 1e-300) || last == 0.0) break;
    count *= 2;
  }
  out.truncation_bound = tail / z;
  return out;
}

double box_density(int d, int side, double beta, double mu) {
  if (d < 1 || d > 3) throw ValidationError("box dimension must be 1, 2 or 3");
  if (side < 1) throw ValidationError("box side must be >= 1");
  if (mu > 0.0 || !(beta > 0.0)) throw ValidationError("need mu <= 0 and beta > 0");
  std::vector<double> levels(static_cast<std::size_t>(side));
  for (int k = 1; k <= side; ++k)
    levels[static_cast<std::size_t>(k - 1)] = 2.0 * std::cos(std::numbers::pi * k / (side + 1)) - 2.0;
  auto occ = [&](double lambda) { return 1.0 / std::expm1(-beta * (lambda + mu)); };
  double sum = 0.0;
  if (d == 1) {
    for (double a : levels) sum += occ(a);
  } else if (d == 2) {
    for (double a : levels)
      for (double b : levels) sum += occ(a + b);
  } else {
    std::vector<double> part(levels.size());
    parallel_for(levels.size(), [&](std::size_t i) {
      double s = 0.0;
      for (double b : levels)
        for (double c : levels) s += occ(levels[i] + b + c);
      part[i] = s;
    });
    for (double s : part) sum += s;
  }
  return sum / std::pow(static_cast<double>(side), d);
}

nlohmann::json CriticalTrend::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) rs.push_back({{"side", r.side}, {"mu", r.mu}, {"density", r.density}});
  return {{"d", d},           {"beta", beta},         {"rows", rs},
          {"box_change", box_change}, {"mu_ratio", mu_ratio}, {"bounded", bounded}};
}

CriticalTrend critical_density_trend(int d, double beta, const std::vector<int>& sides,
                                     const std::vector<double>& mus) {
  if (sides.empty() || mus.empty()) throw ValidationError("need at least one box size and one mu");
  for (double mu : mus)
    if (!(mu < 0.0)) throw ValidationError("the trend needs mu < 0");
  std::vector<int> ss = sides;
  std::sort(ss.begin(), ss.end());
  std::vector<double> ms = mus;
  std::sort(ms.begin(), ms.end());  // most negative first
  CriticalTrend out;
  out.d = d;
  out.beta = beta;
  for (int side : ss)
    for (double mu : ms) out.rows.push_back({side, mu, box_density(d, side, beta, mu)});
  auto at = [&](std::size_t si, std::size_t mi) { return out.rows[si * ms.size() + mi].density; };
  const std::size_t last = ss.size() - 1, near = ms.size() - 1;
  if (ss.size() > 1)
    out.box_change = std::abs(at(last, near) - at(last - 1, near)) / at(last, near);
  out.mu_ratio = at(last, near) / at(last, 0);
  out.bounded = ss.size() > 1 && out.box_change < 0.05;
  return out;
}

}  // namespace loopsoup
