#include "loopsoup/spacetime.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <boost/math/distributions/gamma.hpp>
#include <Eigen/Eigenvalues>

#include "loopsoup/error.hpp"
#include "loopsoup/parallel.hpp"
#include "loopsoup/quadrature.hpp"
#include "loopsoup/rng.hpp"

namespace loopsoup {

namespace {

constexpr int kDenseLimit = 4096;

std::string format17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

Variant Variant::parse(const std::string& name, std::uint64_t seed) {
  Variant v;
  v.seed = seed;
  if (name == "independent") {
    v.kind = VariantKind::independent;
  } else if (name == "perturbed" || name == "perturbed-weak") {
    v.kind = VariantKind::perturbed;
    v.schedule = PerturbationSchedule::weak;
  } else if (name == "perturbed-strong") {
    v.kind = VariantKind::perturbed;
    v.schedule = PerturbationSchedule::strong;
  } else if (name == "symmetrized") {
    v.kind = VariantKind::symmetrized;
  } else if (name == "periodic_mixing" || name == "periodic-mixing") {
    v.kind = VariantKind::periodic_mixing;
  } else {
    throw ValidationError("unknown space-time variant '" + name + "'");
  }
  return v;
}

std::string Variant::name() const {
  switch (kind) {
    case VariantKind::independent: return "independent";
    case VariantKind::perturbed:
      return schedule == PerturbationSchedule::weak ? "perturbed-weak" : "perturbed-strong";
    case VariantKind::symmetrized: return "symmetrized";
    case VariantKind::periodic_mixing: return "periodic_mixing";
  }
  return "unknown";
}

double perturbation_log_bound(PerturbationSchedule s, int n, int base_size, double beta,
                              double max_lambda) {
  if (s == PerturbationSchedule::weak)
    return -2.0 * n * base_size * std::log(static_cast<double>(n)) - std::log(static_cast<double>(n));
  const double alpha = 2.0 * std::max(max_lambda, 1.0) / beta;
  return -alpha * n * static_cast<double>(n) - std::log(static_cast<double>(n));
}

namespace {

void check_periodic_base(const WeightedGraph& base) {
  const auto& coords = base.coordinates();
  if (coords.empty() || coords.front().empty())
    throw ValidationError("periodic mixing needs a periodic box base with lattice coordinates");
  const auto d = static_cast<Eigen::Index>(coords.front().size());
  const Matrix& w = base.weights();
  double common = -1.0;
  for (Eigen::Index x = 0; x < w.rows(); ++x) {
    Eigen::Index degree = 0;
    for (Eigen::Index y = 0; y < w.cols(); ++y) {
      if (w(x, y) <= 0.0) continue;
      ++degree;
      if (common < 0.0) common = w(x, y);
      if (w(x, y) != common || w(y, x) != common)
        throw ValidationError("periodic mixing needs equal symmetric nearest-neighbour weights");
    }
    if (degree != 2 * d && !(w.rows() == 2 && degree == 1))
      throw ValidationError("periodic mixing needs a periodic box base (2d neighbours per site)");
    if (base.killing()(x) != base.killing()(0))
      throw ValidationError("periodic mixing needs spatially uniform killing");
  }
}

}  // namespace

SpaceTimeGraph build_spacetime(const WeightedGraph& base, int n, double beta, const Variant& variant) {
  if (n < 1) throw ValidationError("torus size N must be >= 1");
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  SpaceTimeGraph st;
  st.base = base;
  st.n = n;
  st.beta = beta;
  st.variant = variant;
  const int m = base.size();
  const int size = m * n;
  if (variant.kind == VariantKind::perturbed && size > kDenseLimit)
    throw ValidationError("perturbed space-time generator exceeds the dense limit of 4096 states");
  const double r = n / beta;
  const Matrix& w = base.weights();
  const Vector& kappa = base.killing();
  Matrix q = Matrix::Zero(size, size);
  auto idx = [n](int x, int tau) { return x * n + tau; };
  auto up = [n](int tau) { return (tau + 1) % n; };
  auto down = [n](int tau) { return (tau + n - 1) % n; };

  if (variant.kind == VariantKind::periodic_mixing) {
    check_periodic_base(base);
    for (int x = 0; x < m; ++x) {
      const double out = w.row(x).sum();
      for (int tau = 0; tau < n; ++tau) {
        for (int y = 0; y < m; ++y)
          if (w(x, y) > 0.0) q(idx(x, tau), idx(y, up(tau))) += r * w(x, y) / out;
      }
    }
  } else {
    for (int x = 0; x < m; ++x)
      for (int tau = 0; tau < n; ++tau) {
        for (int y = 0; y < m; ++y)
          if (y != x) q(idx(x, tau), idx(y, tau)) = w(x, y);
        if (n > 1) {
          q(idx(x, tau), idx(x, up(tau))) += r;
          if (variant.kind == VariantKind::symmetrized) q(idx(x, tau), idx(x, down(tau))) += r;
        }
      }
  }
  for (int s = 0; s < size; ++s) q(s, s) = 0.0;

  if (variant.kind == VariantKind::perturbed) {
    const double log_bound = perturbation_log_bound(variant.schedule, n, m, beta,
                                                    base.exit_rates().maxCoeff());
    double bound = std::exp(log_bound);
    if (!(log_bound > std::log(1e-300))) {
      bound = 1e-300;
      st.norm_floored = true;
    }
    Matrix e = Matrix::Zero(size, size);
    Rng rng(variant.seed, static_cast<std::uint64_t>(n));
    for (int a = 0; a < size; ++a)
      for (int b = 0; b < size; ++b)
        if (a != b) e(a, b) = rng.uniform();
    const double norm = norm1(e);
    if (norm > 0.0) e *= bound / norm;
    st.perturbation_norm = norm1(e);
    q += e;
  }
  // Diagonal compensation keeps row sums at -kappa.
  for (int x = 0; x < m; ++x)
    for (int tau = 0; tau < n; ++tau) {
      const int s = idx(x, tau);
      q(s, s) = -(q.row(s).sum() + kappa(x));
    }
  st.generator = generator_from_matrix(std::move(q));
  return st;
}

double projected_fdd_dense(const SpaceTimeGraph& st, double mu, const FddQuery& query, double abs_tol) {
  if (mu > 0.0) throw ValidationError("mu must be <= 0");
  query.validate(st.base.size());
  const int size = st.states();
  if (size > kDenseLimit) throw ValidationError("space-time state space exceeds 4096 states");
  const int n = st.n;
  const Matrix& g = st.generator.q;
  auto block = [&](const Matrix& full, int x, int y) { return Matrix(full.block(x * n, y * n, n, n)); };

  Matrix chain = Matrix::Identity(n, n);
  for (std::size_t i = 0; i + 1 < query.times.size(); ++i) {
    const Matrix step = expm((query.times[i + 1] - query.times[i]) * g);
    chain = chain * block(step, query.states[i], query.states[i + 1]);
  }
  const double delta = query.span();
  const int xk = query.states.back(), x1 = query.states.front();

  // tr(chain * e^{sG}[x_k block, x_1 block]) = sum_i w_i e^{s lambda_i}.
  Eigen::EigenSolver<Matrix> es(g);
  const CVector lambda = es.eigenvalues();
  const CMatrix v = es.eigenvectors();
  const CMatrix v_inv = v.partialPivLu().inverse();
  const double probe = 1.0 / std::max(1.0, g.diagonal().cwiseAbs().maxCoeff());
  const Matrix check = (v * (probe * lambda).array().exp().matrix().asDiagonal() * v_inv).real();
  const bool spectral = (check - expm(probe * g)).cwiseAbs().maxCoeff() <= 1e-11;

  CVector weights = CVector::Zero(size);
  if (spectral) {
    const CMatrix left = v_inv.middleCols(x1 * n, n) * chain.cast<Complex>();
    const CMatrix right = v.middleRows(xk * n, n);
    for (int i = 0; i < size; ++i) {
      Complex acc(0.0, 0.0);
      for (int a = 0; a < n; ++a) acc += left(i, a) * right(a, i);
      weights(i) = acc;
    }
  }
  auto trace_at = [&](double s) {
    if (s <= 0.0) return chain.block(0, 0, n, n).trace() * (xk == x1 ? 1.0 : 0.0);
    if (spectral) {
      Complex acc(0.0, 0.0);
      for (int i = 0; i < size; ++i) acc += weights(i) * std::exp(s * lambda(i));
      return acc.real();
    }
    return (chain * block(expm(s * g), xk, x1)).trace();
  };
  auto f = [&](double t) { return std::exp(mu * t) / t * std::max(0.0, trace_at(t - delta)); };

  double total = 0.0;
  for (const auto& iv : query.lengths.intervals()) {
    if (!(iv.hi > iv.lo)) continue;
    if (std::isfinite(iv.hi)) {
      total += integrate(f, iv.lo, iv.hi, abs_tol).value;
    } else {
      const DecayBound db = decay_bound(st.generator, mu);
      const double chain_norm = chain.cwiseAbs().rowwise().sum().maxCoeff();
      const double pref = n * chain_norm * db.prefactor * std::exp((db.rate + mu) * delta);
      total += integrate_to_infinity(f, iv.lo, db.rate, pref, abs_tol);
    }
  }
  return total;
}

double projected_fdd_exact(const SpaceTimeGraph& st, double mu, const FddQuery& query, double abs_tol) {
  const VariantKind kind = st.variant.kind;
  if (kind != VariantKind::independent && kind != VariantKind::symmetrized)
    return projected_fdd_dense(st, mu, query, abs_tol);
  if (mu > 0.0) throw ValidationError("mu must be <= 0");
  query.validate(st.base.size());
  const Generator g = build_generator(st.base);
  const double chain = query.chain_weight(g);
  if (chain == 0.0) return 0.0;
  const KernelEvaluator kernel(g.q);
  const double delta = query.span();
  const int xk = query.states.back(), x1 = query.states.front();
  const bool directed = kind == VariantKind::independent;
  const int n = st.n;
  auto f = [&](double t) {
    return std::exp(mu * t) / t * kernel.entry(t - delta, xk, x1) * n *
           torus_return_probability(n, st.beta, t, directed);
  };
  double total = 0.0;
  const double tol = abs_tol / std::max(chain, 1e-300);
  for (const auto& iv : query.lengths.intervals()) {
    if (!(iv.hi > iv.lo)) continue;
    if (std::isfinite(iv.hi)) {
      total += integrate(f, iv.lo, iv.hi, tol, 20000).value;
    } else {
      const DecayBound db = decay_bound(g, mu);
      const double pref = n * db.prefactor * std::exp((db.rate + mu) * delta);
      total += integrate_to_infinity(f, iv.lo, db.rate, pref, tol, st.beta / 4.0);
    }
  }
  return chain * total;
}

double projected_fdd_gamma_mixture(const WeightedGraph& base, int n, double beta, double mu,
                                   const FddQuery& query, double abs_tol) {
  if (n < 1) throw ValidationError("torus size N must be >= 1");
  query.validate(base.size());
  const Generator g = build_generator(base);
  const double chain = query.chain_weight(g);
  if (chain == 0.0) return 0.0;
  const KernelEvaluator kernel(g.q);
  const double delta = query.span();
  const int xk = query.states.back(), x1 = query.states.front();
  const double rate = n / beta;
  const bool bounded = query.lengths.bounded();
  const double top = bounded ? query.lengths.intervals().back().hi : INFINITY;
  DecayBound db{};
  if (!bounded) db = decay_bound(g, mu);

  double total = 0.0;
  for (long j = 0;; ++j) {
    const double shape = static_cast<double>(j) * n + 1.0;
    const boost::math::gamma_distribution<double> law(shape, 1.0 / rate);
    const double mean = shape / rate, sd = std::sqrt(shape) / rate;
    const double lo_window = std::max(0.0, mean - 40.0 * sd);
    const double hi_window = mean + 40.0 * sd;
    if (bounded && lo_window >= top) break;
    if (!bounded) {
      const double start = std::max(lo_window, query.lengths.infimum());
      const double bound = beta * db.prefactor * std::exp((db.rate + mu) * delta) *
                           std::exp(-db.rate * start) / start;
      if (lo_window > query.lengths.infimum() && bound < 1e-17) break;
    }
    if (j > 10000000) throw NumericError("gamma mixture did not terminate");
    auto f = [&](double t) {
      return boost::math::pdf(law, t) * kernel.entry(t - delta, xk, x1) * std::exp(mu * t) / t;
    };
    // Panels of width 4 sd so the adaptive rule always sees the peak.
    for (const auto& iv : query.lengths.intervals()) {
      for (int k = -40; k < 40; k += 4) {
        const double a = std::max({iv.lo, lo_window, mean + k * sd});
        const double b = std::min({iv.hi, hi_window, mean + (k + 4) * sd});
        if (b > a) total += beta * integrate(f, a, b, abs_tol / std::max(chain, 1e-300) / 20.0, 20000).value;
      }
    }
  }
  return chain * total;
}

Vector jump_chain_stationary(const WeightedGraph& base) {
  const int m = base.size();
  Matrix p = base.weights();
  for (int x = 0; x < m; ++x) {
    const double out = p.row(x).sum();
    if (out > 0.0) p.row(x) /= out;
  }
  if (m == 1) return Vector::Ones(1);
  // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
  Matrix a = p.transpose() - Matrix::Identity(m, m);
  a.row(m - 1).setOnes();
  Vector rhs = Vector::Zero(m);
  rhs(m - 1) = 1.0;
  return a.partialPivLu().solve(rhs);
}

double torus_limit_value(const WeightedGraph& base, double mu, double beta, const FddQuery& query,
                         const Variant& variant) {
  query.validate(base.size());
  switch (variant.kind) {
    case VariantKind::independent:
    case VariantKind::perturbed:
      return bosonic_fdd(build_generator(base), LoopParams{mu, beta}, query);
    case VariantKind::symmetrized: return 0.0;
    case VariantKind::periodic_mixing: {
      check_periodic_base(base);
      const Vector pi = jump_chain_stationary(base);
      double weight = 1.0;
      for (int x : query.states) weight *= pi(x);
      const double decay = mu - base.killing()(0);
      if (!query.lengths.bounded() && !(decay < 0.0))
        throw NumericError("periodic mixing limit diverges: need kappa - mu > 0");
      double sum = 0.0;
      const double inf = query.lengths.infimum();
      if (!std::isfinite(inf)) return 0.0;
      for (long j = std::max(1L, static_cast<long>(std::ceil(inf / beta - 1e-12)));; ++j) {
        const double len = j * beta;
        if (query.lengths.bounded() && len >= query.lengths.intervals().back().hi) break;
        const double term = std::exp(decay * len) / j;
        if (query.lengths.contains(len)) sum += term;
        if (term < 1e-18 * std::max(sum, 1e-300) || term == 0.0) break;
      }
      return weight * sum;
    }
  }
  return 0.0;
}

int torus_jumps(const SpaceTimeGraph& st, const Loop& loop) {
  int count = 0, cur = loop.root;
  for (int s : loop.jump_states) {
    if (st.torus(s) != st.torus(cur)) ++count;
    cur = s;
  }
  return count;
}

int winding(const SpaceTimeGraph& st, const Loop& loop) {
  long displacement = 0;
  int cur = loop.root;
  const int n = st.n;
  for (int s : loop.jump_states) {
    int d = ((st.torus(s) - st.torus(cur)) % n + n) % n;
    if (2 * d > n) d -= n;
    displacement += d;
    cur = s;
  }
  if (displacement % n != 0) throw ValidationError("space-time path is not a loop on the torus");
  return static_cast<int>(displacement / n);
}

Loop project_loop(const SpaceTimeGraph& st, const Loop& loop) {
  Loop out;
  out.root = st.space(loop.root);
  out.length = loop.length;
  int cur = out.root;
  for (std::size_t i = 0; i < loop.jump_states.size(); ++i) {
    const int x = st.space(loop.jump_states[i]);
    if (x == cur) continue;
    out.jump_times.push_back(loop.jump_times[i]);
    out.jump_states.push_back(x);
    cur = x;
  }
  return out;
}

LocalTimeSplit split_local_time(const SpaceTimeGraph& st, const Loop& loop) {
  const int m = st.base.size();
  LocalTimeSplit out{Vector::Zero(m), Vector::Zero(m), Vector::Zero(m), Vector::Zero(m)};
  bool spatial = false, torus = false;
  int cur = loop.root;
  for (int s : loop.jump_states) {
    if (st.space(s) != st.space(cur)) spatial = true;
    if (st.torus(s) != st.torus(cur)) torus = true;
    cur = s;
  }
  Vector& target = spatial ? (torus ? out.both : out.space_only) : (torus ? out.torus_only : out.none);
  project_loop(st, loop).add_local_time(target);
  return out;
}

WindingDiagnostics winding_diagnostics(const SpaceTimeGraph& st, double mu, std::size_t samples,
                                       std::uint64_t seed) {
  if (samples < 1) throw ValidationError("winding diagnostics need samples >= 1");
  if (mu > 0.0) throw ValidationError("mu must be <= 0");
  const int m = st.base.size();
  const int n = st.n;
  const int size = st.states();
  const Matrix& g = st.generator.q;
  // Sparse rows: targets and cumulative rates.
  std::vector<std::vector<int>> targets(static_cast<std::size_t>(size));
  std::vector<std::vector<double>> cumulative(static_cast<std::size_t>(size));
  Vector total(size);
  for (int s = 0; s < size; ++s) {
    double acc = 0.0;
    for (int u = 0; u < size; ++u) {
      if (u == s || g(s, u) <= 0.0) continue;
      acc += g(s, u);
      targets[static_cast<std::size_t>(s)].push_back(u);
      cumulative[static_cast<std::size_t>(s)].push_back(acc);
    }
    total(s) = -g(s, s) - mu;
  }
  const long cap = 200L * n + 10000;

  struct Outcome {
    int end = -1;  // spatial endpoint, -1 when killed or capped
    bool capped = false;
    double w = 0.0;
  };
  std::vector<Outcome> outcomes(static_cast<std::size_t>(m) * samples);
  parallel_for(outcomes.size(), [&](std::size_t k) {
    Rng rng(seed, k);
    const int x = static_cast<int>(k / samples);
    const int tau0 = static_cast<int>(rng.uniform() * n) % n;
    int s = st.index(x, tau0);
    Outcome out;
    for (long step = 0; step < cap; ++step) {
      const double rate = total(s);
      if (!(rate > 0.0)) break;
      out.w += rng.exponential(rate);
      const auto& cum = cumulative[static_cast<std::size_t>(s)];
      const double u = rng.uniform() * rate;
      if (cum.empty() || u >= cum.back()) return void(outcomes[k] = Outcome{});  // killed
      const std::size_t pick = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
      const int from = st.torus(s);
      s = targets[static_cast<std::size_t>(s)][std::min(pick, cum.size() - 1)];
      if (st.torus(s) == tau0 && from != tau0) {
        out.end = st.space(s);
        outcomes[k] = out;
        return;
      }
    }
    out.capped = true;
    out.end = -1;
    outcomes[k] = out;
  });

  WindingDiagnostics d;
  d.samples_per_start = samples;
  d.d_hat = Matrix::Zero(m, m);
  d.d_stderr = Matrix::Zero(m, m);
  d.time_var = Matrix::Constant(m, m, std::nan(""));
  d.time_var_stderr = Matrix::Constant(m, m, std::nan(""));
  d.counts = Eigen::MatrixXi::Zero(m, m);
  Matrix sum = Matrix::Zero(m, m), sum_sq = Matrix::Zero(m, m);
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    const Outcome& o = outcomes[k];
    if (o.capped) ++d.capped;
    if (o.end < 0) continue;
    const int x = static_cast<int>(k / samples);
    const double dev = (st.beta - o.w) * (st.beta - o.w);
    d.counts(x, o.end) += 1;
    sum(x, o.end) += dev;
    sum_sq(x, o.end) += dev * dev;
  }
  if (d.counts.sum() == 0) throw NumericError("no wind-1 excursion observed within the step cap");
  for (int x = 0; x < m; ++x)
    for (int y = 0; y < m; ++y) {
      const double p = static_cast<double>(d.counts(x, y)) / samples;
      d.d_hat(x, y) = p;
      d.d_stderr(x, y) = std::sqrt(p * (1.0 - p) / samples);
      const int c = d.counts(x, y);
      if (c > 0) {
        const double mean = sum(x, y) / c;
        d.time_var(x, y) = mean;
        const double var = c > 1 ? std::max(0.0, (sum_sq(x, y) - c * mean * mean) / (c - 1)) : 0.0;
        d.time_var_stderr(x, y) = std::sqrt(var / c);
      }
    }
  return d;
}

std::vector<SweepRow> torus_limit_sweep(const WeightedGraph& base, double mu, double beta,
                                        const FddQuery& query, const std::vector<int>& ns,
                                        const Variant& variant, const std::string& query_id) {
  if (query.lengths.touches_multiple_of(beta))
    throw ValidationError("length set has an endpoint at a multiple of beta");
  std::vector<int> sorted = ns;
  std::sort(sorted.begin(), sorted.end());
  const double limit = torus_limit_value(base, mu, beta, query, variant);
  std::vector<SweepRow> rows(sorted.size());
  parallel_for(sorted.size(), [&](std::size_t i) {
    const SpaceTimeGraph st = build_spacetime(base, sorted[i], beta, variant);
    const double value = projected_fdd_exact(st, mu, query);
    rows[i] = SweepRow{variant.name(), sorted[i], query_id, value, limit, std::abs(value - limit)};
  });
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "variant,N,query_id,value,limit,abs_error\n";
  for (const auto& r : rows)
    out << r.variant << ',' << r.n << ',' << r.query_id << ',' << format17(r.value) << ','
        << format17(r.limit) << ',' << format17(r.abs_error) << '\n';
  return out.str();
}

nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"variant", r.variant},
                   {"N", r.n},
                   {"query_id", r.query_id},
                   {"value", r.value},
                   {"limit", r.limit},
                   {"abs_error", r.abs_error}});
  return out;
}

std::vector<OccupationRow> occupation_convergence(const WeightedGraph& base, double mu, double beta,
                                                  const Vector& v, const std::vector<int>& ns,
                                                  const Variant& variant) {
  if (v.size() != base.size() || (v.array() < 0.0).any())
    throw ValidationError("v must be a nonnegative vector over the base vertices");
  const double right = std::exp(-beta * v.sum()) *
                       occupation_laplace_bosonic(build_generator(base), LoopParams{mu, beta}, v);
  std::vector<OccupationRow> rows;
  for (int n : ns) {
    const SpaceTimeGraph st = build_spacetime(base, n, beta, variant);
    if (st.states() > kDenseLimit) throw ValidationError("space-time state space exceeds 4096 states");
    Vector lifted(st.states());
    for (int s = 0; s < st.states(); ++s) lifted(s) = v(st.space(s));
    const double left = occupation_laplace_markov(st.generator, mu, lifted);
    rows.push_back({n, left, right, std::abs(left - right)});
  }
  return rows;
}

Matrix projected_green(const SpaceTimeGraph& st, double mu) {
  if (st.states() > kDenseLimit) throw ValidationError("space-time state space exceeds 4096 states");
  const Matrix g = green_function(st.generator, mu);
  const int m = st.base.size();
  Matrix out = Matrix::Zero(m, m);
  for (int x = 0; x < m; ++x)
    for (int y = 0; y < m; ++y)
      for (int tau = 0; tau < st.n; ++tau) out(x, y) += g(st.index(x, tau), st.index(y, tau));
  return out / st.beta;
}

}  // namespace loopsoup
