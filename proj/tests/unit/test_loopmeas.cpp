#include <doctest.h>

#include <cmath>

#include <boost/math/special_functions/expint.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "helpers.hpp"
#include "loopsoup/error.hpp"
#include "loopsoup/loopmeas.hpp"
#include "loopsoup/soup.hpp"
#include "loopsoup/stats.hpp"

using namespace loopsoup;
using testing::pair;
using testing::random_graph;
using testing::single;
using testing::skewed;

namespace {

double e1(double x) { return boost::math::expint(1, x); }

FddQuery one_point(double t, int x, double lo, double hi) { return FddQuery{{t}, {x}, LengthSet::single(lo, hi)}; }

// Loop series sum_x sum_j e^{beta mu j} / j p_{j beta}(x, x) by repeated multiplication.
double loop_series(const Generator& q, const LoopParams& p) {
  const Matrix step = expm(p.beta * (q.q + p.mu * Matrix::Identity(q.size(), q.size())));
  Matrix power = step;
  double total = 0.0;
  for (int j = 1; j < 200000; ++j) {
    const double term = power.trace() / j;
    total += term;
    if (term < 1e-20 * total) break;
    power = power * step;
  }
  return total;
}

}  // namespace

TEST_CASE("length sets") {
  const LengthSet a = LengthSet::from_json(nlohmann::json::parse(R"([[0.5, 1.5], [2, "inf"]])"));
  CHECK(a.contains(1.0));
  CHECK_FALSE(a.contains(1.7));
  CHECK(a.contains(1e9));
  CHECK_FALSE(a.bounded());
  CHECK(a.infimum() == 0.5);
  CHECK(a.touches_multiple_of(1.0));
  CHECK_FALSE(LengthSet::single(0.9, 1.1).touches_multiple_of(1.0));
  CHECK_THROWS_AS(LengthSet::from_json(nlohmann::json::parse(R"([[1, 0.5]])")), ValidationError);
  CHECK_THROWS_AS(LengthSet::from_json(nlohmann::json::parse(R"([[0, 1]])")), ValidationError);
  CHECK_THROWS_AS(LengthSet::from_json(nlohmann::json::parse(R"([[0.5, 2], [1, 3]])")), ValidationError);
  const LengthSet b = LengthSet::from_json(a.to_json());
  CHECK(b.intervals().size() == 2);
  CHECK(std::isinf(b.intervals()[1].hi));
}

TEST_CASE("fdd query validation") {
  const Generator q = build_generator(pair(0.0, 0.0));
  CHECK_THROWS_AS(bosonic_fdd(q, {-1.0, 1.0}, one_point(0.5, 0, 0.4, 1.1)), ValidationError);
  CHECK_THROWS_AS(bosonic_fdd(q, {-1.0, 1.0}, FddQuery{{0.5, 0.3}, {0, 1}, LengthSet::single(1, 2)}),
                  ValidationError);
  CHECK_THROWS_AS(bosonic_fdd(q, {-1.0, 1.0}, one_point(0.5, 2, 0.9, 1.1)), ValidationError);
  CHECK_THROWS_AS(bosonic_fdd(q, {1.0, 1.0}, one_point(0.5, 0, 0.9, 1.1)), ValidationError);
}

TEST_CASE("bosonic fdd examples") {
  CHECK(bosonic_fdd(build_generator(single(1.0)), {0.0, 1.0}, one_point(0.5, 0, 0.9, 1.1)) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-13));
  CHECK(bosonic_fdd(build_generator(pair()), {-1.0, 1.0}, one_point(0.5, 0, 1.1, 1.9)) == 0.0);
  const double p1 = (1.0 + std::exp(-2.0)) / 2.0;
  CHECK(bosonic_fdd(build_generator(pair()), {-1.0, 1.0}, one_point(0.1, 0, 0.5, 1.5)) ==
        doctest::Approx(p1 * std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("bosonic fdd against explicit sums with k = 2") {
  const Generator q = build_generator(random_graph(7, 4));
  const LoopParams p{-0.2, 0.7};
  const FddQuery query{{0.2, 0.5}, {1, 3}, LengthSet({{0.6, 1.9}, {2.5, INFINITY}})};
  double expect = 0.0;
  const double chain = expm(0.3 * q.q)(1, 3);
  for (int j = 1; j < 400; ++j) {
    const double len = j * p.beta;
    if (!query.lengths.contains(len)) continue;
    expect += std::exp(p.beta * p.mu * j) / j * chain * expm((len - 0.3) * q.q)(3, 1);
  }
  CHECK(bosonic_fdd(q, p, query) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("markov fdd examples") {
  const Generator q = build_generator(single(1.0));
  CHECK(markov_fdd(q, 0.0, one_point(0.5, 0, 1.0, 2.0)) == doctest::Approx(e1(1.0) - e1(2.0)).epsilon(1e-9));
  CHECK(markov_fdd(q, 0.0, one_point(0.5, 0, 1.0, 1.0)) == 0.0);
  CHECK(markov_fdd(q, -1.0, one_point(0.5, 0, 1.0, INFINITY)) == doctest::Approx(e1(2.0)).epsilon(1e-9));
  CHECK_THROWS_AS(markov_fdd(build_generator(pair()), 0.0, one_point(0.5, 0, 1.0, INFINITY)), ValidationError);
}

TEST_CASE("markov fdd against direct quadrature on a random graph") {
  const Generator q = build_generator(random_graph(11, 5));
  const double mu = -0.1;
  const FddQuery query{{0.3, 0.4, 1.0}, {0, 2, 4}, LengthSet::single(1.2, 6.0)};
  const double chain = expm(0.1 * q.q)(0, 2) * expm(0.6 * q.q)(2, 4);
  auto f = [&](double t) { return std::exp(mu * t) / t * expm((t - 0.7) * q.q)(4, 0); };
  const double oracle = chain * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 1.2, 6.0, 15, 1e-13);
  CHECK(markov_fdd(q, mu, query) == doctest::Approx(oracle).epsilon(1e-8));
}

TEST_CASE("fdd additivity over disjoint length sets") {
  const Generator q = build_generator(random_graph(5, 4));
  const LoopParams p{-0.3, 0.8};
  const FddQuery left{{0.1}, {2}, LengthSet::single(0.3, 2.1)};
  const FddQuery right{{0.1}, {2}, LengthSet::single(2.1, 5.1)};
  const FddQuery both{{0.1}, {2}, LengthSet::single(0.3, 5.1)};
  CHECK(bosonic_fdd(q, p, left) + bosonic_fdd(q, p, right) == doctest::Approx(bosonic_fdd(q, p, both)).epsilon(1e-13));
  CHECK(markov_fdd(q, p.mu, left) + markov_fdd(q, p.mu, right) ==
        doctest::Approx(markov_fdd(q, p.mu, both)).epsilon(1e-8));
  CHECK(markov_fdd(q, p.mu, left) <= markov_fdd(q, p.mu, both));
}

TEST_CASE("small beta: bosonic fdd is a Riemann sum of the markov fdd") {
  const Generator q = build_generator(pair(0.5, 0.0));
  const double mu = -0.5;
  const double beta = 1.0 / 1024.0;
  const FddQuery query{{0.2}, {0}, LengthSet::single(0.9 + beta / 3, 2.0 + beta / 3)};
  CHECK(std::abs(bosonic_fdd(q, {mu, beta}, query) - markov_fdd(q, mu, query)) < 1e-3);
}

TEST_CASE("jump masses") {
  CHECK(markov_mass_jumps(build_generator(pair()), -1.0) == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-13));
  CHECK(markov_mass_jumps(build_generator(single(1.0)), 0.0) == 0.0);
  CHECK(markov_mass_jumps(build_generator(skewed(0.0)), -1.0) == doctest::Approx(std::log(1.5)).epsilon(1e-13));
  CHECK(bosonic_mass_jumps(build_generator(single(1.0)), {0.0, 1.0}) == 0.0);
  const double expect = std::log(std::pow(1 - std::exp(-2.0), 2) / ((1 - std::exp(-1.0)) * (1 - std::exp(-3.0))));
  CHECK(bosonic_mass_jumps(build_generator(pair()), {-1.0, 1.0}) == doctest::Approx(expect).epsilon(1e-12));
  // beta -> 0: the Bosonic ratio tends to the Markovian one.
  const Generator q = build_generator(random_graph(2, 4));
  CHECK(bosonic_mass_jumps(q, {-0.2, 1e-3}) == doctest::Approx(markov_mass_jumps(q, -0.2)).epsilon(1e-2));
}

TEST_CASE("bosonic total mass") {
  CHECK(bosonic_total_mass(build_generator(single(1.0)), {0.0, 1.0}) ==
        doctest::Approx(-std::log(1 - std::exp(-1.0))).epsilon(1e-13));
  CHECK(bosonic_total_mass(build_generator(pair()), {-1.0, 1.0}) ==
        doctest::Approx(-std::log((1 - std::exp(-1.0)) * (1 - std::exp(-3.0)))).epsilon(1e-13));
  CHECK(bosonic_total_mass(build_generator(single(1.0)), {0.0, 50.0}) ==
        doctest::Approx(std::exp(-50.0)).epsilon(1e-10));
  CHECK_THROWS_AS(bosonic_total_mass(build_generator(pair()), {0.0, 1.0}), ValidationError);
}

TEST_CASE("determinant and loop series agree on random graphs") {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const int n = 1 + static_cast<int>(seed % 6);
    const Generator q = build_generator(random_graph(seed, n));
    for (const LoopParams p : {LoopParams{0.0, 1.0}, LoopParams{-0.4, 2.5}, LoopParams{-1.0, 0.3}}) {
      const double exact = bosonic_total_mass(q, p);
      CHECK(std::abs(exact - loop_series(q, p)) < 1e-8 * exact);
    }
  }
}

TEST_CASE("occupation laplace transforms") {
  CHECK(occupation_laplace_markov(build_generator(pair()), -1.0, Vector::Zero(2)) == 1.0);
  CHECK(occupation_laplace_markov(build_generator(single(1.0)), 0.0, Vector::Ones(1)) == doctest::Approx(0.5));
  CHECK(occupation_laplace_markov(build_generator(pair()), -1.0, Vector::Unit(2, 0)) == doctest::Approx(0.6));
  CHECK(occupation_laplace_bosonic(build_generator(pair()), {-1.0, 1.0}, Vector::Zero(2)) == 1.0);
  CHECK(occupation_laplace_bosonic(build_generator(single(1.0)), {0.0, 1.0}, Vector::Ones(1)) ==
        doctest::Approx((1 - std::exp(-1.0)) / (1 - std::exp(-2.0))).epsilon(1e-13));
  CHECK_THROWS_AS(occupation_laplace_markov(build_generator(pair()), -1.0, -Vector::Ones(2)), ValidationError);
  const Generator q = build_generator(random_graph(9, 3));
  const Vector v = Vector::LinSpaced(3, 0.2, 1.0);
  CHECK(occupation_laplace_bosonic(q, {-0.1, 1e-3}, v / 1.0) ==
        doctest::Approx(occupation_laplace_markov(q, -0.1, v)).epsilon(1e-2));
}

TEST_CASE("laplace transforms are monotone in v") {
  const Generator q = build_generator(random_graph(21, 4));
  Vector v = Vector::Constant(4, 0.3);
  double prev_m = 1.0, prev_b = 1.0;
  for (int step = 0; step < 5; ++step) {
    const double m = occupation_laplace_markov(q, -0.2, v);
    const double b = occupation_laplace_bosonic(q, {-0.2, 1.5}, v);
    CHECK(m < prev_m);
    CHECK(b < prev_b);
    prev_m = m;
    prev_b = b;
    v(step % 4) += 0.5;
  }
}

TEST_CASE("Campbell quadrature matches the determinant ratio") {
  for (std::uint64_t seed = 30; seed < 35; ++seed) {
    const int n = 2 + static_cast<int>(seed % 4);
    const Generator q = build_generator(random_graph(seed, n));
    Vector v(n);
    Rng rng(seed, 1);
    for (int x = 0; x < n; ++x) v(x) = rng.uniform();
    const double mu = -0.2;
    const Generator qv = generator_from_matrix(q.q - Matrix(v.asDiagonal()));
    // int_0^inf e^{mu t}/t (tr e^{tQ} - tr e^{t(Q-V)}) dt with t = e^s.
    auto f = [&](double s) {
      const double t = std::exp(s);
      return std::exp(mu * t) * (expm(t * q.q).trace() - expm(t * qv.q).trace());
    };
    const double campbell =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -40.0, 6.0, 20, 1e-12);
    CHECK(std::abs(-std::log(occupation_laplace_markov(q, mu, v)) - campbell) < 1e-6);
  }
}

TEST_CASE("point loop transforms") {
  const Generator q = build_generator(single(1.0));
  CHECK(point_loop_laplace(q, {0.0, 1.0}, Vector::Zero(1), LoopLaw::bosonic)(0) == 1.0);
  CHECK(point_loop_laplace(q, {0.0, 1.0}, Vector::Ones(1), LoopLaw::markov)(0) == doctest::Approx(0.5));
  // Golden orientation: the Laplace transform is the reciprocal of the
  // expression 1 - c (e^{-beta v} - 1) / (1 - c).
  const double c = std::exp(-1.0);
  const double inverse = 1.0 - c * (std::exp(-1.0) - 1.0) / (1.0 - c);
  CHECK(point_loop_laplace(q, {0.0, 1.0}, Vector::Ones(1), LoopLaw::bosonic)(0) ==
        doctest::Approx(1.0 / inverse).epsilon(1e-13));
}

TEST_CASE("point loop transform orientation pinned by soup Monte Carlo") {
  // Every Bosonic loop on an edgeless vertex is a point loop.
  const Generator q = build_generator(single(1.0));
  const LoopParams p{0.0, 1.0};
  const BosonicSoupSampler soups(q, p);
  const Estimate e = summarize(collect(200000, [&](std::size_t i) {
    Rng rng(77, i);
    return std::exp(-occupation_field(soups.sample(rng), 1)(0));
  }));
  CHECK(e.z_score(point_loop_laplace(q, p, Vector::Ones(1), LoopLaw::bosonic)(0)) < 3.0);
}

TEST_CASE("bridge measure green") {
  const Generator q = build_generator(single(1.0));
  CHECK(bridge_measure_green(q, {0.0, 1.0}, 0, 0, LoopLaw::bosonic) ==
        doctest::Approx(std::exp(-1.0) / (1 - std::exp(-1.0))).epsilon(1e-13));
  CHECK(bridge_measure_green(q, {0.0, 1.0}, 0, 0, LoopLaw::markov) == doctest::Approx(1.0));
  Matrix d(2, 2);
  d << -1, 0, 0, -1;
  CHECK(bridge_measure_green(generator_from_matrix(d), {0.0, 1.0}, 0, 1, LoopLaw::bosonic) == 0.0);
  const Generator r = build_generator(random_graph(4, 4));
  const LoopParams p{-0.3, 1.2};
  const Matrix step = expm(p.beta * r.q);
  Matrix power = step, series = Matrix::Zero(4, 4);
  for (int j = 1; j < 500; ++j) {
    series += std::exp(p.beta * p.mu * j) * power;
    power = power * step;
  }
  CHECK((bridge_green_matrix(r, p, LoopLaw::bosonic) - series).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("decay bound, trace kernel and kernel evaluator") {
  for (std::uint64_t seed = 40; seed < 45; ++seed) {
    const Generator q = build_generator(random_graph(seed, 5));
    const double mu = -0.05;
    const DecayBound db = decay_bound(q, mu);
    CHECK(db.rate > 0.0);
    for (double t : {0.1, 1.0, 5.0, 20.0, 80.0}) {
      const Matrix p = expm(t * (q.q + mu * Matrix::Identity(5, 5)));
      CHECK(p.rowwise().sum().maxCoeff() <= db.prefactor * std::exp(-db.rate * t) * (1 + 1e-10));
    }
    const TraceKernel tk(q.q);
    const KernelEvaluator ke(q.q);
    for (double t : {0.0, 0.3, 2.0, 9.0}) {
      const Matrix p = t == 0.0 ? Matrix::Identity(5, 5) : expm(t * q.q);
      CHECK(tk.trace(t) == doctest::Approx(p.trace()).epsilon(1e-10));
      CHECK((ke.matrix(t) - p).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(ke.entry(t, 1, 3) == doctest::Approx(p(1, 3)).epsilon(1e-9));
    }
  }
}

TEST_CASE("truncated markov mass and laplace transform") {
  const Generator q = build_generator(single(1.0));
  CHECK(markov_mass_truncated(q, 0.0, 1.0) == doctest::Approx(e1(1.0)).epsilon(1e-9));
  const double v = 0.7;
  // Single vertex: exp(-int_eps^inf e^{-t}/t (1 - e^{-vt}) dt).
  const double expect = std::exp(-(e1(0.5) - e1(0.5 * (1 + v))));
  CHECK(occupation_laplace_markov_truncated(q, 0.0, Vector::Constant(1, v), 0.5) ==
        doctest::Approx(expect).epsilon(1e-9));
}
