#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "loopsoup/error.hpp"
#include "loopsoup/soup.hpp"
#include "loopsoup/spacetime.hpp"

using namespace loopsoup;
using testing::pair;
using testing::random_graph;
using testing::single;

namespace {

FddQuery one_point(double t, int x, double lo, double hi) { return FddQuery{{t}, {x}, LengthSet::single(lo, hi)}; }

const Variant kIndependent = Variant::parse("independent");
const Variant kSymmetrized = Variant::parse("symmetrized");

}  // namespace

TEST_CASE("variant names") {
  for (const char* name : {"independent", "perturbed-weak", "perturbed-strong", "symmetrized", "periodic_mixing"})
    CHECK(Variant::parse(name).name() == name);
  CHECK(Variant::parse("perturbed").schedule == PerturbationSchedule::weak);
  CHECK_THROWS_AS(Variant::parse("sideways"), ValidationError);
}

TEST_CASE("independent generator assembly") {
  const double beta = 2.0;
  const SpaceTimeGraph st = build_spacetime(single(1.0), 3, beta, kIndependent);
  Matrix expect(3, 3);
  const double r = 3.0 / beta;
  expect << -r - 1, r, 0, 0, -r - 1, r, r, 0, -r - 1;
  CHECK((st.generator.q - expect).cwiseAbs().maxCoeff() < 1e-15);

  const SpaceTimeGraph two = build_spacetime(pair(), 2, 1.0, kIndependent);
  CHECK(two.states() == 4);
  CHECK(two.generator.q(two.index(0, 0), two.index(0, 1)) == 2.0);
  CHECK(two.generator.q(two.index(0, 0), two.index(1, 0)) == 1.0);
  CHECK(two.generator.q(two.index(0, 0), two.index(1, 1)) == 0.0);
}

TEST_CASE("row sums equal minus the killing for every variant") {
  const WeightedGraph base = periodic_box(1, 1, 0.4);
  for (const char* name : {"independent", "perturbed-weak", "perturbed-strong", "symmetrized", "periodic_mixing"})
    for (int n : {1, 2, 5}) {
      const SpaceTimeGraph st = build_spacetime(base, n, 1.5, Variant::parse(name, 9));
      const Vector rows = st.generator.q.rowwise().sum();
      for (int s = 0; s < st.states(); ++s) CHECK(rows(s) == doctest::Approx(-base.killing()(st.space(s))).epsilon(1e-12));
    }
}

TEST_CASE("Kronecker sum factorisation of the heat kernel") {
  const WeightedGraph base = random_graph(3, 3);
  const Generator q = build_generator(base);
  for (int n : {1, 4, 9, 16}) {
    const double beta = 1.4, t = 0.9;
    const SpaceTimeGraph st = build_spacetime(base, n, beta, kIndependent);
    const Matrix full = expm(t * st.generator.q);
    const Matrix space = expm(t * q.q);
    const Vector torus = torus_kernel(n, beta, t, true);
    double err = 0.0;
    for (int a = 0; a < st.states(); ++a)
      for (int b = 0; b < st.states(); ++b) {
        const int shift = ((st.torus(b) - st.torus(a)) % n + n) % n;
        err = std::max(err, std::abs(full(a, b) - space(st.space(a), st.space(b)) * torus(shift)));
      }
    CHECK(err < 1e-10);
  }
}

TEST_CASE("perturbed generator follows the declared norm") {
  const WeightedGraph base = pair(0.5, 0.0);
  const SpaceTimeGraph st = build_spacetime(base, 3, 1.0, Variant::parse("perturbed-weak", 4));
  const double bound = std::exp(perturbation_log_bound(PerturbationSchedule::weak, 3, 2, 1.0, 1.5));
  CHECK(bound == doctest::Approx(std::pow(3.0, -12.0) / 3.0).epsilon(1e-12));
  CHECK(st.perturbation_norm == doctest::Approx(bound).epsilon(1e-12));
  CHECK_FALSE(st.norm_floored);
  const Matrix diff = st.generator.q - build_spacetime(base, 3, 1.0, kIndependent).generator.q;
  for (int a = 0; a < st.states(); ++a)
    for (int b = 0; b < st.states(); ++b)
      if (a != b) CHECK(diff(a, b) >= 0.0);
  const SpaceTimeGraph deep = build_spacetime(base, 64, 1.0, Variant::parse("perturbed-weak", 4));
  CHECK(deep.norm_floored);
  CHECK(deep.perturbation_norm == doctest::Approx(1e-300).epsilon(1e-10));
  // Same seed and N, same perturbation.
  const SpaceTimeGraph again = build_spacetime(base, 3, 1.0, Variant::parse("perturbed-weak", 4));
  CHECK((again.generator.q - st.generator.q).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("periodic mixing needs a periodic box") {
  CHECK_THROWS_AS(build_spacetime(pair(), 3, 1.0, Variant::parse("periodic_mixing")), ValidationError);
  const SpaceTimeGraph st = build_spacetime(periodic_box(1, 1), 4, 1.0, Variant::parse("periodic_mixing"));
  // Each step moves one torus slot and one lattice neighbour.
  CHECK(st.generator.q(st.index(0, 0), st.index(1, 1)) == doctest::Approx(2.0));
  CHECK(st.generator.q(st.index(0, 0), st.index(2, 1)) == doctest::Approx(2.0));
  CHECK(st.generator.q(st.index(0, 0), st.index(0, 1)) == 0.0);
}

TEST_CASE("N = 1 reduces to the markov fdd of the base") {
  const WeightedGraph base = random_graph(5, 3);
  const SpaceTimeGraph st = build_spacetime(base, 1, 1.0, kIndependent);
  const FddQuery q{{0.2, 0.6}, {0, 2}, LengthSet::single(0.8, 3.0)};
  const double markov = markov_fdd(build_generator(base), -0.1, q);
  CHECK(projected_fdd_exact(st, -0.1, q) == doctest::Approx(markov).epsilon(1e-9));
  CHECK(projected_fdd_dense(st, -0.1, q) == doctest::Approx(markov).epsilon(1e-9));
}

TEST_CASE("closed-form, dense and gamma-mixture projected fdds agree") {
  const WeightedGraph base = pair(0.3, 0.0);
  const double mu = -0.5, beta = 1.0;
  for (int n : {2, 5, 12}) {
    const FddQuery q = one_point(0.3, 0, 0.9, 1.1);
    const SpaceTimeGraph ind = build_spacetime(base, n, beta, kIndependent);
    const double exact = projected_fdd_exact(ind, mu, q);
    CHECK(projected_fdd_dense(ind, mu, q) == doctest::Approx(exact).epsilon(1e-8));
    CHECK(projected_fdd_gamma_mixture(base, n, beta, mu, q) == doctest::Approx(exact).epsilon(1e-8));
    const SpaceTimeGraph sym = build_spacetime(base, n, beta, kSymmetrized);
    CHECK(projected_fdd_dense(sym, mu, q) == doctest::Approx(projected_fdd_exact(sym, mu, q)).epsilon(1e-8));
    const FddQuery q2{{0.1, 0.4}, {1, 0}, LengthSet({{0.6, 1.2}, {1.7, INFINITY}})};
    const double exact2 = projected_fdd_exact(ind, mu, q2);
    CHECK(projected_fdd_dense(ind, mu, q2) == doctest::Approx(exact2).epsilon(1e-8));
    CHECK(projected_fdd_gamma_mixture(base, n, beta, mu, q2) == doctest::Approx(exact2).epsilon(1e-8));
  }
}

TEST_CASE("independent fdd approaches the bosonic limit on a single vertex") {
  const WeightedGraph base = single(1.0);
  const FddQuery q = one_point(0.5, 0, 0.9, 1.1);
  double prev = INFINITY;
  for (int n : {8, 16, 32, 64}) {
    const double value = projected_fdd_exact(build_spacetime(base, n, 1.0, kIndependent), 0.0, q);
    const double err = std::abs(value - std::exp(-1.0));
    CHECK(err < prev);
    prev = err;
  }
  CHECK(torus_limit_value(base, 0.0, 1.0, q, kIndependent) == doctest::Approx(std::exp(-1.0)).epsilon(1e-13));
}

TEST_CASE("symmetrized fdd falls below the independent one") {
  const WeightedGraph base = single(1.0);
  const FddQuery q = one_point(0.5, 0, 0.9, 1.1);
  for (int n : {16, 32}) {
    const double sym = projected_fdd_exact(build_spacetime(base, n, 1.0, kSymmetrized), 0.0, q);
    const double ind = projected_fdd_exact(build_spacetime(base, n, 1.0, kIndependent), 0.0, q);
    CHECK(sym < ind);
  }
  CHECK(torus_limit_value(base, 0.0, 1.0, q, kSymmetrized) == 0.0);
}

TEST_CASE("perturbed fdd stays close to the independent one") {
  const WeightedGraph base = pair(0.3, 0.0);
  const FddQuery q = one_point(0.3, 0, 0.9, 1.1);
  for (int n : {2, 3, 4}) {
    const double ind = projected_fdd_exact(build_spacetime(base, n, 1.0, kIndependent), -0.5, q);
    const SpaceTimeGraph st = build_spacetime(base, n, 1.0, Variant::parse("perturbed-weak", 3));
    const double per = projected_fdd_exact(st, -0.5, q);
    CHECK(std::abs(per - ind) < 10.0 * st.perturbation_norm);
  }
}

TEST_CASE("periodic mixing limit uses the stationary law") {
  const WeightedGraph base = periodic_box(1, 1);
  const Vector pi = jump_chain_stationary(base);
  CHECK((pi.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-14);
  const double mu = -0.3, beta = 1.0;
  const FddQuery q = one_point(0.4, 1, 0.9, 2.5);
  const double expect = (std::exp(mu) + std::exp(2 * mu) / 2.0) / 3.0;
  CHECK(torus_limit_value(base, mu, beta, q, Variant::parse("periodic_mixing")) ==
        doctest::Approx(expect).epsilon(1e-13));
  const double far = projected_fdd_exact(build_spacetime(base, 48, beta, Variant::parse("periodic_mixing")), mu, q);
  const double near = projected_fdd_exact(build_spacetime(base, 6, beta, Variant::parse("periodic_mixing")), mu, q);
  CHECK(std::abs(far - expect) < std::abs(near - expect));
}

TEST_CASE("sampled space-time loops: winding, projection and local time split") {
  const WeightedGraph base = pair(0.2, 0.0);
  const int n = 4;
  const SpaceTimeGraph st = build_spacetime(base, n, 1.0, kIndependent);
  const MarkovSoupSampler sampler(st.generator, -0.1, 0.05);
  int wound = 0;
  for (std::size_t i = 0; i < 400; ++i) {
    Rng rng(31, i);
    const Loop l = sampler.sample_loop(rng);
    l.validate(st.states());
    const int w = winding(st, l);
    wound += w > 0;
    CHECK(torus_jumps(st, l) == n * w);
    const Loop p = project_loop(st, l);
    p.validate(base.size());
    CHECK(p.length == l.length);
    const Vector full = l.local_time(st.states());
    const Vector proj = p.local_time(base.size());
    for (int x = 0; x < base.size(); ++x) {
      double sum = 0.0;
      for (int tau = 0; tau < n; ++tau) sum += full(st.index(x, tau));
      CHECK(proj(x) == doctest::Approx(sum).epsilon(1e-12));
    }
    const LocalTimeSplit split = split_local_time(st, l);
    CHECK(split.total().sum() == doctest::Approx(l.length).epsilon(1e-12));
  }
  CHECK(wound > 0);
}

TEST_CASE("local time split categories") {
  const SpaceTimeGraph st = build_spacetime(pair(), 3, 1.0, kIndependent);
  const Loop constant{st.index(0, 1), 2.0, {}, {}};
  CHECK(split_local_time(st, constant).none(0) == 2.0);
  const Loop torus_only{st.index(1, 0), 2.0, {0.5, 1.0, 1.5}, {st.index(1, 1), st.index(1, 2), st.index(1, 0)}};
  const LocalTimeSplit s = split_local_time(st, torus_only);
  CHECK(s.torus_only(1) == 2.0);
  CHECK(project_loop(st, torus_only).is_point());
  const Loop space_only{st.index(0, 0), 1.0, {0.4}, {st.index(1, 0)}};
  CHECK_THROWS_AS(space_only.validate(st.states()), ValidationError);
  const Loop back{st.index(0, 0), 1.0, {0.4, 0.7}, {st.index(1, 0), st.index(0, 0)}};
  CHECK(split_local_time(st, back).space_only.sum() == doctest::Approx(1.0));
}

TEST_CASE("winding diagnostics on a single vertex") {
  // Survival-conditioned wind-1 time is Gamma(N, N + 1) for beta = kappa = 1,
  // so E[(1 - W)^2] = 1 / (N + 1).
  const WeightedGraph base = single(1.0);
  for (int n : {8, 32}) {
    const WindingDiagnostics d = winding_diagnostics(build_spacetime(base, n, 1.0, kIndependent), 0.0, 20000, 5);
    CHECK(d.d_hat.rowwise().sum().maxCoeff() <= 1.0);
    CHECK(d.d_hat(0, 0) == doctest::Approx(std::pow(n / (n + 1.0), n)).epsilon(0.03));
    CHECK(std::abs(d.time_var(0, 0) - 1.0 / (n + 1)) < 3 * d.time_var_stderr(0, 0));
    CHECK(d.capped == 0);
  }
  const WindingDiagnostics sym = winding_diagnostics(build_spacetime(base, 32, 1.0, kSymmetrized), 0.0, 20000, 5);
  CHECK(sym.time_var(0, 0) > 0.1);
}

TEST_CASE("winding diagnostics on two vertices ignore spatial moves") {
  // W ~ Gamma(N, N) with p_W(a, b) = (1 - e^{-2W}) / 2 and survival e^{-0.1 W}.
  const int n = 16;
  const WindingDiagnostics d = winding_diagnostics(build_spacetime(pair(), n, 1.0, kIndependent), -0.1, 40000, 6);
  auto mgf = [&](double a) { return std::pow(n / (n + a), n); };
  CHECK(std::abs(d.d_hat(0, 1) - 0.5 * (mgf(0.1) - mgf(2.1))) < 3 * d.d_stderr(0, 1));
  CHECK(std::abs(d.d_hat(0, 0) - 0.5 * (mgf(0.1) + mgf(2.1))) < 3 * d.d_stderr(0, 0));
  CHECK(n * d.time_var(0, 1) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("occupation convergence") {
  const std::vector<int> ns{4, 8, 16, 32};
  for (const auto& row : occupation_convergence(pair(0.5, 0.5), -0.2, 1.0, Vector::Zero(2), ns, kIndependent)) {
    CHECK(row.left == doctest::Approx(1.0));
    CHECK(row.right == doctest::Approx(1.0));
  }
  const auto rows = occupation_convergence(single(1.0), 0.0, 1.0, Vector::Ones(1), ns, kIndependent);
  CHECK(rows[0].right == doctest::Approx(std::exp(-1.0) * (1 - std::exp(-1.0)) / (1 - std::exp(-2.0))).epsilon(1e-12));
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].gap < rows[i - 1].gap);
}

TEST_CASE("projected green function approaches the free rdm off the diagonal") {
  const WeightedGraph base = pair(0.5, 0.2);
  const double mu = -0.3, beta = 1.0;
  const double target = bridge_green_matrix(build_generator(base), {mu, beta}, LoopLaw::bosonic)(0, 1);
  std::vector<double> gaps;
  for (int n : {4, 8, 16, 32, 64}) {
    gaps.push_back(std::abs(projected_green(build_spacetime(base, n, beta, kIndependent), mu)(0, 1) - target));
    if (gaps.size() > 1) CHECK(gaps.back() < gaps[gaps.size() - 2]);
  }
  // O(1/N): halving once N is moderate.
  CHECK(gaps[4] / gaps[3] == doctest::Approx(0.5).epsilon(0.15));
}

TEST_CASE("sweep output") {
  const FddQuery q = one_point(0.5, 0, 0.9, 1.1);
  const auto rows = torus_limit_sweep(single(1.0), 0.0, 1.0, q, {16, 4, 8}, kSymmetrized);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].n == 4);
  CHECK(rows[2].n == 16);
  for (const auto& r : rows) CHECK(r.limit == 0.0);
  const std::string csv = sweep_to_csv(rows);
  CHECK(csv.rfind("variant,N,query_id,value,limit,abs_error\n", 0) == 0);
  CHECK(csv.find("symmetrized,4,q0,") != std::string::npos);
  CHECK(sweep_to_json(rows).size() == 3);
  CHECK_THROWS_AS(torus_limit_sweep(single(1.0), 0.0, 1.0, one_point(0.5, 0, 0.9, 2.0), {4}, kIndependent),
                  ValidationError);
}
