#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "loopsoup/graph.hpp"
#include "loopsoup/loopmeas.hpp"
#include "loopsoup/path.hpp"

namespace loopsoup {

enum class VariantKind { independent, perturbed, symmetrized, periodic_mixing };
enum class PerturbationSchedule { weak, strong };

struct Variant {
  VariantKind kind = VariantKind::independent;
  PerturbationSchedule schedule = PerturbationSchedule::weak;
  std::uint64_t seed = 0;

  /// "independent", "perturbed" (weak), "perturbed-weak", "perturbed-strong",
  /// "symmetrized", "periodic_mixing" (also "periodic-mixing").
  static Variant parse(const std::string& name, std::uint64_t seed = 0);
  std::string name() const;
};

/// Lambda x T_N with state index s = x * N + tau.
struct SpaceTimeGraph {
  WeightedGraph base;
  int n = 1;
  double beta = 1.0;
  Variant variant;
  Generator generator;
  double perturbation_norm = 0.0;  // ||E_N||_1 actually applied
  bool norm_floored = false;       // declared bound was below 1e-300

  int states() const { return base.size() * n; }
  int index(int x, int tau) const { return x * n + tau; }
  int space(int s) const { return s / n; }
  int torus(int s) const { return s % n; }
};

/// log of the declared ||E_N||_1 bound. Weak: N^{-2 N |Lambda|} / N.
/// Strong: e^{-alpha N^2} / N with alpha = 2 max(lambda) / beta.
double perturbation_log_bound(PerturbationSchedule s, int n, int base_size, double beta,
                              double max_lambda);

SpaceTimeGraph build_spacetime(const WeightedGraph& base, int n, double beta, const Variant& variant);

/// Spatial projection of the space-time loop measure evaluated on
/// {X_{t_i} = x_i, l in A}. Independent and symmetrized variants use the
/// product form with the torus return probability; the others use dense
/// heat kernels of the full generator (at most 4096 states).
double projected_fdd_exact(const SpaceTimeGraph& st, double mu, const FddQuery& query,
                           double abs_tol = 1e-9);
double projected_fdd_dense(const SpaceTimeGraph& st, double mu, const FddQuery& query,
                           double abs_tol = 1e-9);

/// Independent variant through N P_{N,0,0}(t) = beta sum_j Gamma(jN+1, N/beta)
/// density: a second route to projected_fdd_exact.
double projected_fdd_gamma_mixture(const WeightedGraph& base, int n, double beta, double mu,
                                   const FddQuery& query, double abs_tol = 1e-10);

/// Torus-limit value of the projected fdd for the variant: the Bosonic fdd
/// (independent, perturbed), 0 (symmetrized), or
/// pi(x_1)...pi(x_k) sum_j 1_A(j beta) e^{(mu - kappa) j beta} / j (periodic mixing).
double torus_limit_value(const WeightedGraph& base, double mu, double beta, const FddQuery& query,
                         const Variant& variant);

/// Stationary law of the jump chain p(x,y) = w(x,y) / sum_z w(x,z).
Vector jump_chain_stationary(const WeightedGraph& base);

/// Net directed torus displacement of a space-time loop divided by N.
int winding(const SpaceTimeGraph& st, const Loop& loop);
int torus_jumps(const SpaceTimeGraph& st, const Loop& loop);

/// Spatial component; torus-only jumps are erased.
Loop project_loop(const SpaceTimeGraph& st, const Loop& loop);

/// The loop's projected local time lands in exactly one category, chosen
/// by whether it has a spatial jump and whether it has a torus jump.
struct LocalTimeSplit {
  Vector both;        // spatial and torus jumps
  Vector torus_only;  // torus jumps only
  Vector space_only;  // spatial jumps only
  Vector none;        // constant loop
  Vector total() const { return both + torus_only + space_only + none; }
};

LocalTimeSplit split_local_time(const SpaceTimeGraph& st, const Loop& loop);

/// Wind-1 excursions: start at (x, tau) with tau uniform, run the jump chain
/// (mu acts as extra killing) until a torus move first brings the torus
/// coordinate back to tau; spatial moves never count as returns.
/// W is the elapsed time at that return.
struct WindingDiagnostics {
  Matrix d_hat;            // P(return happens at spatial state y)
  Matrix d_stderr;
  Matrix time_var;         // E[(beta - W)^2 | return at y]
  Matrix time_var_stderr;
  Eigen::MatrixXi counts;  // excursions ending at y
  std::size_t samples_per_start = 0;
  std::size_t capped = 0;  // walks stopped by the step cap
};

WindingDiagnostics winding_diagnostics(const SpaceTimeGraph& st, double mu, std::size_t samples,
                                       std::uint64_t seed);

struct SweepRow {
  std::string variant;
  int n = 0;
  std::string query_id;
  double value = 0.0;
  double limit = 0.0;
  double abs_error = 0.0;
};

std::vector<SweepRow> torus_limit_sweep(const WeightedGraph& base, double mu, double beta,
                                        const FddQuery& query, const std::vector<int>& ns,
                                        const Variant& variant, const std::string& query_id = "q0");
std::string sweep_to_csv(const std::vector<SweepRow>& rows);
nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows);

/// Exact comparison E_N[e^{-<v, L>}] = det A_N / det(A_N + V_N) against
/// e^{-beta <v, 1>} E^B[e^{-<v, L>}].
struct OccupationRow {
  int n = 0;
  double left = 0.0;
  double right = 0.0;
  double gap = 0.0;
};

std::vector<OccupationRow> occupation_convergence(const WeightedGraph& base, double mu, double beta,
                                                  const Vector& v, const std::vector<int>& ns,
                                                  const Variant& variant);

/// (1/beta) sum_tau G_N((x,tau),(y,tau)) with G_N = (-(G_N + mu))^{-1}.
Matrix projected_green(const SpaceTimeGraph& st, double mu);

}  // namespace loopsoup
