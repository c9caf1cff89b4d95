#include "cli.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <unistd.h>

#include "loopsoup/bose.hpp"
#include "loopsoup/error.hpp"
#include "loopsoup/gaussian.hpp"
#include "loopsoup/graph.hpp"
#include "loopsoup/loopmeas.hpp"
#include "loopsoup/soup.hpp"
#include "loopsoup/spacetime.hpp"

#ifndef LOOPSOUP_VERSION
#define LOOPSOUP_VERSION "unknown"
#endif

namespace loopsoup::cli {
namespace {

using ojson = nlohmann::ordered_json;

const std::vector<std::string> kCommands{"mass", "fdd",  "soup", "torus-limit", "iso",
                                         "symanzik", "bose", "rdm", "diagnostics"};

struct Options {
  std::string command;
  std::string graph;
  std::string config;
  std::string output;
  std::string format = "json";
  std::uint64_t seed = 1;
  std::optional<std::size_t> samples;
  std::optional<int> nmax;
  std::string potential;
  std::optional<double> mu;
  std::optional<double> beta;
  std::string variant = "independent";
  std::vector<int> ns;
  std::vector<double> v;
  std::string x;
  std::string y;
  std::string query;
  std::string law;
  double eps = 0.0;
  std::string mixture;
  std::optional<int> d;
  std::vector<int> sides;
  std::vector<double> mus;
};

// Commands whose payload depends on the seed.
bool uses_seed(const Options& o) {
  static const std::set<std::string> mc{"soup", "iso", "diagnostics"};
  if (mc.count(o.command) != 0) return true;
  if (o.command == "torus-limit") return o.variant.rfind("perturbed", 0) == 0;
  if (o.command == "symanzik") return !o.mixture.empty();
  if (o.command == "bose" || o.command == "rdm") return o.samples.has_value() && *o.samples > 0;
  return false;
}

[[noreturn]] void missing(const std::string& flag, const std::string& command) {
  throw ValidationError("--" + flag + " is required for '" + command + "'");
}

double need(const std::optional<double>& value, const char* flag, const Options& o) {
  if (!value) missing(flag, o.command);
  return *value;
}

// Inline JSON if the text parses, otherwise a path to a JSON file.
nlohmann::json json_argument(const std::string& text, const char* flag) {
  if (text.empty()) throw ValidationError(std::string("--") + flag + " is empty");
  const auto inline_doc = nlohmann::json::parse(text, nullptr, false);
  if (!inline_doc.is_discarded()) return inline_doc;
  std::ifstream in(text);
  if (!in) throw ValidationError(std::string("--") + flag + ": cannot open '" + text + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("--") + flag + ": " + e.what());
  }
}

ojson ordered(const nlohmann::json& j) { return ojson::parse(j.dump()); }

WeightedGraph graph_of(const Options& o) {
  if (o.graph.empty()) missing("graph", o.command);
  if (!std::filesystem::exists(o.graph)) throw ValidationError("graph file '" + o.graph + "' does not exist");
  return load_graph(o.graph);
}

LoopParams params_of(const Options& o) {
  LoopParams p{need(o.mu, "mu", o), need(o.beta, "beta", o)};
  if (!(p.beta > 0.0)) throw ValidationError("--beta must be positive");
  if (p.mu > 0.0) throw ValidationError("--mu must be <= 0");
  return p;
}

double mu_of(const Options& o) {
  const double mu = need(o.mu, "mu", o);
  if (mu > 0.0) throw ValidationError("--mu must be <= 0");
  return mu;
}

std::size_t samples_of(const Options& o, std::size_t fallback) {
  const std::size_t s = o.samples.value_or(fallback);
  if (s < 1) throw ValidationError("--samples must be >= 1");
  return s;
}

int vertex_of(const WeightedGraph& g, const std::string& label, const char* flag, const Options& o) {
  if (label.empty()) missing(flag, o.command);
  return g.index_of(label);
}

Vector field_of(const WeightedGraph& g, const Options& o) {
  if (o.v.empty()) missing("v", o.command);
  if (static_cast<int>(o.v.size()) != g.size())
    throw ValidationError("--v needs one value per vertex (" + std::to_string(g.size()) + ")");
  Vector v(g.size());
  for (int i = 0; i < g.size(); ++i) v(i) = o.v[static_cast<std::size_t>(i)];
  if (v.minCoeff() < 0.0) throw ValidationError("--v must be nonnegative");
  return v;
}

// {"times": [...], "vertices": [labels], "lengths": [[lo, hi], ...]}
FddQuery query_of(const WeightedGraph& g, const Options& o) {
  if (o.query.empty()) missing("query", o.command);
  const nlohmann::json doc = json_argument(o.query, "query");
  FddQuery q;
  try {
    q.times = doc.at("times").get<std::vector<double>>();
    for (const auto& label : doc.at("vertices"))
      q.states.push_back(g.index_of(label.is_string() ? label.get<std::string>() : label.dump()));
    q.lengths = LengthSet::from_json(doc.at("lengths"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("--query: ") + e.what());
  }
  q.validate(g.size());
  return q;
}

PairPotential potential_of(const Options& o) {
  if (o.potential.empty()) return PairPotential{};
  return PairPotential::from_json(json_argument(o.potential, "potential"));
}

ojson parameter_echo(const Options& o) {
  ojson p;
  p["command"] = o.command;
  if (!o.graph.empty()) p["graph"] = o.graph;
  if (o.mu) p["mu"] = *o.mu;
  if (o.beta) p["beta"] = *o.beta;
  if (o.samples) p["samples"] = *o.samples;
  if (o.nmax) p["nmax"] = *o.nmax;
  if (!o.potential.empty()) p["potential"] = o.potential;
  if (o.command == "torus-limit" || o.command == "diagnostics") p["variant"] = o.variant;
  if (!o.ns.empty()) p["Ns"] = o.ns;
  if (!o.v.empty()) p["v"] = o.v;
  if (!o.x.empty()) p["x"] = o.x;
  if (!o.y.empty()) p["y"] = o.y;
  if (!o.query.empty()) p["query"] = o.query;
  if (!o.law.empty()) p["law"] = o.law;
  if (o.command == "soup") p["eps"] = o.eps;
  if (!o.mixture.empty()) p["mixture"] = o.mixture;
  if (o.d) p["d"] = *o.d;
  if (!o.sides.empty()) p["sides"] = o.sides;
  if (!o.mus.empty()) p["mus"] = o.mus;
  return p;
}

ojson versions() {
  ojson v;
  v["loopsoup"] = LOOPSOUP_VERSION;
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["boost"] = std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) + "." +
               std::to_string(BOOST_VERSION % 100);
  v["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  return v;
}

struct Result {
  std::vector<ojson> records;
  bool verified = true;
};

// ---- commands ----

Result cmd_mass(const Options& o) {
  const Generator q = build_generator(graph_of(o));
  const LoopParams p = params_of(o);
  ojson r;
  r["markov_mass_jumps"] = markov_mass_jumps(q, p.mu);
  r["bosonic_mass_jumps"] = bosonic_mass_jumps(q, p);
  r["bosonic_total_mass"] = bosonic_total_mass(q, p);
  return {{r}};
}

Result cmd_fdd(const Options& o) {
  const WeightedGraph g = graph_of(o);
  const Generator q = build_generator(g);
  const FddQuery query = query_of(g, o);
  const std::string law = o.law.empty() ? "both" : o.law;
  if (law != "both" && law != "markov" && law != "bosonic")
    throw ValidationError("--law must be markov, bosonic or both");
  Result out;
  if (law != "bosonic") {
    ojson r;
    r["law"] = "markov";
    r["value"] = markov_fdd(q, mu_of(o), query);
    out.records.push_back(r);
  }
  if (law != "markov") {
    ojson r;
    r["law"] = "bosonic";
    r["value"] = bosonic_fdd(q, params_of(o), query);
    out.records.push_back(r);
  }
  return out;
}

Result cmd_soup(const Options& o) {
  const WeightedGraph g = graph_of(o);
  const Generator q = build_generator(g);
  const std::string law = o.law.empty() ? "bosonic" : o.law;
  const std::size_t samples = samples_of(o, 1);
  Result out;
  auto emit = [&](std::size_t i, const LoopSoup& soup, const Vector& points) {
    const Vector field = occupation_field(soup, g.size()) + points;
    ojson r;
    r["sample"] = i;
    r["loops"] = soup.loops.size();
    std::size_t jumps = 0;
    for (const Loop& l : soup.loops) jumps += static_cast<std::size_t>(l.jumps());
    r["jumps"] = jumps;
    ojson occ;
    for (int x = 0; x < g.size(); ++x) occ[g.label(x)] = field(x);
    r["occupation"] = occ;
    if (o.format == "json") r["soup"] = ordered(soup_to_json(soup));
    out.records.push_back(r);
  };
  if (law == "bosonic") {
    const BosonicSoupSampler s(q, params_of(o));
    for (std::size_t i = 0; i < samples; ++i) {
      Rng rng(o.seed, i);
      LoopSoup soup = s.sample(rng);
      soup.seed = o.seed;
      soup.stream = i;
      emit(i, soup, Vector::Zero(g.size()));
    }
  } else if (law == "markov") {
    // eps = 0: genuine loops plus the exactly sampled point-loop field.
    const double mu = mu_of(o);
    if (o.eps < 0.0) throw ValidationError("--eps must be >= 0");
    const MarkovSoupSampler s(q, mu, o.eps, o.eps == 0.0);
    for (std::size_t i = 0; i < samples; ++i) {
      Rng rng(o.seed, i);
      LoopSoup soup = s.sample(rng);
      soup.seed = o.seed;
      soup.stream = i;
      const Vector points =
          o.eps == 0.0 ? sample_point_field(q, {mu, 1.0}, LoopLaw::markov, rng) : Vector(Vector::Zero(g.size()));
      emit(i, soup, points);
    }
  } else {
    throw ValidationError("--law must be markov or bosonic");
  }
  return out;
}

Variant variant_of(const Options& o) { return Variant::parse(o.variant, o.seed); }

std::vector<int> ns_of(const Options& o) {
  if (o.ns.empty()) missing("Ns", o.command);
  for (int n : o.ns)
    if (n < 1) throw ValidationError("--Ns entries must be >= 1");
  return o.ns;
}

Result cmd_torus_limit(const Options& o) {
  const WeightedGraph g = graph_of(o);
  const LoopParams p = params_of(o);
  const FddQuery query = query_of(g, o);
  Result out;
  for (const SweepRow& row : torus_limit_sweep(g, p.mu, p.beta, query, ns_of(o), variant_of(o))) {
    ojson r;
    r["variant"] = row.variant;
    r["N"] = row.n;
    r["query_id"] = row.query_id;
    r["value"] = row.value;
    r["limit"] = row.limit;
    r["abs_error"] = row.abs_error;
    out.records.push_back(r);
  }
  return out;
}

Result cmd_iso(const Options& o) {
  const WeightedGraph g = graph_of(o);
  const Generator q = build_generator(g);
  const double mu = mu_of(o);
  const Vector v = field_of(g, o);
  const std::size_t samples = samples_of(o, 100000);
  Result out;
  for (const IdentityReport& rep : verify_lejan(q, mu, v, samples, o.seed)) {
    out.records.push_back(ordered(rep.to_json()));
    out.verified = out.verified && rep.pass;
  }
  if (!o.x.empty() || !o.y.empty()) {
    const int x = vertex_of(g, o.x, "x", o), y = vertex_of(g, o.y, "y", o);
    const auto [lhs, rhs] = dynkin_identity(q, mu, x, y, v);
    ojson exact;
    exact["identity"] = "dynkin";
    exact["lhs"] = lhs;
    exact["rhs"] = rhs;
    exact["abs_error"] = std::abs(lhs - rhs);
    exact["pass"] = std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs));
    out.verified = out.verified && exact["pass"].get<bool>();
    out.records.push_back(exact);
    const Estimate e = dynkin_monte_carlo(q, mu, x, y, v, samples, o.seed + 1);
    ojson mc;
    mc["identity"] = "dynkin-monte-carlo";
    mc["exact"] = lhs;
    mc["estimate"] = e.mean;
    mc["stderr"] = e.stderr_;
    mc["z_score"] = e.z_score(lhs);
    mc["pass"] = e.z_score(lhs) <= 3.0;
    out.verified = out.verified && mc["pass"].get<bool>();
    out.records.push_back(mc);
  }
  return out;
}

Result cmd_symanzik(const Options& o) {
  const WeightedGraph g = graph_of(o);
  const Generator q = build_generator(g);
  const LoopParams p = params_of(o);
  const int x = vertex_of(g, o.x, "x", o), y = vertex_of(g, o.y, "y", o);
  SymanzikResult res;
  if (!o.mixture.empty()) {
    const MixtureJ j = MixtureJ::from_json(json_argument(o.mixture, "mixture"));
    res = symanzik_mixture(q, p.mu, p.beta, x, y, j, samples_of(o, 100000), o.seed);
  } else {
    res = symanzik_linear(q, p.mu, p.beta, x, y, field_of(g, o));
  }
  Result out;
  out.records.push_back(ordered(res.to_json()));
  out.verified = res.pass;
  return out;
}

Result cmd_bose(const Options& o) {
  Result out;
  if (o.d) {
    if (o.sides.empty()) missing("sides", o.command);
    if (o.mus.empty()) missing("mus", o.command);
    const CriticalTrend t = critical_density_trend(*o.d, need(o.beta, "beta", o), o.sides, o.mus);
    for (const TrendRow& row : t.rows) {
      ojson r;
      r["kind"] = "trend";
      r["d"] = t.d;
      r["side"] = row.side;
      r["mu"] = row.mu;
      r["density"] = row.density;
      out.records.push_back(r);
    }
    ojson s;
    s["kind"] = "trend-summary";
    s["d"] = t.d;
    s["box_change"] = t.box_change;
    s["mu_ratio"] = t.mu_ratio;
    s["bounded"] = t.bounded;
    out.records.push_back(s);
    return out;
  }
  const BoseSystem sys{graph_of(o), params_of(o), potential_of(o)};
  sys.validate();
  ojson free;
  free["kind"] = "free";
  free["log_z"] = log_partition_free(sys);
  free["density"] = particle_density(sys);
  out.records.push_back(free);
  if (o.nmax) {
    ojson r = ordered(fock_oracle(sys, *o.nmax).to_json());
    r["kind"] = "fock";
    out.records.push_back(r);
  }
  if (o.samples && *o.samples > 0 && !sys.potential.is_zero()) {
    const InteractingEstimate e = log_partition_interacting_mc(sys, *o.samples, o.seed);
    ojson r;
    r["kind"] = "interacting-monte-carlo";
    r["log_z"] = e.value;
    r["stderr"] = e.stderr_;
    r["samples"] = e.samples;
    r["max_share"] = e.max_share;
    out.records.push_back(r);
  }
  return out;
}

Result cmd_rdm(const Options& o) {
  const WeightedGraph g = graph_of(o);
  const BoseSystem sys{g, params_of(o), potential_of(o)};
  sys.validate();
  std::vector<std::pair<int, int>> entries;
  if (!o.x.empty() || !o.y.empty())
    entries.emplace_back(vertex_of(g, o.x, "x", o), vertex_of(g, o.y, "y", o));
  else
    for (int x = 0; x < g.size(); ++x)
      for (int y = 0; y < g.size(); ++y) entries.emplace_back(x, y);
  const Matrix free = rdm_free(sys);
  std::optional<FockResult> fock;
  if (o.nmax) fock = fock_oracle(sys, *o.nmax);
  const bool mc = o.samples && *o.samples > 0 && !sys.potential.is_zero();
  Result out;
  std::size_t k = 0;
  for (const auto& [x, y] : entries) {
    ojson r;
    r["x"] = g.label(x);
    r["y"] = g.label(y);
    r["free"] = free(x, y);
    if (fock) {
      r["fock"] = fock->rho1(x, y);
      r["fock_truncation_bound"] = fock->truncation_bound;
    }
    if (mc) {
      const InteractingEstimate e = rdm_interacting_mc(sys, x, y, *o.samples, o.seed + k);
      r["interacting"] = e.value;
      r["interacting_stderr"] = e.stderr_;
      r["stream_seed"] = o.seed + k;
    }
    ++k;
    out.records.push_back(r);
  }
  return out;
}

Result cmd_diagnostics(const Options& o) {
  const WeightedGraph g = graph_of(o);
  const LoopParams p = params_of(o);
  const Variant variant = variant_of(o);
  const std::size_t samples = samples_of(o, 10000);
  Result out;
  for (int n : ns_of(o)) {
    const WindingDiagnostics d = winding_diagnostics(build_spacetime(g, n, p.beta, variant), p.mu, samples, o.seed);
    for (int x = 0; x < g.size(); ++x)
      for (int y = 0; y < g.size(); ++y) {
        ojson r;
        r["kind"] = "winding";
        r["N"] = n;
        r["x"] = g.label(x);
        r["y"] = g.label(y);
        r["d_hat"] = d.d_hat(x, y);
        r["d_stderr"] = d.d_stderr(x, y);
        r["time_var"] = d.time_var(x, y);
        r["time_var_stderr"] = d.time_var_stderr(x, y);
        r["count"] = d.counts(x, y);
        r["capped"] = d.capped;
        out.records.push_back(r);
      }
  }
  if (!o.v.empty()) {
    for (const OccupationRow& row : occupation_convergence(g, p.mu, p.beta, field_of(g, o), o.ns, variant)) {
      ojson r;
      r["kind"] = "occupation";
      r["N"] = row.n;
      r["left"] = row.left;
      r["right"] = row.right;
      r["gap"] = row.gap;
      out.records.push_back(r);
    }
  }
  return out;
}

Result dispatch(const Options& o) {
  if (o.command == "mass") return cmd_mass(o);
  if (o.command == "fdd") return cmd_fdd(o);
  if (o.command == "soup") return cmd_soup(o);
  if (o.command == "torus-limit") return cmd_torus_limit(o);
  if (o.command == "iso") return cmd_iso(o);
  if (o.command == "symanzik") return cmd_symanzik(o);
  if (o.command == "bose") return cmd_bose(o);
  if (o.command == "rdm") return cmd_rdm(o);
  if (o.command == "diagnostics") return cmd_diagnostics(o);
  throw ValidationError("unknown command '" + o.command + "'");
}

// ---- config merging ----

std::string scalar_text(const nlohmann::json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_float()) return format_double(value.get<double>());
  return value.dump();
}

// Flags in args win; config keys fill in the rest.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--config") path = args[i + 1];
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw ValidationError("--config: cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("--config: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("--config must hold a JSON object");
  std::set<std::string> given;
  for (const std::string& a : args)
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? a.npos : a.find('=') - 2));
  bool has_command = !args.empty() && args.front().rfind("-", 0) != 0;
  for (const auto& [key, value] : doc.items()) {
    if (key == "command") {
      if (!has_command) {
        args.insert(args.begin(), value.get<std::string>());
        has_command = true;
      }
      continue;
    }
    if (given.count(key) != 0) continue;
    args.push_back("--" + key);
    if (value.is_array()) {
      std::string joined;
      for (const auto& item : value) joined += (joined.empty() ? "" : ",") + scalar_text(item);
      args.push_back(joined);
    } else if (value.is_object()) {
      args.push_back(value.dump());
    } else {
      args.push_back(scalar_text(value));
    }
  }
  return args;
}

void write_atomic(const std::string& path, const std::string& text) {
  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot write '" + tmp.string() + "'");
    f << text;
    f.flush();
    if (!f) throw ValidationError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw ValidationError("cannot move output into place: " + ec.message());
  }
}

void add_options(CLI::App& sub, Options& o) {
  sub.add_option("--graph", o.graph, "Graph JSON file");
  sub.add_option("--config", o.config, "JSON config; keys mirror the long flags");
  sub.add_option("--output", o.output, "Output file (default stdout)");
  sub.add_option("--format", o.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  sub.add_option("--seed", o.seed, "Seed for Monte Carlo commands");
  sub.add_option("--samples", o.samples, "Monte Carlo sample count");
  sub.add_option("--nmax", o.nmax, "Fock space particle cutoff");
  sub.add_option("--potential", o.potential, "Pair potential table {distance: value}, inline or file");
  sub.add_option("--mu", o.mu, "Chemical potential (<= 0)");
  sub.add_option("--beta", o.beta, "Inverse temperature");
  sub.add_option("--variant", o.variant, "Space-time variant");
  sub.add_option("--Ns", o.ns, "Torus sizes")->delimiter(',');
  sub.add_option("--v", o.v, "Per-vertex potential in vertex order")->delimiter(',');
  sub.add_option("--x", o.x, "Vertex label");
  sub.add_option("--y", o.y, "Vertex label");
  sub.add_option("--query", o.query, "fdd query {times, vertices, lengths}, inline or file");
  sub.add_option("--law", o.law, "markov or bosonic");
  sub.add_option("--eps", o.eps, "Markov soup length cutoff (0: genuine loops plus point field)");
  sub.add_option("--mixture", o.mixture, "Mixture J {points, masses}, inline or file");
  sub.add_option("--d", o.d, "Box dimension for the critical-density trend");
  sub.add_option("--sides", o.sides, "Box sides")->delimiter(',');
  sub.add_option("--mus", o.mus, "Chemical potentials (< 0)")->delimiter(',');
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

void dump_into(const ojson& j, int indent, int depth, std::string& s) {
  const std::string pad = indent > 0 ? "\n" + std::string(static_cast<std::size_t>(indent * (depth + 1)), ' ') : "";
  const std::string close = indent > 0 ? "\n" + std::string(static_cast<std::size_t>(indent * depth), ' ') : "";
  const std::string sep = indent > 0 ? ": " : ":";
  switch (j.type()) {
    case ojson::value_t::object: {
      if (j.empty()) {
        s += "{}";
        return;
      }
      s += "{";
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        s += (first ? "" : ",") + pad + ojson(key).dump() + sep;
        dump_into(value, indent, depth + 1, s);
        first = false;
      }
      s += close + "}";
      return;
    }
    case ojson::value_t::array: {
      if (j.empty()) {
        s += "[]";
        return;
      }
      s += "[";
      bool first = true;
      for (const auto& value : j) {
        s += (first ? "" : ",") + pad;
        dump_into(value, indent, depth + 1, s);
        first = false;
      }
      s += close + "]";
      return;
    }
    case ojson::value_t::number_float: {
      const double x = j.get<double>();
      s += std::isfinite(x) ? format_double(x) : "null";
      return;
    }
    default:
      s += j.dump();
  }
}

std::string csv_cell(const ojson& value) {
  std::string text;
  if (value.is_string())
    text = value.get<std::string>();
  else if (value.is_number_float())
    text = format_double(value.get<double>());
  else if (value.is_null())
    text = "";
  else if (value.is_structured())
    text = dump_json(value, 0);
  else
    text = value.dump();
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string quoted = "\"";
  for (char c : text) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
  return quoted + "\"";
}

}  // namespace

std::string dump_json(const nlohmann::ordered_json& doc, int indent) {
  std::string s;
  dump_into(doc, indent, 0, s);
  return s;
}

std::string to_csv(const std::vector<nlohmann::ordered_json>& records) {
  std::vector<std::string> header;
  std::set<std::string> seen;
  for (const auto& r : records)
    for (const auto& [key, value] : r.items())
      if (seen.insert(key).second) header.push_back(key);
  std::string s;
  for (std::size_t i = 0; i < header.size(); ++i) s += (i ? "," : "") + csv_cell(ojson(header[i]));
  s += "\n";
  for (const auto& r : records) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) s += ",";
      if (r.contains(header[i])) s += csv_cell(r.at(header[i]));
    }
    s += "\n";
  }
  return s;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Loop soups, space-time torus limits, isomorphism checks and lattice Bose gases", "loopsoup"};
  app.set_version_flag("--version", std::string(LOOPSOUP_VERSION));
  app.require_subcommand(1);
  for (const std::string& name : kCommands) add_options(*app.add_subcommand(name), o);
  try {
    std::vector<std::string> args = merge_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    std::ostringstream msg, diag;
    const int code = app.exit(e, msg, diag);
    out << msg.str();
    err << diag.str();
    return code == 0 ? ok : validation_failure;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return validation_failure;
  }
  o.command = app.get_subcommands().front()->get_name();

  try {
    Result result = dispatch(o);
    const ojson echo = parameter_echo(o);
    const ojson vers = versions();
    for (ojson& r : result.records) {
      ojson full;
      full["command"] = o.command;
      full["parameters"] = echo;
      full["seed"] = uses_seed(o) ? ojson(o.seed) : ojson(nullptr);
      full["versions"] = vers;
      for (const auto& [key, value] : r.items()) full[full.contains(key) ? "result_" + key : key] = value;
      r = std::move(full);
    }
    std::string text;
    if (o.format == "csv") {
      text = to_csv(result.records);
    } else {
      ojson doc;
      doc["command"] = o.command;
      doc["verified"] = result.verified;
      doc["records"] = result.records;
      text = dump_json(doc) + "\n";
    }
    if (o.output.empty() || o.output == "-")
      out << text;
    else
      write_atomic(o.output, text);
    if (!result.verified) {
      err << "verification failed: an identity check did not pass\n";
      return verification_failure;
    }
    return ok;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return validation_failure;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return numeric_failure;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return validation_failure;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return validation_failure;
  }
}

}  // namespace loopsoup::cli
