// Acceptance checks. `acceptance <name>` runs one check and prints a single
// PASS/FAIL line; the exit status is 0 on pass.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "oracles/enumeration.hpp"
#include "polymerlab/bounds.hpp"
#include "polymerlab/diagnostics.hpp"
#include "polymerlab/harness.hpp"
#include "polymerlab/localization.hpp"
#include "polymerlab/parallel.hpp"
#include "polymerlab/polymer.hpp"
#include "polymerlab/stats.hpp"
#include "polymerlab/walk.hpp"

using namespace polymerlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

constexpr unsigned kThreads = 0;  // all cores; results do not depend on it

walk::WalkModel walk_k(double alpha, std::int64_t K, double p0 = 0.3,
                       walk::SlowlyVaryingSpec L = walk::SlowlyVaryingSpec::constant()) {
  return walk::build_walk_with_support(alpha, L, p0, K);
}

diag::Ensemble ensemble(env::EnvModel env, std::uint64_t seed) {
  diag::Ensemble e;
  e.env = std::move(env);
  e.seed = seed;
  e.threads = kThreads;
  return e;
}

Outcome enumeration() {
  double worst = 0.0;
  int cases = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed)
    for (std::int64_t K = 1; K <= 3; ++K)
      for (int N = 1; N <= 4; ++N) {
        const auto env = seed % 2 ? env::EnvModel::gaussian() : env::EnvModel::rademacher();
        const double beta = 0.2 + 0.15 * static_cast<double>(seed % 6);
        const auto w = walk_k(seed % 3 ? 1.5 : 0.8, K, 0.25);
        const auto ctx = polymer::make_context(w, env, beta);
        const env::EnvField field(env, seed, static_cast<std::uint64_t>(K * 10 + N));
        const auto omega = [&](std::int64_t n, std::int64_t x) { return field.omega(n, x); };
        const auto kernel = walk::renormalized_kernel(w);
        const double lb = env::lambda(env, beta);
        const auto ref = oracle::enumerate_paths(kernel, N, beta, lb, omega);
        const auto prev = oracle::enumerate_paths(kernel, N - 1, beta, lb, omega);
        const auto s = polymer::run(field, ctx, N);
        worst = std::max(worst, std::fabs(s.log_zhat - ref.log_zhat));
        for (std::int64_t x = s.x_lo - 1; x <= s.x_hi() + 1; ++x) {
          const auto it = ref.endpoint.find(x);
          worst = std::max(worst, std::fabs(s.rho_at(x) - (it == ref.endpoint.end() ? 0.0 : it->second)));
        }
        worst = std::max(worst, std::fabs(s.overlap - prev.overlap_next));
        ++cases;
      }
  return {worst <= 1e-12, fmt::format("{} cases, max abs error {:.3g} (tolerance 1e-12)", cases, worst)};
}

Outcome martingale() {
  std::string detail;
  bool pass = true;
  for (double alpha : {0.8, 1.5})
    for (const auto& env : {env::EnvModel::gaussian(), env::EnvModel::rademacher()})
      for (double beta : {0.3, 1.0}) {
        const auto w = walk_k(alpha, 64);
        const auto traces = diag::simulate(ensemble(env, 108), w, beta, 64, 2000);
        std::vector<double> z;
        for (const auto& t : traces) z.push_back(std::exp(t.back().log_zhat));
        const auto m = stats::mean_se(z);
        const bool ok = std::fabs(m.mean - 1.0) <= 3.0 * m.se;
        pass = pass && ok;
        detail += fmt::format(" [a={} {} b={}: {:.4f}+-{:.4f}{}]", alpha, env::to_string(env.family()), beta, m.mean,
                              m.se, ok ? "" : " X");
      }
  return {pass, "mean Zhat_64 within 3 SE of 1:" + detail};
}

std::vector<std::vector<polymer::TraceRow>> regime_traces(double beta) {
  return diag::simulate(ensemble(env::EnvModel::gaussian(), 114), walk_k(1.5, 64), beta, 256, 200);
}

Outcome jensen() {
  const auto fe = diag::free_energy_from(regime_traces(1.0), 256);
  const auto zero = diag::free_energy_from(regime_traces(0.0), 256);
  const bool ok = fe.negative_at_99() && zero.p_hat == 0.0 && zero.se == 0.0;
  return {ok, fmt::format("p_hat(beta=1) = {:.5f} +- {:.5f}, upper 99% {:.5f}; p_hat(beta=0) = {}", fe.p_hat, fe.se,
                          fe.p_hat + stats::kZ99 * fe.se, zero.p_hat)};
}

Outcome fractional_moment() {
  const auto fm = diag::fractional_moment_from(regime_traces(1.0), 0.5, {32, 64, 128, 256});
  return {fm.decaying_at_99(), fmt::format("rate = {:.5f} +- {:.5f}, upper 99% {:.5f}", fm.rate, fm.rate_se,
                                           fm.rate + stats::kZ99 * fm.rate_se)};
}

Outcome overlap_mc() {
  const auto env = env::EnvModel::gaussian();
  const auto w = walk_k(1.5, 32);
  const auto ctx = polymer::make_context(w, env, 1.0);
  bool pass = true;
  std::string detail;
  for (std::uint64_t r = 0; r < 4; ++r) {
    const env::EnvField field(env, 16, r);
    std::vector<polymer::TraceRow> trace;
    polymer::run(field, ctx, 16, polymer::PathConstraint::none(), &trace);
    const double exact = trace.back().overlap;
    const auto mc = polymer::two_replica_overlap_mc(field, ctx, 16, 100000, 16, r);
    const bool ok = std::fabs(exact - mc.mean) <= 3.0 * mc.se;
    pass = pass && ok;
    detail += fmt::format(" [r={}: exact {:.5f} mc {:.5f}+-{:.5f}{}]", r, exact, mc.mean, mc.se, ok ? "" : " X");
  }
  return {pass, "I_16 vs two-replica MC:" + detail};
}

Outcome comparability() {
  const std::vector<std::int64_t> grid{64, 128, 256, 512};
  const auto traces = diag::simulate(ensemble(env::EnvModel::gaussian(), 111), walk_k(1.5, 64), 2.0, 512, 100);
  const auto r = diag::overlap_log_ratio_from(traces, grid, 0.05, 20.0);
  bool pass = true;
  std::string detail;
  for (const auto& s : r.per_N) {
    const double frac = static_cast<double>(s.inside) / static_cast<double>(traces.size());
    pass = pass && frac >= 0.9;
    detail += fmt::format(" [N={}: {:.2f} inside, median {:.3f}]", s.N, frac, s.median);
  }
  return {pass, "ratio sum I_n / -log Zhat_N in [0.05, 20]:" + detail};
}

Outcome recurrence() {
  using walk::Recurrence;
  const auto c = walk::SlowlyVaryingSpec::constant();
  const auto log2 = walk::SlowlyVaryingSpec::log_power(1.0, 2.0);
  const std::vector<std::tuple<double, walk::SlowlyVaryingSpec, Recurrence>> table{
      {1.5, c, Recurrence::recurrent},
      {0.8, c, Recurrence::transient},
      {1.0, c, Recurrence::recurrent},
      {1.0, log2, Recurrence::transient}};
  bool pass = true;
  std::string detail;
  for (const auto& [alpha, L, want] : table) {
    const auto got = walk::classify_recurrence(walk_k(alpha, 64, 0.3, L));
    pass = pass && got == want;
    detail += fmt::format(" [a={} L={}: {}]", alpha, L.name(), walk::to_string(got));
  }
  return {pass, "classifier:" + detail};
}

Outcome bound_slope() {
  std::vector<double> betas;
  for (int i = 0; i < 8; ++i) betas.push_back(0.05 * std::pow(8.0, i / 7.0));
  bool pass = true;
  std::string detail;
  bounds::BoundConfig cfg;
  cfg.threads = kThreads;
  double worst_cost = 0.0;
  for (double alpha : {1.25, 1.5, 2.0}) {
    const auto w = walk_k(alpha, 256);
    const auto rows = bounds::bound_curve(w, env::EnvModel::gaussian(), betas, cfg, true);
    const bool all = std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.p_upper.has_value(); });
    const double slope = all ? bounds::log_log_slope(rows) : std::nan("");
    const double want = 2.0 * alpha / (alpha - 1.0);
    const bool ok = all && std::fabs(slope / want - 1.0) <= 0.05;
    pass = pass && ok;
    detail += fmt::format(" [a={}: slope {:.4f} vs {:.4f}{}]", alpha, slope, want, ok ? "" : " X");
    const auto r = bounds::resolve(cfg, alpha);
    const double target = r.theta / (1.0 - r.theta);
    for (const auto& row : rows)
      worst_cost = std::max(worst_cost, std::fabs(row.cost_factor / target - 1.0));
    const auto seq = walk::scaling_sequence(w, 4096);
    for (std::int64_t n = 1; n <= 4096; ++n) {
      const double a = static_cast<double>(seq[n]);
      const double cf = bounds::cost_factor(static_cast<double>(n), a, r.C1,
                                            r.theta);
      worst_cost = std::max(worst_cost, std::fabs(cf / target - 1.0));
    }
  }
  const bool cost_ok = worst_cost <= 1e-13;
  return {pass && cost_ok,
          fmt::format("log-log slope of p_upper over beta in [0.05, 0.4]:{}; cost identity max rel err {:.2g}", detail,
                      worst_cost)};
}

Outcome exchangeability() {
  bool pass = true;
  std::string detail;
  const auto w = walk_k(1.5, 16);
  for (std::int64_t M : {1, 2, 3}) {
    const auto layout = loc::BlockLayout::with_half_width(32, 2, M);
    const auto e = loc::exchangeability_frequency(ensemble(env::EnvModel::gaussian(), 521), w, 1.0, layout, 2000);
    const bool ok = std::fabs(e.frequency.estimate - e.expected) <= 3.0 * e.frequency.se;
    pass = pass && ok;
    detail += fmt::format(" [M={}: {:.4f}+-{:.4f} vs {:.4f}{}]", M, e.frequency.estimate, e.frequency.se, e.expected,
                          ok ? "" : " X");
  }
  return {pass, "block-0 max frequency (L=2):" + detail};
}

Outcome atoms() {
  const auto env = env::EnvModel::gaussian();
  const auto w = walk_k(1.5, 128);
  const std::int64_t N = 512;
  const auto free_ctx = polymer::make_context(w, env, 0.0);
  const env::EnvField f0(env, 125, 0);
  const double zero = loc::atom_trace(f0, free_ctx, N, 0.05).fraction(N / 2, N);
  const auto ctx = polymer::make_context(w, env, 3.0);
  std::vector<double> fractions(100);
  parallel_for(fractions.size(), kThreads, [&](std::size_t r) {
    const env::EnvField field(env, 125, r);
    fractions[r] = loc::atom_trace(field, ctx, N, 0.05).fraction(N / 2, N);
  });
  const auto m = stats::mean_se(fractions);
  return {zero == 0.0 && m.mean > 0.2,
          fmt::format("beta=0 fraction {}; beta=3 mean fraction {:.4f} +- {:.4f} over 100 replicas", zero, m.mean, m.se)};
}

Outcome fluctuation() {
  // Shift floor below the exact minimum.
  std::size_t checked = 0;
  bool floor_ok = true;
  for (const auto& L : {walk::SlowlyVaryingSpec::constant(), walk::SlowlyVaryingSpec::log_power(1.0, 2.0),
                        walk::SlowlyVaryingSpec::log_power(1.0, -1.5)})
    for (double alpha : {1.25, 1.5, 2.0}) {
      const auto w = walk_k(alpha, 256, 0.3, L);
      for (std::int64_t N : {64, 128, 256, 512, 1024})
        for (std::int64_t half : {1, 2, 4, 8}) {
          const auto layout = loc::BlockLayout::with_half_width(N, half, 8);
          for (std::int64_t k = 1; k <= 8; ++k) {
            const auto s = loc::shift_rn_bound(w, layout, k, 0.1);
            floor_ok = floor_ok && s.exact_min >= s.floor && s.floor > 0.0;
            ++checked;
          }
        }
    }

  const auto tilt = loc::tilt_identity(ensemble(env::EnvModel::gaussian(), 513), walk_k(1.5, 16), 1.0, 32, 4.0, 500);
  const bool tilt_ok = std::fabs(tilt.difference) <= 3.0 * tilt.difference_se;

  std::vector<double> means;
  std::string exits;
  const auto w = walk_k(1.5, 32);
  for (std::int64_t N : {512, 1024, 2048}) {
    const auto f = loc::fluctuation_probability(ensemble(env::EnvModel::gaussian(), 128), w, 1.0, N, 0.1, 16);
    means.push_back(f.mean.mean);
    exits += fmt::format(" N={}: r={:.4f} mean={:.17g};", N, f.radius, f.mean.mean);
  }
  const bool mono = std::is_sorted(means.begin(), means.end());
  return {floor_ok && tilt_ok && mono,
          fmt::format("floor <= exact on {} shifts: {}; tilt difference {:.5f} +- {:.5f} ({} vs {}); exit means{} "
                      "non-decreasing: {}",
                      checked, floor_ok ? "yes" : "no", tilt.difference, tilt.difference_se, tilt.tilted, tilt.base,
                      exits, mono ? "yes" : "no")};
}

Outcome weak_disorder() {
  const auto env = env::EnvModel::gaussian();
  const auto w = walk_k(0.8, 256);
  const auto pi = walk::intersection_probability(walk::build_walk(0.8, walk::SlowlyVaryingSpec::constant(), 0.3, 1e-6),
                                                 4096);
  const double threshold = diag::weak_disorder_threshold(env, pi.pi_hi);
  const double beta = 0.5 * threshold;
  const std::int64_t N = 512;
  const auto ens = ensemble(env, 118);
  const auto traces = diag::simulate(ens, w, beta, N, 200);
  double worst_median = 1e300;
  for (std::int64_t n = 1; n <= N; ++n) {
    std::vector<double> z;
    for (const auto& t : traces) z.push_back(std::exp(t[static_cast<std::size_t>(n - 1)].log_zhat));
    worst_median = std::min(worst_median, stats::quantile(z, 0.5));
  }
  const auto tv = diag::scaled_endpoint_distance(ens, w, beta, N, 200);
  return {worst_median > 1e-2 && tv.mean < 0.1,
          fmt::format("pi_p = {:.5f}, threshold {:.4f}, beta {:.4f}: min_n median Zhat_n = {:.4f}; TV at N=512 mean "
                      "{:.4f} (median {:.4f}, a_N = {})",
                      pi.pi_p, threshold, beta, worst_median, tv.mean, tv.median, tv.a_N)};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Outcome determinism() {
  using harness::Json;
  const std::vector<Json> configs{
      Json{{"kind", "free-energy"}, {"walk", {{"support", 16}}}, {"grid", {{"beta", {0.0, 1.0}}, {"N", {32}}}},
           {"replicas", 24}, {"free_energy", {{"traces", true}, {"endpoint_replicas", 2}}}},
      Json{{"kind", "phase-scan"}, {"walk", {{"support", 16}}},
           {"grid", {{"alpha", {0.8, 1.5}}, {"beta", {0.5, 2.0}}, {"N", {32}}}}, {"replicas", 16}},
      Json{{"kind", "overlap"}, {"walk", {{"support", 8}}}, {"grid", {{"beta", {1.0}}, {"N", {8}}}}, {"replicas", 6},
           {"overlap", {{"mc_samples", 500}}}},
      Json{{"kind", "atoms"}, {"walk", {{"support", 16}}}, {"grid", {{"beta", {3.0}}, {"N", {64}}}}, {"replicas", 12},
           {"atoms", {{"per_step", true}}}},
      Json{{"kind", "fluct"}, {"walk", {{"support", 16}}}, {"grid", {{"beta", {1.0}}, {"N", {64}}}}, {"replicas", 12},
           {"fluct", {{"radius", 4.0}}}},
      Json{{"kind", "blocks"}, {"walk", {{"support", 16}}}, {"grid", {{"beta", {1.0}}, {"N", {16}}}},
           {"replicas", 40}, {"blocks", {{"L", 2}, {"M", 2}, {"shift_k_max", 4}}}},
      Json{{"kind", "bound"}, {"walk", {{"support", 64}}}, {"grid", {{"beta", {1.0, 2.0}}}},
           {"bound", {{"mc_samples", 300}, {"max_rungs", 1}, {"mc_max_steps", 64}}}},
      Json{{"kind", "walk-check"}, {"grid", {{"alpha", {0.8, 1.5}}}}, {"walk_check", {{"horizon", 64}}}},
  };
  const auto root = fs::temp_directory_path() / "polymerlab_acceptance_determinism";
  std::size_t compared = 0;
  std::vector<std::string> mismatches;
  for (const auto& base : configs) {
    std::vector<harness::RunManifest> runs;
    for (unsigned threads : {1u, 4u, 7u}) {
      auto j = base;
      j["master_seed"] = 2718;
      j["threads"] = threads;
      const auto dir = root / fmt::format("{}_{}", j["kind"].get<std::string>(), threads);
      fs::remove_all(dir);
      j["output_dir"] = dir.string();
      runs.push_back(harness::run(harness::validate(j)));
    }
    for (std::size_t i = 1; i < runs.size(); ++i) {
      if (runs[i].files.size() != runs[0].files.size()) {
        mismatches.push_back(base["kind"].get<std::string>());
        continue;
      }
      for (std::size_t f = 0; f < runs[0].files.size(); ++f) {
        const auto& name = runs[0].files[f].name;
        if (name.size() < 4 || name.substr(name.size() - 4) != ".csv") continue;
        const auto a = slurp(fs::path(runs[0].config["output_dir"].get<std::string>()) / name);
        const auto b = slurp(fs::path(runs[i].config["output_dir"].get<std::string>()) / name);
        ++compared;
        if (a != b || a.empty()) mismatches.push_back(base["kind"].get<std::string>() + "/" + name);
      }
    }
    for (const auto& r : runs)
      if (r.partial()) mismatches.push_back(base["kind"].get<std::string>() + " (partial run)");
  }
  return {mismatches.empty() && compared > 0,
          fmt::format("{} CSV comparisons across threads 1/4/7 for all kinds; mismatches: {}", compared,
                      mismatches.empty() ? "none" : fmt::format("{}", fmt::join(mismatches, ", ")))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::function<Outcome()>> checks{
      {"enumeration", enumeration},
      {"martingale", martingale},
      {"jensen", jensen},
      {"fractional_moment", fractional_moment},
      {"overlap_mc", overlap_mc},
      {"comparability", comparability},
      {"recurrence", recurrence},
      {"bound_slope", bound_slope},
      {"exchangeability", exchangeability},
      {"atoms", atoms},
      {"fluctuation", fluctuation},
      {"weak_disorder", weak_disorder},
      {"determinism", determinism},
  };
  if (argc != 2 || !checks.count(argv[1])) {
    std::string names;
    for (const auto& [name, f] : checks) names += " " + name;
    fmt::print(stderr, "usage: acceptance <check>\nchecks:{}\n", names);
    return 2;
  }
  const std::string name = argv[1];
  try {
    const auto o = checks.at(name)();
    fmt::print("{} {}: {}\n", o.pass ? "PASS" : "FAIL", name, o.detail);
    return o.pass ? 0 : 1;
  } catch (const std::exception& e) {
    fmt::print("FAIL {}: exception: {}\n", name, e.what());
    return 1;
  }
}
