#include <doctest.h>

#include <cmath>
#include <vector>

#include "polymerlab/diagnostics.hpp"

using namespace polymerlab;
using namespace polymerlab::diag;

namespace {

walk::WalkModel walk15(std::int64_t K = 8) {
  return walk::build_walk_with_support(1.5, walk::SlowlyVaryingSpec::constant(), 0.5, K);
}

Ensemble ensemble(std::uint64_t seed, unsigned threads = 2) {
  Ensemble e;
  e.env = env::EnvModel::gaussian();
  e.seed = seed;
  e.threads = threads;
  return e;
}

}  // namespace

TEST_CASE("free energy at beta zero is exactly zero") {
  const auto fe = free_energy(ensemble(1), walk15(), 0.0, 32, 5);
  CHECK(fe.p_hat == 0.0);
  CHECK(fe.se == 0.0);
  CHECK_THROWS_AS(free_energy(ensemble(1), walk15(), 0.5, 8, 1), DiagnosticsError);
}

TEST_CASE("jensen chain for free energy and fractional moments") {
  const auto w = walk15();
  for (double beta : {0.3, 0.8, 1.5}) {
    const auto traces = simulate(ensemble(3), w, beta, 64, 60);
    const auto fe = free_energy_from(traces, 64);
    CHECK(fe.p_hat <= 3.0 * fe.se);
    const auto fm = fractional_moment_from(traces, 0.5, {0, 16, 32, 64});
    CHECK(fm.rows[0].mean == 1.0);
    for (const auto& r : fm.rows) CHECK(r.mean <= 1.0 + 3.0 * r.se);
  }
}

TEST_CASE("simulation is independent of the thread count") {
  const auto w = walk15();
  const auto a = simulate(ensemble(9, 1), w, 1.0, 40, 12);
  const auto b = simulate(ensemble(9, 5), w, 1.0, 40, 12);
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t n = 0; n < a[r].size(); ++n) {
      REQUIRE(a[r][n].log_zhat == b[r][n].log_zhat);
      REQUIRE(a[r][n].overlap == b[r][n].overlap);
    }
}

TEST_CASE("fractional moments decay at a strong disorder point") {
  const auto fm = fractional_moment(ensemble(4), walk15(), 2.0, 0.5, {16, 32, 64, 128}, 100);
  CHECK(fm.rate < 0.0);
  CHECK(fm.decaying_at_99());
}

TEST_CASE("recursion trace closed forms") {
  const std::vector<double> b{1.0, 2.0, 5.0, 3.0, 10.0};
  const std::vector<double> zero(b.size(), 0.0);
  const auto tr = fractional_moment_recursion_trace(0.5, 0.7, b, zero, 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    s += 1.0 / b[i];
    CHECK(std::fabs(tr.bound[i + 1] - std::exp(-0.35 * s)) < 1e-12);
  }
  const std::vector<double> constant(20, 4.0), zeros(20, 0.0);
  const auto g = fractional_moment_recursion_trace(0.5, 1.0, constant, zeros);
  for (std::size_t i = 1; i < g.bound.size(); ++i)
    CHECK(g.bound[i] / g.bound[i - 1] == doctest::Approx(std::exp(-1.0 / 8.0)).epsilon(1e-14));
  CHECK_THROWS_AS(fractional_moment_recursion_trace(0.5, 1.0, {1.0, -1.0}, {0.0, 0.0}), DiagnosticsError);
  CHECK_THROWS_AS(fractional_moment_recursion_trace(1.0, 1.0, {1.0}, {0.0}), DiagnosticsError);
  CHECK_THROWS_AS(fractional_moment_recursion_trace(0.5, 0.0, {1.0}, {0.0}), DiagnosticsError);
}

TEST_CASE("recursion with b_n = a_n log n drives the bound to epsilon") {
  const auto w = walk::build_walk(1.5, walk::SlowlyVaryingSpec::constant(), 0.5, 1e-8);
  const std::int64_t N = 200000;
  const auto seq = walk::scaling_sequence(w, N);
  std::vector<double> b, tails;
  for (std::int64_t n = 1; n <= N; ++n) {
    b.push_back(double(seq[n]) * std::log(double(n) + 2.0));
    tails.push_back(0.0);
  }
  const double eps = 1e-3;
  const auto tr = fractional_moment_recursion_trace(0.5, 1.0, b, tails, eps);
  CHECK(tr.bound.back() - eps < 1e-3 * (1.0 - eps));
  for (std::size_t i = 1; i < tr.bound.size(); ++i) REQUIRE(tr.bound[i] <= tr.bound[i - 1]);
}

TEST_CASE("overlap ratios") {
  const auto w = walk15();
  const auto zero = overlap_log_ratio(ensemble(5), w, 0.0, {8, 16}, 6);
  for (const auto& s : zero.per_N) {
    CHECK(s.flagged == 6);
    CHECK(s.valid == 0);
  }
  const auto r = overlap_log_ratio(ensemble(5), w, 1.5, {16, 32}, 30);
  for (const auto& row : r.ratios)
    for (double v : row)
      if (!std::isnan(v)) CHECK(v > 0.0);
  for (const auto& s : r.per_N) CHECK(s.valid + s.flagged == 30);
}

TEST_CASE("weak disorder criterion") {
  const auto rec = walk15();
  CHECK(weak_disorder_criterion(env::EnvModel::gaussian(), rec, 0.3).verdict == Verdict::inapplicable);
  const auto w = walk::build_walk(0.8, walk::SlowlyVaryingSpec::constant(), 0.3, 1e-4);
  const auto pi = walk::intersection_probability(w, 4096);
  const auto g = env::EnvModel::gaussian();
  CHECK(weak_disorder_criterion(g, pi, 0.0).verdict == Verdict::holds);
  const double star = weak_disorder_threshold(g, pi.pi_p);
  CHECK(star == doctest::Approx(std::sqrt(-std::log(pi.pi_p))));
  // The bisection path agrees with the closed form.
  CHECK(weak_disorder_threshold(env::EnvModel::gaussian(100.0), pi.pi_p) ==
        doctest::Approx(star).epsilon(1e-12));
  CHECK(weak_disorder_criterion(g, pi, 0.5 * star).verdict == Verdict::holds);
  CHECK(weak_disorder_criterion(g, pi, 1.5 * star).verdict == Verdict::fails);
  CHECK(weak_disorder_criterion(g, pi, 0.5 * star).margin ==
        doctest::Approx(-std::log(pi.pi_p) - 0.25 * star * star));
  // Rademacher: lambda(2b) - 2 lambda(b) < log 2, so small pi_p means weak disorder at all beta.
  CHECK(std::isinf(weak_disorder_threshold(env::EnvModel::rademacher(), 0.4)));
}

TEST_CASE("strong disorder criterion") {
  const auto w = walk15(50);
  const auto h = walk::walk_entropy(w);
  const auto g = env::EnvModel::gaussian();
  CHECK(strong_disorder_criterion(g, w, 0.0).verdict == Verdict::fails);
  const double star = strong_disorder_threshold(g, h.value);
  CHECK(star == doctest::Approx(std::sqrt(2.0 * h.value)));
  CHECK(strong_disorder_threshold(env::EnvModel::gaussian(100.0), h.value) ==
        doctest::Approx(star).epsilon(1e-12));
  CHECK(strong_disorder_criterion(g, h, 2.0 * star).verdict == Verdict::holds);
  CHECK(strong_disorder_criterion(g, h, 0.5 * star).verdict == Verdict::fails);
}

TEST_CASE("criteria never both hold and the guard aborts if they do") {
  const auto w = walk::build_walk(0.8, walk::SlowlyVaryingSpec::constant(), 0.3, 1e-4);
  const auto pi = walk::intersection_probability(w, 4096);
  const auto h = walk::walk_entropy(w);
  for (const auto& e : {env::EnvModel::gaussian(), env::EnvModel::rademacher()})
    for (double beta = 0.0; beta <= 5.0; beta += 0.05)
      CHECK_NOTHROW(check_exclusive(weak_disorder_criterion(e, pi, beta),
                                    strong_disorder_criterion(e, h, beta)));
  Criterion a, b;
  a.verdict = b.verdict = Verdict::holds;
  CHECK_THROWS_AS(check_exclusive(a, b), DiagnosticsError);
}

TEST_CASE("scaled endpoint distance") {
  const auto w = walk15();
  const auto zero = scaled_endpoint_distance(ensemble(6), w, 0.0, 32, 4);
  for (double d : zero.per_replica) CHECK(d == 0.0);
  const auto d = scaled_endpoint_distance(ensemble(6), w, 1.0, 32, 10);
  for (double v : d.per_replica) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(d.mean > 0.0);
}

TEST_CASE("phase scan") {
  PhaseScanConfig cfg;
  cfg.support = 8;
  cfg.N = 32;
  cfg.replicas = 40;
  cfg.ensemble = ensemble(12);
  CHECK(phase_scan(cfg).empty());
  cfg.cells = {{1.5, 0.5}, {1.5, 0.5}, {1.5, 1.0}, {1.5, 1.5}, {1.5, 2.5}};
  const auto rows = phase_scan(cfg);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].p_hat == rows[1].p_hat);
  CHECK(rows[0].fm_rate == rows[1].fm_rate);
  for (std::size_t i = 2; i < rows.size(); ++i)
    CHECK(rows[i].p_hat <= rows[i - 1].p_hat + 3.0 * (rows[i].p_se + rows[i - 1].p_se));
  CHECK(rows.back().verdict == PhaseVerdict::very_strong_consistent);
  for (const auto& r : rows) CHECK(r.weak == Verdict::inapplicable);
  cfg.cells = {{-1.0, 0.5}};
  const auto bad = phase_scan(cfg);
  CHECK(bad[0].verdict == PhaseVerdict::error);
  CHECK_FALSE(bad[0].error.empty());
}

TEST_CASE("shared seeds preserve the per-beta marginal") {
  const auto w = walk15();
  const auto shared = free_energy(ensemble(100), w, 1.0, 64, 150);
  const auto fresh = free_energy(ensemble(7777), w, 1.0, 64, 150);
  CHECK(std::fabs(shared.p_hat - fresh.p_hat) < 3.0 * std::hypot(shared.se, fresh.se));
}
