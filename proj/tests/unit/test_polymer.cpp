#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "oracles/enumeration.hpp"
#include "polymerlab/convolution.hpp"
#include "polymerlab/polymer.hpp"

using namespace polymerlab;
using namespace polymerlab::polymer;

namespace {

walk::WalkModel small_walk(std::int64_t K, double alpha = 1.5, double p0 = 0.4) {
  return walk::build_walk_with_support(alpha, walk::SlowlyVaryingSpec::constant(), p0, K);
}

}  // namespace

TEST_CASE("initial state") {
  const auto s = init_state();
  CHECK(s.n == 0);
  CHECK(s.x_lo == 0);
  CHECK(s.rho.size() == 1);
  CHECK(s.rho[0] == 1.0);
  CHECK(s.log_zhat == 0.0);
  CHECK(s.leaked_mass == 0.0);
}

TEST_CASE("transfer matrix matches path enumeration") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::int64_t K = 1 + static_cast<std::int64_t>(seed % 3);
    const int N = 1 + static_cast<int>(seed % 4);
    const auto env = seed % 2 ? env::EnvModel::gaussian() : env::EnvModel::rademacher();
    const double beta = 0.3 + 0.1 * static_cast<double>(seed % 7);
    const auto w = small_walk(K);
    const auto ctx = make_context(w, env, beta);
    const env::EnvField field(env, seed, 0);
    const auto states = run_states(field, ctx, N);
    const auto ref = oracle::enumerate_paths(
        walk::renormalized_kernel(w), N, beta, env::lambda(env, beta),
        [&](std::int64_t n, std::int64_t x) { return field.omega(n, x); });
    CAPTURE(seed);
    const auto& s = states.back();
    CHECK(std::fabs(s.log_zhat - ref.log_zhat) < 1e-12);
    for (const auto& [x, p] : ref.endpoint) CHECK(std::fabs(s.rho_at(x) - p) < 1e-12);
    CHECK(std::fabs(overlap(s, ctx) - ref.overlap_next) < 1e-12);
    // The overlap recorded by a step uses the previous state's law.
    const auto one_more = step(s, field, ctx);
    CHECK(one_more.overlap == doctest::Approx(ref.overlap_next).epsilon(1e-14));
  }
}

TEST_CASE("free walk at beta zero") {
  const auto w = small_walk(6);
  const auto ctx = make_context(w, env::EnvModel::gaussian(), 0.0);
  const env::EnvField field(env::EnvModel::gaussian(), 1, 0);
  const auto s = run(field, ctx, 10);
  CHECK(s.log_zhat == 0.0);
  std::vector<double> law{1.0};
  const auto kernel = walk::renormalized_kernel(w);
  for (int i = 0; i < 10; ++i) law = conv::direct(law, kernel);
  for (std::int64_t x = -60; x <= 60; ++x)
    CHECK(std::fabs(s.rho_at(x) - law[static_cast<std::size_t>(x + 60)]) < 1e-14);
}

TEST_CASE("single step closed form and overlap of the bare kernel") {
  const auto w = small_walk(5);
  const auto env = env::EnvModel::gaussian();
  const env::EnvField field(env, 9, 3);
  const double beta = 0.8;
  const auto ctx = make_context(w, env, beta);
  const auto s = step(init_state(), field, ctx);
  const auto kernel = walk::renormalized_kernel(w);
  double z = 0.0, q2 = 0.0;
  for (std::int64_t k = -5; k <= 5; ++k) {
    const double q = kernel[static_cast<std::size_t>(k + 5)];
    z += q * std::exp(beta * field.omega(1, k) - beta * beta / 2);
    q2 += q * q;
  }
  CHECK(s.log_zhat == doctest::Approx(std::log(z)).epsilon(1e-14));
  CHECK(s.overlap == doctest::Approx(q2).epsilon(1e-14));
  double total = 0.0;
  for (double p : s.rho) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("strong disorder single step concentrates on the heaviest site") {
  const auto w = small_walk(4);
  const auto env = env::EnvModel::gaussian();
  const env::EnvField field(env, 21, 0);
  const auto ctx = make_context(w, env, 60.0);
  const auto s = step(init_state(), field, ctx);
  std::int64_t best = -4;
  double best_w = -1e300;
  for (std::int64_t x = -4; x <= 4; ++x) {
    const double lw = std::log(w.pmf(x)) + 60.0 * field.omega(1, x);
    if (lw > best_w) {
      best_w = lw;
      best = x;
    }
  }
  CHECK(s.argmax_x == best);
  CHECK(s.max_endpoint_mass > 0.99);
}

TEST_CASE("constraints restrict and never increase the partition function") {
  const auto w = small_walk(3);
  const auto env = env::EnvModel::gaussian();
  const auto ctx = make_context(w, env, 0.9);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const env::EnvField field(env, seed, 0);
    const auto free = run(field, ctx, 20);
    const auto wide = run(field, ctx, 20, PathConstraint::global_window(3 * 20 + 1));
    CHECK(wide.log_zhat == free.log_zhat);
    CHECK(wide.rho == free.rho);
    const auto narrow = run(field, ctx, 20, PathConstraint::global_window(4));
    CHECK(narrow.log_zhat <= free.log_zhat);
    CHECK(narrow.x_lo >= -4);
    CHECK(narrow.x_hi() <= 4);
    const auto block = run(field, ctx, 20, PathConstraint::half_time_block(0, 5, 11));
    CHECK(block.log_zhat <= free.log_zhat);
    CHECK(block.x_lo >= 0);
    CHECK(block.x_hi() <= 5);
  }
  CHECK_THROWS_AS(PathConstraint::half_time_block(2, 1, 3), PolymerError);
  CHECK_THROWS_AS(PathConstraint::global_window(-1), PolymerError);
}

TEST_CASE("overlap lies in (0, 1] and endpoint law sums to one") {
  const auto w = small_walk(8, 0.8, 0.3);
  const auto env = env::EnvModel::rademacher();
  const auto ctx = make_context(w, env, 1.5);
  const env::EnvField field(env, 77, 1);
  std::vector<TraceRow> trace;
  const auto s = run(field, ctx, 50, PathConstraint::none(), &trace);
  REQUIRE(trace.size() == 50);
  for (const auto& r : trace) {
    CHECK(r.overlap > 0.0);
    CHECK(r.overlap <= 1.0);
    CHECK(r.max_mu <= 1.0);
  }
  double total = 0.0;
  for (double p : endpoint_law(s).p) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("endpoint argmax is invariant under a constant shift at the last time") {
  const auto w = small_walk(5);
  const auto env = env::EnvModel::gaussian();
  const auto ctx = make_context(w, env, 1.2);
  auto base = std::make_shared<env::EnvField>(env, 31, 0);
  const env::TiltedField shifted(base, env::Region{12, 13, -1000, 1000}, 0.7);
  const auto a = run(*base, ctx, 12);
  const auto b = run(shifted, ctx, 12);
  CHECK(a.argmax_x == b.argmax_x);
  for (std::size_t i = 0; i < a.rho.size(); ++i) CHECK(a.rho[i] == doctest::Approx(b.rho[i]).epsilon(1e-12));
  CHECK(b.log_zhat - a.log_zhat == doctest::Approx(1.2 * 0.7).epsilon(1e-12));
}

TEST_CASE("leak budget is enforced") {
  const auto w = small_walk(20, 1.5, 0.1);
  const auto env = env::EnvModel::gaussian();
  const auto ctx = make_context(w, env, 4.0, 1e-300);
  const env::EnvField field(env, 2, 0);
  CHECK_THROWS_AS(run(field, ctx, 40), PolymerError);
}

TEST_CASE("two-replica Monte Carlo reproduces the exact overlap") {
  const auto w = small_walk(4, 1.5, 0.3);
  const auto env = env::EnvModel::gaussian();
  const auto ctx = make_context(w, env, 1.0);
  const env::EnvField field(env, 8, 0);
  const auto states = run_states(field, ctx, 5);
  const double exact = overlap(states[4], ctx);
  const auto mc = two_replica_overlap_mc(field, ctx, 5, 20000, 123);
  CHECK(std::fabs(mc.mean - exact) < 3.0 * mc.se);
  const auto one = two_replica_overlap_mc(field, ctx, 5, 1, 123);
  CHECK_FALSE(one.se_defined());
  // Sampled paths respect the kernel support and start at the origin.
  CounterRng rng(1, 1);
  for (int i = 0; i < 100; ++i) {
    const auto p = sample_path(states, ctx, rng);
    CHECK(p.front() == 0);
    for (std::size_t n = 1; n < p.size(); ++n) CHECK(std::llabs(p[n] - p[n - 1]) <= 4);
  }
}
