#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "polymerlab/convolution.hpp"
#include "polymerlab/localization.hpp"

using namespace polymerlab;
using namespace polymerlab::loc;

namespace {

walk::WalkModel walk15(std::int64_t K = 16) {
  return walk::build_walk_with_support(1.5, walk::SlowlyVaryingSpec::constant(), 0.3, K);
}

diag::Ensemble ensemble(std::uint64_t seed, unsigned threads = 2) {
  diag::Ensemble e;
  e.env = env::EnvModel::gaussian();
  e.seed = seed;
  e.threads = threads;
  return e;
}

class Spike final : public env::Environment {
 public:
  Spike(std::int64_t n, std::int64_t x, double value) : n_(n), x_(x), value_(value) {}
  double omega(std::int64_t n, std::int64_t x) const override {
    return n == n_ && x == x_ ? value_ : 0.0;
  }

 private:
  std::int64_t n_, x_;
  double value_;
};

}  // namespace

TEST_CASE("atoms at beta zero follow the free convolution powers") {
  const auto w = walk15();
  const auto ctx = polymer::make_context(w, env::EnvModel::gaussian(), 0.0);
  const env::EnvField field(env::EnvModel::gaussian(), 1, 0);
  const auto trace = atom_trace(field, ctx, 24, 0.05);
  const auto q = walk::renormalized_kernel(w);
  std::vector<double> law{1.0};
  for (std::int64_t n = 1; n <= 24; ++n) {
    law = conv::direct(law, q);
    const double mx = *std::max_element(law.begin(), law.end());
    CHECK(trace.rows[static_cast<std::size_t>(n - 1)].max_mass == doctest::Approx(mx).epsilon(1e-12));
  }
  CHECK(trace.rows.back().running_fraction >= 0.0);
  CHECK(trace.rows.back().running_fraction <= 1.0);
  const auto none = atom_trace(field, ctx, 24, 1.0);
  for (const auto& r : none.rows) CHECK_FALSE(r.indicator);
  CHECK(none.fraction(1, 24) == 0.0);
}

TEST_CASE("a dominant site creates an atom one step later") {
  const auto w = walk15();
  const auto ctx = polymer::make_context(w, env::EnvModel::gaussian(), 5.0);
  const Spike spike(1, 3, 10.0);
  const auto trace = atom_trace(spike, ctx, 2, 0.25);
  // The time-1 law sits almost entirely on x = 3, so mu_2 ~ q(. - 3).
  CHECK(trace.rows[1].max_mass == doctest::Approx(w.pmf(0) / (1.0 - w.tail_mass())).epsilon(1e-6));
  CHECK(trace.rows[1].indicator);
  CHECK(trace.rows[0].indicator == (trace.rows[0].max_mass > 0.25));
}

TEST_CASE("restricted ratio") {
  const auto w = walk15();
  const env::EnvField field(env::EnvModel::gaussian(), 4, 2);
  const auto ctx = polymer::make_context(w, env::EnvModel::gaussian(), 0.8);
  CHECK(restricted_ratio(field, ctx, 10, 16.0 * 10.0 + 1.0) == 1.0);
  double previous = 0.0;
  for (double r : {1.0, 2.0, 4.0, 8.0, 16.0, 40.0}) {
    const double v = restricted_ratio(field, ctx, 10, r);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v >= previous);
    previous = v;
  }
  CHECK_THROWS_AS(restricted_ratio(field, ctx, 10, 0.5), LocalizationError);

  // beta = 0 against a free-walk Monte Carlo.
  const auto free_ctx = polymer::make_context(w, env::EnvModel::gaussian(), 0.0);
  const double exact = restricted_ratio(field, free_ctx, 12, 6.0);
  const int samples = 20000;
  int inside = 0;
  for (int j = 0; j < samples; ++j) {
    CounterRng rng(77, static_cast<std::uint64_t>(j));
    std::int64_t s = 0;
    bool ok = true;
    for (int n = 0; n < 12; ++n) {
      s += w.sample(rng);
      ok = ok && std::llabs(s) < 6;
    }
    inside += ok;
  }
  const double p = static_cast<double>(inside) / samples;
  CHECK(std::fabs(p - exact) <= 3.0 * std::sqrt(p * (1.0 - p) / samples));
}

TEST_CASE("fluctuation probability") {
  const auto w = walk15();
  CHECK(theorem_radius(1.5, 1.0, 4096, 0.1) == doctest::Approx(4096.0 / (4.0 * 2.6 * 2.6 * std::pow(std::log(4096.0), 2))));
  const auto flagged = fluctuation_probability(ensemble(3), w, 1.0, 64, 0.1, 4);
  CHECK(flagged.theorem_mode);
  CHECK(flagged.radius_below_one);
  const auto user = fluctuation_probability(ensemble(3), w, 0.0, 64, 0.1, 4, 2.0);
  CHECK_FALSE(user.theorem_mode);
  for (double v : user.per_replica) CHECK(v > 0.99);
  const auto wide = fluctuation_probability(ensemble(3), w, 1.0, 8, 0.1, 3, 1e6);
  CHECK(wide.mean.mean == 0.0);
  auto rad = ensemble(3);
  rad.env = env::EnvModel::rademacher();
  CHECK_THROWS_AS(fluctuation_probability(rad, w, 1.0, 64, 0.1, 4), LocalizationError);
}

TEST_CASE("block partition functions") {
  const auto w = walk15();
  const env::EnvField field(env::EnvModel::gaussian(), 8, 1);
  const auto ctx = polymer::make_context(w, env::EnvModel::gaussian(), 0.7);
  const auto layout = BlockLayout::with_half_width(20, 3, 3);
  const auto shared = block_partition_functions(field, ctx, layout);
  const auto direct = block_partition_functions_direct(field, ctx, layout);
  REQUIRE(shared.log_zhat.size() == 7);
  double total = 0.0;
  for (std::size_t i = 0; i < shared.log_zhat.size(); ++i) {
    CHECK(shared.log_zhat[i] == doctest::Approx(direct.log_zhat[i]).epsilon(1e-12));
    total += std::exp(shared.log_zhat[i]);
  }
  CHECK(shared.log_zhat_free == doctest::Approx(direct.log_zhat_free).epsilon(1e-12));
  CHECK(total <= std::exp(shared.log_zhat_free) * (1.0 + 1e-12));
  CHECK_THROWS_AS(BlockLayout::with_half_width(21, 3, 1), LocalizationError);
  CHECK_THROWS_AS(BlockLayout::from_theorem(1.5, 1.0, 32, 0.1, 1), LocalizationError);
  CHECK(BlockLayout::from_theorem(1.5, 4.0, 4096, 0.1, 1).L >= 1);
}

TEST_CASE("exchangeability of shifted blocks") {
  const auto w = walk15(8);
  const auto single = exchangeability_frequency(ensemble(5), w, 1.0, BlockLayout::with_half_width(16, 3, 0), 20);
  CHECK(single.frequency.estimate == 1.0);
  const auto three = exchangeability_frequency(ensemble(6), w, 1.0, BlockLayout::with_half_width(16, 3, 1), 600);
  CHECK(std::fabs(three.frequency.estimate - 1.0 / 3.0) <= 3.0 * three.frequency.se);
  const auto t1 = exchangeability_frequency(ensemble(6, 1), w, 1.0, BlockLayout::with_half_width(16, 3, 1), 50);
  const auto t4 = exchangeability_frequency(ensemble(6, 4), w, 1.0, BlockLayout::with_half_width(16, 3, 1), 50);
  CHECK(t1.hits == t4.hits);
}

TEST_CASE("shift density ratio against brute force") {
  const auto w = walk::build_walk_with_support(1.5, walk::SlowlyVaryingSpec::constant(), 0.3, 100);
  const auto zero = shift_rn_bound(w, 0);
  CHECK(zero.exact_min == 1.0);
  const std::int64_t h = 10;
  const auto b = shift_rn_bound(w, h);
  const double c = w.L().c, p0 = w.p0();
  double brute = 1e300;
  for (std::int64_t x = -100; x <= 100; ++x) {
    if (std::llabs(x - h) > 100) continue;
    double v;
    if (x == 0)
      v = p0 / (c * std::pow(static_cast<double>(h), -2.5));
    else if (x == h)
      v = c * std::pow(static_cast<double>(h), -2.5) / p0;
    else
      v = std::pow(std::fabs(1.0 - static_cast<double>(h) / static_cast<double>(x)), 2.5);
    brute = std::min(brute, v);
  }
  CHECK(b.exact_min == doctest::Approx(brute).epsilon(1e-12));
  CHECK(b.scan_lo == -90);
  CHECK(b.scan_hi == 100);
  CHECK(b.excluded_mass > 0.0);

  for (auto L : {walk::SlowlyVaryingSpec::constant(), walk::SlowlyVaryingSpec::log_power(1.0, 2.0),
                 walk::SlowlyVaryingSpec::log_power(1.0, -1.5)}) {
    const auto wl = walk::build_walk_with_support(1.5, L, 0.2, 400);
    for (std::int64_t hh : {1, 2, 5, 17, 64, 200, -33}) {
      const auto s = shift_rn_bound(wl, hh);
      CHECK(s.exact_min > 0.0);
      CHECK(s.exact_min >= s.floor);
    }
  }
}

TEST_CASE("tilted environment") {
  auto base = std::make_shared<const env::EnvField>(env::EnvModel::gaussian(), 12, 0);
  const auto t = tilt_region(16, 3.5);
  CHECK(t.half == 3);
  CHECK(t.size() == 7);
  CHECK(t.shift == doctest::Approx(1.0 / std::sqrt(8.0 * 7.0)));
  const auto hat = tilted_environment(base, env::EnvModel::gaussian(), t);
  for (std::int64_t n = 1; n <= 18; ++n)
    for (std::int64_t x = -6; x <= 6; ++x) {
      const double b = base->omega(n, x), v = hat->omega(n, x);
      if (n >= 9 && n <= 16 && std::llabs(x) <= 3)
        CHECK(v - b == doctest::Approx(t.shift).epsilon(1e-12));
      else
        CHECK(v == b);
    }
  CHECK_THROWS_AS(tilted_environment(base, env::EnvModel::rademacher(), t), LocalizationError);

  const auto id = tilt_identity(ensemble(14), walk15(8), 1.0, 16, 3.5, 300);
  CHECK(std::fabs(id.difference) <= 3.0 * id.difference_se);
}
