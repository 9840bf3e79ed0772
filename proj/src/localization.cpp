#include "polymerlab/localization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "polymerlab/parallel.hpp"

namespace polymerlab::loc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Largest integer radius with |x| <= radius equivalent to |x| < r.
std::int64_t strict_radius(double r) {
  return std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(r)) - 1);
}

void require_gaussian(const env::EnvModel& env, const char* what) {
  if (env.family() != env::Family::gaussian)
    throw LocalizationError(fmt::format("{} needs a gaussian environment", what));
}

/// Continue from `state` to time N under `constraint`; -inf when the
/// constraint cannot be met from the current window.
double continue_log_zhat(polymer::ForwardState state, const env::Environment& field,
                         const polymer::Context& ctx, std::int64_t N,
                         const polymer::PathConstraint& constraint) {
  while (state.n < N) {
    const auto [a, b] = constraint.allowed_range(state.n + 1);
    if (b < state.x_lo - ctx.K() || a > state.x_hi() + ctx.K()) return kNegInf;
    state = polymer::step(state, field, ctx, constraint);
  }
  return state.log_zhat;
}

}  // namespace

double AtomTrace::fraction(std::int64_t n_from, std::int64_t n_to) const {
  n_from = std::max<std::int64_t>(n_from, 1);
  n_to = std::min<std::int64_t>(n_to, static_cast<std::int64_t>(rows.size()));
  if (n_to < n_from) throw LocalizationError("empty range for the atom fraction");
  std::int64_t hits = 0;
  for (std::int64_t n = n_from; n <= n_to; ++n) hits += rows[static_cast<std::size_t>(n - 1)].indicator;
  return static_cast<double>(hits) / static_cast<double>(n_to - n_from + 1);
}

AtomTrace atom_trace(const env::Environment& field, const polymer::Context& ctx, std::int64_t N,
                     double epsilon) {
  if (!(epsilon > 0.0)) throw LocalizationError("epsilon must be positive");
  if (N < 1) throw LocalizationError("atom_trace needs N >= 1");
  std::vector<polymer::TraceRow> trace;
  polymer::run(field, ctx, N, polymer::PathConstraint::none(), &trace);
  AtomTrace out;
  out.epsilon = epsilon;
  out.rows.reserve(trace.size());
  std::int64_t hits = 0;
  for (const auto& t : trace) {
    AtomRow row;
    row.n = t.n;
    row.max_mass = t.max_mu;
    row.indicator = t.max_mu > epsilon;
    hits += row.indicator;
    row.running_fraction = static_cast<double>(hits) / static_cast<double>(t.n);
    out.rows.push_back(row);
  }
  return out;
}

double restricted_ratio(const env::Environment& field, const polymer::Context& ctx,
                        std::int64_t N, double r) {
  if (!(r >= 1.0)) throw LocalizationError(fmt::format("restricted_ratio needs r >= 1, got {}", r));
  if (N < 1) throw LocalizationError("restricted_ratio needs N >= 1");
  if (r > static_cast<double>(ctx.K()) * static_cast<double>(N)) return 1.0;
  const double free = polymer::run(field, ctx, N).log_zhat;
  const double restricted = continue_log_zhat(polymer::init_state(), field, ctx, N,
                                              polymer::PathConstraint::global_window(strict_radius(r)));
  return std::min(1.0, std::exp(restricted - free));
}

double theorem_radius(double alpha, double beta, std::int64_t N, double eps) {
  if (N < 2) throw LocalizationError("the theorem radius needs N >= 2");
  const double ln = std::log(static_cast<double>(N));
  const double d = alpha + 1.0 + eps;
  return beta * beta * static_cast<double>(N) / (4.0 * d * d * ln * ln);
}

Fluctuation fluctuation_probability(const diag::Ensemble& ens, const walk::WalkModel& walk,
                                    double beta, std::int64_t N, double eps,
                                    std::size_t replicas, std::optional<double> radius) {
  if (!(walk.alpha() > 1.0)) throw LocalizationError("fluctuation_probability needs alpha > 1");
  require_gaussian(ens.env, "fluctuation_probability");
  if (!(eps > 0.0)) throw LocalizationError("fluctuation_probability needs eps > 0");
  if (replicas < 2) throw LocalizationError("fluctuation_probability needs at least two replicas");
  Fluctuation out;
  out.N = N;
  out.theorem_mode = !radius.has_value();
  out.radius = radius ? *radius : theorem_radius(walk.alpha(), beta, N, eps);
  out.radius_below_one = out.radius < 1.0;
  if (!(out.radius > 0.0)) throw LocalizationError("the fluctuation radius must be positive");
  const auto ctx = polymer::make_context(walk, ens.env, beta, ens.leak_budget);
  const auto constraint = polymer::PathConstraint::global_window(strict_radius(out.radius));
  const bool inactive = out.radius > static_cast<double>(ctx.K()) * static_cast<double>(N);
  out.per_replica.assign(replicas, 0.0);
  parallel_for(replicas, ens.threads, [&](std::size_t r) {
    if (inactive) return;
    const env::EnvField field(ens.env, ens.seed, ens.first_replica + r);
    const double free = polymer::run(field, ctx, N).log_zhat;
    const double restricted = continue_log_zhat(polymer::init_state(), field, ctx, N, constraint);
    out.per_replica[r] = 1.0 - std::min(1.0, std::exp(restricted - free));
  });
  out.mean = stats::mean_se(out.per_replica);
  return out;
}

BlockLayout BlockLayout::from_theorem(double alpha, double beta, std::int64_t N, double eps,
                                      std::int64_t M) {
  BlockLayout b{N, static_cast<std::int64_t>(std::floor(theorem_radius(alpha, beta, N, eps / 2.0))), M};
  b.validate();
  return b;
}

BlockLayout BlockLayout::with_half_width(std::int64_t N, std::int64_t L, std::int64_t M) {
  BlockLayout b{N, L, M};
  b.validate();
  return b;
}

void BlockLayout::validate() const {
  if (N < 2 || N % 2 != 0) throw LocalizationError(fmt::format("N must be even and >= 2, got {}", N));
  if (L < 1)
    throw LocalizationError(fmt::format(
        "block half-width L = {} at N = {}; the theorem value is below 1, set L explicitly", L, N));
  if (M < 0) throw LocalizationError("M must be >= 0");
}

BlockValues block_partition_functions(const env::Environment& field, const polymer::Context& ctx,
                                      const BlockLayout& layout) {
  layout.validate();
  BlockValues out;
  out.layout = layout;
  const std::int64_t half = layout.N / 2;
  const auto mid = polymer::run(field, ctx, half);
  out.log_zhat_free = continue_log_zhat(mid, field, ctx, layout.N, polymer::PathConstraint::none());
  for (std::int64_t k = -layout.M; k <= layout.M; ++k) {
    const auto c = polymer::PathConstraint::half_time_block(layout.lo(k), layout.hi(k) - 1, half + 1);
    out.log_zhat.push_back(continue_log_zhat(mid, field, ctx, layout.N, c));
  }
  return out;
}

BlockValues block_partition_functions_direct(const env::Environment& field,
                                             const polymer::Context& ctx,
                                             const BlockLayout& layout) {
  layout.validate();
  BlockValues out;
  out.layout = layout;
  const std::int64_t half = layout.N / 2;
  out.log_zhat_free = polymer::run(field, ctx, layout.N).log_zhat;
  for (std::int64_t k = -layout.M; k <= layout.M; ++k) {
    const auto c = polymer::PathConstraint::half_time_block(layout.lo(k), layout.hi(k) - 1, half + 1);
    out.log_zhat.push_back(continue_log_zhat(polymer::init_state(), field, ctx, layout.N, c));
  }
  return out;
}

Exchangeability exchangeability_frequency(const diag::Ensemble& ens, const walk::WalkModel& walk,
                                          double beta, const BlockLayout& layout,
                                          std::size_t replicas) {
  layout.validate();
  require_gaussian(ens.env, "exchangeability_frequency");
  if (replicas < 1) throw LocalizationError("exchangeability_frequency needs replicas >= 1");
  const auto ctx = polymer::make_context(walk, ens.env, beta, ens.leak_budget);
  const std::int64_t half = layout.N / 2;
  const auto block0 =
      polymer::PathConstraint::half_time_block(layout.lo(0), layout.hi(0) - 1, half + 1);
  std::vector<char> hit(replicas, 0);
  parallel_for(replicas, ens.threads, [&](std::size_t r) {
    auto base = std::make_shared<const env::EnvField>(ens.env, ens.seed, ens.first_replica + r);
    // The shift vanishes on the first half, so one first-half state serves every k.
    const auto mid = polymer::run(*base, ctx, half);
    std::vector<double> values;
    for (std::int64_t k = -layout.M; k <= layout.M; ++k) {
      const std::int64_t h = 2 * k * layout.L;
      const env::ShiftedField shifted(base, [h, half](std::int64_t n) { return n > half ? h : 0; });
      values.push_back(continue_log_zhat(mid, shifted, ctx, layout.N, block0));
    }
    const double best = *std::max_element(values.begin(), values.end());
    const auto ties = std::count(values.begin(), values.end(), best);
    if (ties > 1)
      throw LocalizationError(fmt::format("exact tie between shifted block values in replica {}", r));
    hit[r] = values[static_cast<std::size_t>(layout.M)] == best ? 1 : 0;
  });
  Exchangeability out;
  out.layout = layout;
  out.replicas = replicas;
  out.hits = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
  out.frequency = stats::proportion(out.hits, replicas);
  out.expected = 1.0 / static_cast<double>(2 * layout.M + 1);
  return out;
}

ShiftBound shift_rn_bound(const walk::WalkModel& walk, std::int64_t h) {
  const std::int64_t K = walk.support();
  ShiftBound out;
  out.h = h;
  const std::int64_t ah = h < 0 ? -h : h;
  if (ah > 2 * K) throw LocalizationError(fmt::format("shift {} exceeds twice the support {}", h, K));
  out.scan_lo = std::max(-K, h - K);
  out.scan_hi = std::min(K, h + K);
  out.exact_min = std::numeric_limits<double>::infinity();
  for (std::int64_t x = out.scan_lo; x <= out.scan_hi; ++x) {
    const double ratio = walk.pmf(x) / walk.pmf(x - h);
    if (ratio < out.exact_min) {
      out.exact_min = ratio;
      out.argmin_x = x;
    }
  }
  for (std::int64_t x = -K; x <= K; ++x)
    if (x < out.scan_lo || x > out.scan_hi) out.excluded_mass += walk.pmf(x);

  if (h == 0) {
    out.floor = 1.0;
    return out;
  }
  // Generic terms: (|x-h|/|x|)^(alpha+1) L(|x|)/L(|x-h|) with |x-h| >= 1 and
  // |x| <= |x-h| + |h|. log(e + t) is concave with t -> log(e+t)/t decreasing,
  // which bounds the L ratio by a power of the length ratio.
  const double alpha = walk.alpha();
  const double g = walk.L().family == walk::LFamily::log_power ? walk.L().gamma : 0.0;
  const double e1 = alpha + 1.0 + std::max(0.0, -g);
  const double e2 = g - alpha - 1.0;
  out.floor_exponent = std::max(e1, e2);
  const double one_h = 1.0 + static_cast<double>(ah);
  double floor = std::pow(one_h, -out.floor_exponent);
  // x = h: p_h / p_0 = c shape(|h|) |h|^-(alpha+1) / p0, shape >= (1 + |h|)^min(0, g).
  const double c = walk.L().c, p0 = walk.p0();
  if (p0 > 0.0) {
    const double at_h = c * std::pow(static_cast<double>(ah), -(alpha + 1.0)) *
                        std::pow(one_h, std::min(0.0, g)) / p0;
    // x = 0: p_0 / p_{-h} >= p0 |h|^(alpha+1) / (c (1 + |h|)^max(0, g)).
    const double at_0 = p0 * std::pow(static_cast<double>(ah), alpha + 1.0) /
                        (c * std::pow(one_h, std::max(0.0, g)));
    floor = std::min({floor, at_h, at_0});
  }
  // Rounding margin so the floor stays below an exact minimum it touches.
  out.floor = floor * (1.0 - 1e-12);
  return out;
}

ShiftBound shift_rn_bound(const walk::WalkModel& walk, const BlockLayout& layout, std::int64_t k,
                          double delta) {
  layout.validate();
  if (k == 0) throw LocalizationError("shift_rn_bound needs k != 0");
  if (!(delta > 0.0)) throw LocalizationError("shift_rn_bound needs delta > 0");
  auto out = shift_rn_bound(walk, 2 * k * layout.L);
  const double kn = static_cast<double>(k < 0 ? -k : k) * static_cast<double>(layout.N);
  out.potter_constant = out.floor * std::pow(kn, walk.alpha() + 1.0 + delta);
  return out;
}

TiltRegion tilt_region(std::int64_t N, double R) {
  if (N < 2 || N % 2 != 0) throw LocalizationError(fmt::format("N must be even and >= 2, got {}", N));
  if (!(R > 0.0)) throw LocalizationError("the tilt region needs R > 0");
  TiltRegion t;
  t.N = N;
  t.half = strict_radius(R);
  t.shift = 1.0 / std::sqrt(static_cast<double>(N / 2) * static_cast<double>(t.size()));
  t.region = env::Region{N / 2 + 1, N + 1, -t.half, t.half + 1};
  return t;
}

std::shared_ptr<const env::TiltedField> tilted_environment(
    std::shared_ptr<const env::Environment> base, const env::EnvModel& env, const TiltRegion& t) {
  require_gaussian(env, "tilted_environment");
  return std::make_shared<const env::TiltedField>(std::move(base), t.region, t.shift);
}

TiltIdentity tilt_identity(const diag::Ensemble& ens, const walk::WalkModel& walk, double beta,
                           std::int64_t N, double R, std::size_t replicas) {
  require_gaussian(ens.env, "tilt_identity");
  if (replicas < 2) throw LocalizationError("tilt_identity needs at least two replicas");
  const auto t = tilt_region(N, R);
  const auto ctx = polymer::make_context(walk, ens.env, beta, ens.leak_budget);
  const auto window = polymer::PathConstraint::global_window(t.half);
  std::vector<double> tilted(replicas), base_v(replicas), diff(replicas);
  parallel_for(replicas, ens.threads, [&](std::size_t r) {
    auto base = std::make_shared<const env::EnvField>(ens.env, ens.seed, ens.first_replica + r);
    const auto hat = tilted_environment(base, ens.env, t);
    double sum = 0.0;
    std::vector<double> row(static_cast<std::size_t>(t.size()));
    for (std::int64_t n = t.region.n_lo; n < t.region.n_hi; ++n) {
      base->fill_row(n, t.region.x_lo, row);
      for (double w : row) sum += w;
    }
    const double W = sum * t.shift;
    auto ratio = [&](const env::Environment& f) {
      const double free = polymer::run(f, ctx, N).log_zhat;
      const double restricted = continue_log_zhat(polymer::init_state(), f, ctx, N, window);
      return std::min(1.0, std::exp(restricted - free));
    };
    tilted[r] = std::exp(-W - 0.5) * ratio(*hat);
    base_v[r] = ratio(*base);
    diff[r] = tilted[r] - base_v[r];
  });
  TiltIdentity out;
  out.replicas = replicas;
  const auto a = stats::mean_se(tilted), b = stats::mean_se(base_v), d = stats::mean_se(diff);
  out.tilted = a.mean;
  out.tilted_se = a.se;
  out.base = b.mean;
  out.base_se = b.se;
  out.difference = d.mean;
  out.difference_se = d.se;
  return out;
}

}  // namespace polymerlab::loc
