#include "polymerlab/polymer.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

namespace polymerlab::polymer {

PathConstraint PathConstraint::global_window(std::int64_t r) {
  if (r < 0) throw PolymerError("global window radius must be >= 0");
  PathConstraint c;
  c.radius = r;
  return c;
}

PathConstraint PathConstraint::half_time_block(std::int64_t lo, std::int64_t hi,
                                               std::int64_t from_n) {
  if (lo > hi) throw PolymerError("half-time block interval is empty");
  if (from_n < 1) throw PolymerError("half-time block must start at n >= 1");
  PathConstraint c;
  c.block = Block{lo, hi, from_n};
  return c;
}

bool PathConstraint::allows(std::int64_t n, std::int64_t x) const noexcept {
  const auto [lo, hi] = allowed_range(n);
  return x >= lo && x <= hi;
}

std::pair<std::int64_t, std::int64_t> PathConstraint::allowed_range(std::int64_t n) const noexcept {
  std::int64_t lo = std::numeric_limits<std::int64_t>::min();
  std::int64_t hi = std::numeric_limits<std::int64_t>::max();
  if (n >= 1 && radius) {
    lo = -*radius;
    hi = *radius;
  }
  if (block && n >= block->from_n) {
    lo = std::max(lo, block->lo);
    hi = std::min(hi, block->hi);
  }
  return {lo, hi};
}

Context make_context(const walk::WalkModel& walk, const env::EnvModel& env, double beta,
                     double leak_budget) {
  Context ctx{walk, beta, env::lambda(env, beta), leak_budget,
              std::make_shared<conv::KernelConvolver>(walk::renormalized_kernel(walk))};
  return ctx;
}

ForwardState init_state() { return ForwardState{}; }

std::vector<double> free_step(const ForwardState& state, const Context& ctx) {
  std::vector<double> mu;
  ctx.kernel->apply(state.rho, mu);
  return mu;
}

double overlap(const ForwardState& state, const Context& ctx) {
  double acc = 0.0;
  for (double m : free_step(state, ctx)) acc += m * m;
  return acc;
}

ForwardState step(const ForwardState& state, const env::Environment& field, const Context& ctx,
                  const PathConstraint& constraint) {
  const std::int64_t K = ctx.K();
  ForwardState next;
  next.n = state.n + 1;
  std::vector<double> w = free_step(state, ctx);
  std::int64_t lo = state.x_lo - K;

  double ov = 0.0, mu_max = 0.0;
  for (double m : w) {
    ov += m * m;
    mu_max = std::max(mu_max, m);
  }
  next.overlap = ov;
  next.max_mu = mu_max;

  if (constraint.active()) {
    const auto [a, b] = constraint.allowed_range(next.n);
    const std::int64_t hi = lo + static_cast<std::int64_t>(w.size()) - 1;
    const std::int64_t keep_lo = std::max(lo, a), keep_hi = std::min(hi, b);
    if (keep_lo > keep_hi)
      throw PolymerError(fmt::format("constraint leaves no mass at n = {}", next.n));
    w.erase(w.begin() + (keep_hi - lo + 1), w.end());
    w.erase(w.begin(), w.begin() + (keep_lo - lo));
    lo = keep_lo;
  }

  const bool weighted = ctx.beta != 0.0;
  // Gibbs factors are scaled by exp(-shift) so large beta cannot underflow.
  double shift = 0.0;
  if (weighted) {
    std::vector<double> e(w.size());
    field.fill_row(next.n, lo, e);
    shift = -std::numeric_limits<double>::infinity();
    for (double& v : e) {
      v = ctx.beta * v - ctx.lambda_beta;
      shift = std::max(shift, v);
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= std::exp(e[i] - shift);
  }

  double total = 0.0, peak = 0.0;
  for (double v : w) {
    total += v;
    peak = std::max(peak, v);
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw PolymerError(fmt::format("partition function degenerate at n = {}", next.n));

  const double thr = kTrimRatio * peak;
  std::size_t first = 0, last = w.size() - 1;
  while (w[first] < thr) ++first;
  while (w[last] < thr) --last;
  double trimmed = 0.0;
  for (std::size_t i = 0; i < first; ++i) trimmed += w[i];
  for (std::size_t i = last + 1; i < w.size(); ++i) trimmed += w[i];

  // A free unconstrained step preserves mass exactly; skip the rounding.
  const bool exact_unit = !weighted && !constraint.active();
  next.log_zhat = state.log_zhat + (exact_unit ? 0.0 : shift + std::log(total));
  next.leaked_mass = state.leaked_mass + trimmed / total;
  if (next.leaked_mass > ctx.leak_budget)
    throw PolymerError(fmt::format("leaked mass {:.3g} exceeds budget {:.3g} at n = {}",
                                   next.leaked_mass, ctx.leak_budget, next.n));

  next.x_lo = lo + static_cast<std::int64_t>(first);
  next.rho.assign(w.begin() + static_cast<std::ptrdiff_t>(first),
                  w.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  const double kept = total - trimmed;
  double best = -1.0;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < next.rho.size(); ++i) {
    next.rho[i] /= kept;
    if (next.rho[i] > best) {
      best = next.rho[i];
      arg = i;
    }
  }
  next.max_endpoint_mass = best;
  next.argmax_x = next.x_lo + static_cast<std::int64_t>(arg);
  return next;
}

ForwardState run(const env::Environment& field, const Context& ctx, std::int64_t N,
                 const PathConstraint& constraint, std::vector<TraceRow>* trace) {
  if (N < 1) throw PolymerError("run needs N >= 1");
  ForwardState s = init_state();
  if (trace) trace->reserve(trace->size() + static_cast<std::size_t>(N));
  for (std::int64_t n = 0; n < N; ++n) {
    s = step(s, field, ctx, constraint);
    if (trace)
      trace->push_back({s.n, s.log_zhat, s.overlap, s.max_mu, s.max_endpoint_mass, s.argmax_x,
                        s.leaked_mass});
  }
  return s;
}

std::vector<ForwardState> run_states(const env::Environment& field, const Context& ctx,
                                     std::int64_t N, const PathConstraint& constraint) {
  if (N < 0) throw PolymerError("run_states needs N >= 0");
  std::vector<ForwardState> states;
  states.reserve(static_cast<std::size_t>(N + 1));
  states.push_back(init_state());
  for (std::int64_t n = 0; n < N; ++n) states.push_back(step(states.back(), field, ctx, constraint));
  return states;
}

namespace {

std::int64_t draw_index(std::span<const double> weights, double total, double u) {
  double target = u * total, acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (acc >= target && weights[i] > 0.0) return static_cast<std::int64_t>(i);
  }
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return static_cast<std::int64_t>(i);
  return 0;
}

}  // namespace

std::vector<std::int64_t> sample_path(std::span<const ForwardState> states, const Context& ctx,
                                      CounterRng& rng) {
  if (states.empty()) throw PolymerError("sample_path needs at least one state");
  const std::int64_t N = static_cast<std::int64_t>(states.size()) - 1;
  std::vector<std::int64_t> path(static_cast<std::size_t>(N + 1));
  const auto& last = states.back();
  path[static_cast<std::size_t>(N)] = last.x_lo + draw_index(last.rho, 1.0, rng.uniform());
  const std::int64_t K = ctx.K();
  const auto kernel = ctx.kernel->kernel();
  std::vector<double> w;
  for (std::int64_t n = N; n-- > 0;) {
    // P(S_n = x | S_{n+1} = y) is proportional to rho_n(x) q(y - x).
    const auto& s = states[static_cast<std::size_t>(n)];
    const std::int64_t y = path[static_cast<std::size_t>(n + 1)];
    const std::int64_t lo = std::max(s.x_lo, y - K), hi = std::min(s.x_hi(), y + K);
    if (lo > hi) throw PolymerError("backward sampling reached an empty window");
    w.assign(static_cast<std::size_t>(hi - lo + 1), 0.0);
    double total = 0.0;
    for (std::int64_t x = lo; x <= hi; ++x) {
      const double v = s.rho_at(x) * kernel[static_cast<std::size_t>(y - x + K)];
      w[static_cast<std::size_t>(x - lo)] = v;
      total += v;
    }
    if (!(total > 0.0)) throw PolymerError("backward sampling hit zero weight");
    path[static_cast<std::size_t>(n)] = lo + draw_index(w, total, rng.uniform());
  }
  return path;
}

stats::MeanSe two_replica_overlap_mc(const env::Environment& field, const Context& ctx,
                                     std::int64_t N, std::size_t samples, std::uint64_t seed,
                                     std::uint64_t stream) {
  if (N < 1) throw PolymerError("overlap MC needs N >= 1");
  if (samples < 1) throw PolymerError("overlap MC needs samples >= 1");
  const auto states = run_states(field, ctx, N - 1);
  CounterRng rng(seed, stream);
  std::vector<double> hits(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto p1 = sample_path(states, ctx, rng);
    const auto p2 = sample_path(states, ctx, rng);
    const std::int64_t e1 = p1.back() + walk::sample_increment(ctx.walk, rng);
    const std::int64_t e2 = p2.back() + walk::sample_increment(ctx.walk, rng);
    hits[i] = e1 == e2 ? 1.0 : 0.0;
  }
  return stats::mean_se(hits);
}

}  // namespace polymerlab::polymer
