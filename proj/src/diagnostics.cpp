#include "polymerlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <map>

#include "polymerlab/parallel.hpp"

namespace polymerlab::diag {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct ExclusivityError : DiagnosticsError {
  using DiagnosticsError::DiagnosticsError;
};

double log_zhat_at(const std::vector<polymer::TraceRow>& trace, std::int64_t N) {
  if (N == 0) return 0.0;
  if (N < 0 || N > static_cast<std::int64_t>(trace.size()))
    throw DiagnosticsError(fmt::format("N = {} outside the simulated range", N));
  return trace[static_cast<std::size_t>(N - 1)].log_zhat;
}

std::int64_t floor_div(std::int64_t x, std::int64_t d) {
  const std::int64_t q = x / d;
  return (x % d != 0 && ((x < 0) != (d < 0))) ? q - 1 : q;
}

}  // namespace

std::vector<std::vector<polymer::TraceRow>> simulate(const Ensemble& ens,
                                                     const walk::WalkModel& walk, double beta,
                                                     std::int64_t N, std::size_t replicas) {
  if (N < 1) throw DiagnosticsError("simulate needs N >= 1");
  const auto ctx = polymer::make_context(walk, ens.env, beta, ens.leak_budget);
  std::vector<std::vector<polymer::TraceRow>> traces(replicas);
  parallel_for(replicas, ens.threads, [&](std::size_t r) {
    const env::EnvField field(ens.env, ens.seed, ens.first_replica + r);
    polymer::run(field, ctx, N, polymer::PathConstraint::none(), &traces[r]);
  });
  return traces;
}

FreeEnergy free_energy_from(const std::vector<std::vector<polymer::TraceRow>>& traces,
                            std::int64_t N) {
  if (traces.size() < 2) throw DiagnosticsError("free_energy needs at least two replicas");
  std::vector<double> v;
  v.reserve(traces.size());
  for (const auto& t : traces) v.push_back(log_zhat_at(t, N) / static_cast<double>(N));
  const auto ms = stats::mean_se(v);
  return {ms.mean, ms.se, traces.size(), N};
}

FreeEnergy free_energy(const Ensemble& ens, const walk::WalkModel& walk, double beta,
                       std::int64_t N, std::size_t replicas) {
  if (replicas < 2) throw DiagnosticsError("free_energy needs at least two replicas");
  return free_energy_from(simulate(ens, walk, beta, N, replicas), N);
}

FractionalMoments fractional_moment_from(const std::vector<std::vector<polymer::TraceRow>>& traces,
                                         double theta, const std::vector<std::int64_t>& N_grid) {
  if (!(theta > 0.0 && theta < 1.0)) throw DiagnosticsError("theta must lie in (0, 1)");
  if (traces.size() < 2) throw DiagnosticsError("fractional moments need at least two replicas");
  FractionalMoments out;
  out.theta = theta;
  const std::size_t R = traces.size();
  // values[j][r] = Zhat_N^theta for N = N_grid[j].
  std::vector<std::vector<double>> values;
  for (std::int64_t N : N_grid) {
    std::vector<double> v(R);
    for (std::size_t r = 0; r < R; ++r) v[r] = N == 0 ? 1.0 : std::exp(theta * log_zhat_at(traces[r], N));
    const auto ms = stats::mean_se(v);
    out.rows.push_back({N, N == 0 ? 1.0 : ms.mean, N == 0 ? 0.0 : ms.se});
    values.push_back(std::move(v));
  }
  std::vector<double> xs;
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < N_grid.size(); ++j)
    if (N_grid[j] > 0) {
      xs.push_back(static_cast<double>(N_grid[j]));
      idx.push_back(j);
    }
  if (xs.size() < 2) {
    out.rate = kNaN;
    out.rate_se = kNaN;
    return out;
  }
  std::vector<double> sums(idx.size(), 0.0);
  for (std::size_t k = 0; k < idx.size(); ++k)
    for (double v : values[idx[k]]) sums[k] += v;
  auto slope_with = [&](std::optional<std::size_t> drop) {
    std::vector<double> ys(idx.size());
    const double n = static_cast<double>(drop ? R - 1 : R);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double s = drop ? sums[k] - values[idx[k]][*drop] : sums[k];
      ys[k] = std::log(s / n);
    }
    return stats::fit_line(xs, ys).slope;
  };
  out.rate = slope_with(std::nullopt);
  std::vector<double> jack(R);
  double jmean = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    jack[r] = slope_with(r);
    jmean += jack[r];
  }
  jmean /= static_cast<double>(R);
  double var = 0.0;
  for (double j : jack) var += (j - jmean) * (j - jmean);
  out.rate_se = std::sqrt(var * static_cast<double>(R - 1) / static_cast<double>(R));
  return out;
}

FractionalMoments fractional_moment(const Ensemble& ens, const walk::WalkModel& walk, double beta,
                                    double theta, const std::vector<std::int64_t>& N_grid,
                                    std::size_t replicas) {
  if (N_grid.empty()) throw DiagnosticsError("empty N grid");
  const std::int64_t N_max = *std::max_element(N_grid.begin(), N_grid.end());
  if (N_max < 1) {
    FractionalMoments out;
    out.theta = theta;
    for (std::int64_t N : N_grid) out.rows.push_back({N, 1.0, 0.0});
    out.rate = kNaN;
    out.rate_se = kNaN;
    return out;
  }
  return fractional_moment_from(simulate(ens, walk, beta, N_max, replicas), theta, N_grid);
}

RecursionTrace fractional_moment_recursion_trace(double theta, double c3,
                                                 const std::vector<double>& b_sequence,
                                                 const std::vector<double>& tail_probs,
                                                 std::optional<double> epsilon) {
  if (!(theta > 0.0 && theta < 1.0)) throw DiagnosticsError("theta must lie in (0, 1)");
  if (!(c3 > 0.0)) throw DiagnosticsError("c3 must be positive");
  if (b_sequence.size() != tail_probs.size())
    throw DiagnosticsError("b_sequence and tail_probs differ in length");
  double eps = 0.0;
  for (std::size_t i = 0; i < b_sequence.size(); ++i) {
    if (!(b_sequence[i] > 0.0)) throw DiagnosticsError("b_sequence entries must be positive");
    if (!(tail_probs[i] >= 0.0 && tail_probs[i] <= 1.0))
      throw DiagnosticsError("tail_probs entries must lie in [0, 1]");
    eps = std::max(eps, 2.0 * std::pow(tail_probs[i], theta));
  }
  if (epsilon) {
    if (!(*epsilon >= 0.0)) throw DiagnosticsError("epsilon must be >= 0");
    eps = *epsilon;
  }
  RecursionTrace out;
  out.epsilon = eps;
  out.bound.reserve(b_sequence.size() + 1);
  out.linear.reserve(b_sequence.size() + 1);
  out.bound.push_back(1.0);
  out.linear.push_back(1.0);
  for (std::size_t i = 0; i < b_sequence.size(); ++i) {
    const double b = b_sequence[i];
    out.bound.push_back(eps + std::exp(-c3 / (2.0 * b)) * (out.bound.back() - eps));
    out.linear.push_back((1.0 - c3 / (2.0 * b)) * out.linear.back() +
                         c3 / b * std::pow(tail_probs[i], theta));
  }
  return out;
}

OverlapRatios overlap_log_ratio_from(const std::vector<std::vector<polymer::TraceRow>>& traces,
                                     const std::vector<std::int64_t>& N_grid, double lo,
                                     double hi) {
  OverlapRatios out;
  out.lo = lo;
  out.hi = hi;
  out.ratios.assign(traces.size(), std::vector<double>(N_grid.size(), kNaN));
  for (std::size_t j = 0; j < N_grid.size(); ++j) {
    const std::int64_t N = N_grid[j];
    RatioSummary s;
    s.N = N;
    std::vector<double> valid;
    for (std::size_t r = 0; r < traces.size(); ++r) {
      const double minus_log = -log_zhat_at(traces[r], N);
      if (!(minus_log > 0.0)) {
        ++s.flagged;
        continue;
      }
      double sum = 0.0;
      for (std::int64_t n = 0; n < N; ++n) sum += traces[r][static_cast<std::size_t>(n)].overlap;
      const double ratio = sum / minus_log;
      out.ratios[r][j] = ratio;
      valid.push_back(ratio);
      if (ratio >= lo && ratio <= hi) ++s.inside;
    }
    s.valid = valid.size();
    if (!valid.empty()) {
      s.median = stats::quantile(valid, 0.5);
      s.q05 = stats::quantile(valid, 0.05);
      s.q95 = stats::quantile(valid, 0.95);
    } else {
      s.median = s.q05 = s.q95 = kNaN;
    }
    out.per_N.push_back(s);
  }
  return out;
}

OverlapRatios overlap_log_ratio(const Ensemble& ens, const walk::WalkModel& walk, double beta,
                                const std::vector<std::int64_t>& N_grid, std::size_t replicas,
                                double lo, double hi) {
  if (N_grid.empty()) throw DiagnosticsError("empty N grid");
  const std::int64_t N_max = *std::max_element(N_grid.begin(), N_grid.end());
  return overlap_log_ratio_from(simulate(ens, walk, beta, N_max, replicas), N_grid, lo, hi);
}

double mean_overlap_sum(const std::vector<std::vector<polymer::TraceRow>>& traces, std::int64_t N) {
  if (traces.empty()) return kNaN;
  double total = 0.0;
  for (const auto& t : traces) {
    if (N > static_cast<std::int64_t>(t.size())) throw DiagnosticsError("N beyond trace length");
    for (std::int64_t n = 0; n < N; ++n) total += t[static_cast<std::size_t>(n)].overlap;
  }
  return total / static_cast<double>(traces.size());
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::holds: return "holds";
    case Verdict::fails: return "fails";
    case Verdict::undecided: return "undecided";
    case Verdict::inapplicable: return "inapplicable";
  }
  return "unknown";
}

namespace {

double delta_lambda(const env::EnvModel& env, double beta) {
  if (std::fabs(2.0 * beta) > env.interval()) return std::numeric_limits<double>::infinity();
  return env::lambda(env, 2.0 * beta) - 2.0 * env::lambda(env, beta);
}

double strong_lhs(const env::EnvModel& env, double beta) {
  return beta * env::lambda_prime(env, beta) - env::lambda(env, beta);
}

Verdict band_verdict(double lo, double hi) {
  if (lo > 0.0) return Verdict::holds;
  if (hi <= 0.0) return Verdict::fails;
  return Verdict::undecided;
}

/// Smallest beta in [0, cap) where an increasing g crosses `level`; +inf if none.
template <class G>
double crossing(G&& g, double level, double cap) {
  double hi = 1.0;
  while (hi < cap && g(hi) <= level) hi *= 2.0;
  if (hi >= cap) {
    hi = cap;
    if (!(g(hi) > level)) return std::numeric_limits<double>::infinity();
  }
  double lo = 0.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > level ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

Criterion weak_disorder_criterion(const env::EnvModel& env, const walk::IntersectionEstimate& pi,
                                  double beta) {
  Criterion c;
  c.pi_p = pi.pi_p;
  const double d = delta_lambda(env, beta);
  c.margin = -std::log(pi.pi_p) - d;
  c.margin_lo = -std::log(pi.pi_hi) - d;
  c.margin_hi = -std::log(pi.pi_lo) - d;
  c.verdict = band_verdict(c.margin_lo, c.margin_hi);
  return c;
}

Criterion weak_disorder_criterion(const env::EnvModel& env, const walk::WalkModel& walk,
                                  double beta, std::int64_t horizon) {
  if (walk::classify_recurrence(walk) == walk::Recurrence::recurrent) {
    Criterion c;
    c.verdict = Verdict::inapplicable;
    c.margin = c.margin_lo = c.margin_hi = kNaN;
    c.pi_p = 1.0;
    return c;
  }
  return weak_disorder_criterion(env, walk::intersection_probability(walk, horizon), beta);
}

Criterion strong_disorder_criterion(const env::EnvModel& env, const walk::Entropy& entropy,
                                    double beta) {
  Criterion c;
  c.entropy = entropy.value;
  const double lhs = strong_lhs(env, beta);
  c.margin = lhs - entropy.value;
  c.margin_lo = lhs - entropy.value - entropy.tail_bound;
  c.margin_hi = c.margin;
  c.verdict = band_verdict(c.margin_lo, c.margin_hi);
  return c;
}

Criterion strong_disorder_criterion(const env::EnvModel& env, const walk::WalkModel& walk,
                                    double beta) {
  return strong_disorder_criterion(env, walk::walk_entropy(walk), beta);
}

double weak_disorder_threshold(const env::EnvModel& env, double pi_p) {
  if (!(pi_p > 0.0 && pi_p < 1.0)) throw DiagnosticsError("pi_p must lie in (0, 1)");
  const double level = -std::log(pi_p);
  if (env.family() == env::Family::gaussian && std::isinf(env.interval())) return std::sqrt(level);
  const double cap = std::min(1e4, env.interval() / 2.0);
  return crossing([&](double b) { return delta_lambda(env, b); }, level, cap);
}

double strong_disorder_threshold(const env::EnvModel& env, double entropy) {
  if (env.family() == env::Family::gaussian && std::isinf(env.interval()))
    return std::sqrt(2.0 * entropy);
  const double cap = std::min(1e4, env.interval() * (1.0 - 1e-9));
  return crossing([&](double b) { return strong_lhs(env, b); }, entropy, cap);
}

void check_exclusive(const Criterion& weak, const Criterion& strong) {
  if (weak.verdict == Verdict::holds && strong.verdict == Verdict::holds)
    throw ExclusivityError(fmt::format(
        "weak and strong disorder criteria both hold (weak margin {}, strong margin {}); "
        "they cover disjoint regimes, so an input or numerical error is present",
        weak.margin, strong.margin));
}

double binned_tv(const polymer::ForwardState& a, const polymer::ForwardState& b, std::int64_t bin) {
  if (bin < 1) throw DiagnosticsError("bin width must be >= 1");
  std::map<std::int64_t, std::pair<double, double>> cells;
  for (std::size_t i = 0; i < a.rho.size(); ++i)
    cells[floor_div(a.x_lo + static_cast<std::int64_t>(i), bin)].first += a.rho[i];
  for (std::size_t i = 0; i < b.rho.size(); ++i)
    cells[floor_div(b.x_lo + static_cast<std::int64_t>(i), bin)].second += b.rho[i];
  double tv = 0.0;
  for (const auto& [k, c] : cells) tv += std::fabs(c.first - c.second);
  return std::min(1.0, 0.5 * tv);
}

EndpointDistance scaled_endpoint_distance(const Ensemble& ens, const walk::WalkModel& walk,
                                          double beta, std::int64_t N, std::size_t replicas) {
  if (N < 1) throw DiagnosticsError("scaled_endpoint_distance needs N >= 1");
  if (replicas < 1) throw DiagnosticsError("scaled_endpoint_distance needs replicas >= 1");
  EndpointDistance out;
  out.N = N;
  out.a_N = walk::scaling_sequence(walk, N)[N];
  const auto free_ctx = polymer::make_context(walk, ens.env, 0.0, ens.leak_budget);
  const env::EnvField any(ens.env, ens.seed, ens.first_replica);
  const auto free_state = polymer::run(any, free_ctx, N);
  const auto ctx = polymer::make_context(walk, ens.env, beta, ens.leak_budget);
  out.per_replica.assign(replicas, 0.0);
  parallel_for(replicas, ens.threads, [&](std::size_t r) {
    const env::EnvField field(ens.env, ens.seed, ens.first_replica + r);
    const auto s = polymer::run(field, ctx, N);
    out.per_replica[r] = binned_tv(s, free_state, out.a_N);
  });
  const auto ms = stats::mean_se(out.per_replica);
  out.mean = ms.mean;
  out.se = ms.se;
  out.median = stats::quantile(out.per_replica, 0.5);
  out.q90 = stats::quantile(out.per_replica, 0.9);
  return out;
}

std::string to_string(PhaseVerdict v) {
  switch (v) {
    case PhaseVerdict::weak_consistent: return "weak-consistent";
    case PhaseVerdict::very_strong_consistent: return "very-strong-consistent";
    case PhaseVerdict::undecided: return "undecided";
    case PhaseVerdict::error: return "error";
  }
  return "unknown";
}

std::vector<PhasePoint> phase_scan(const PhaseScanConfig& config) {
  std::vector<PhasePoint> out;
  out.reserve(config.cells.size());
  std::vector<std::int64_t> grid = config.fm_grid;
  if (grid.empty())
    for (std::int64_t d : {8, 4, 2, 1})
      if (config.N / d >= 1 && (grid.empty() || grid.back() != config.N / d)) grid.push_back(config.N / d);

  struct WalkInfo {
    walk::WalkModel model;
    walk::Entropy entropy;
    std::optional<walk::IntersectionEstimate> pi;
  };
  std::map<double, std::shared_ptr<WalkInfo>> walks;
  auto walk_for = [&](double alpha) {
    auto& slot = walks[alpha];
    if (!slot) {
      auto model = config.support
                       ? walk::build_walk_with_support(alpha, config.L, config.p0, *config.support)
                       : walk::build_walk(alpha, config.L, config.p0, config.tail_tolerance);
      std::optional<walk::IntersectionEstimate> pi;
      if (walk::classify_recurrence(model) == walk::Recurrence::transient)
        pi = walk::intersection_probability(model, config.pi_horizon);
      slot = std::make_shared<WalkInfo>(WalkInfo{model, walk::walk_entropy(model), pi});
    }
    return slot;
  };

  for (std::size_t i = 0; i < config.cells.size(); ++i) {
    const auto& cell = config.cells[i];
    Ensemble ens = config.ensemble;
    if (!config.share_seeds) ens.first_replica += i * config.replicas;
    PhasePoint p;
    p.alpha = cell.alpha;
    p.beta = cell.beta;
    p.N = config.N;
    p.theta = config.theta;
    p.replicas = config.replicas;
    try {
      const auto info = walk_for(cell.alpha);
      const auto traces = simulate(ens, info->model, cell.beta, config.N, config.replicas);
      const auto fe = free_energy_from(traces, config.N);
      const auto fm = fractional_moment_from(traces, config.theta, grid);
      p.p_hat = fe.p_hat;
      p.p_se = fe.se;
      p.fm_rate = fm.rate;
      p.fm_se = fm.rate_se;
      p.overlap_sum = mean_overlap_sum(traces, config.N);
      Criterion weak;
      if (info->pi) {
        weak = weak_disorder_criterion(config.ensemble.env, *info->pi, cell.beta);
      } else {
        weak.verdict = Verdict::inapplicable;
      }
      const auto strong = strong_disorder_criterion(config.ensemble.env, info->entropy, cell.beta);
      check_exclusive(weak, strong);
      p.weak = weak.verdict;
      p.strong = strong.verdict;
      const bool mc_negative = fe.negative_at_99() || fm.decaying_at_99();
      if (strong.verdict == Verdict::holds)
        p.verdict = PhaseVerdict::very_strong_consistent;
      else if (weak.verdict == Verdict::holds)
        p.verdict = mc_negative ? PhaseVerdict::undecided : PhaseVerdict::weak_consistent;
      else
        p.verdict = mc_negative ? PhaseVerdict::very_strong_consistent : PhaseVerdict::undecided;
    } catch (const ExclusivityError&) {
      throw;
    } catch (const std::exception& e) {
      p.verdict = PhaseVerdict::error;
      p.error = e.what();
      p.p_hat = p.p_se = p.fm_rate = p.fm_se = p.overlap_sum = kNaN;
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace polymerlab::diag
