#include "polymerlab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "polymerlab/parallel.hpp"
#include "polymerlab/rng.hpp"
#include "polymerlab/stats.hpp"

namespace polymerlab::bounds {

namespace {

constexpr std::uint64_t kMomentTag = 1;
constexpr std::uint64_t kBlockTag = 2;
constexpr double kInf = std::numeric_limits<double>::infinity();
// Above this block length the constant-L asymptotic scale replaces the search.
const double kLogExactLimit = std::log(std::ldexp(1.0, 48));

std::uint64_t stream_id(std::uint64_t tag, std::uint64_t index) { return (tag << 56) ^ index; }

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

bool constant_L(const walk::WalkModel& walk) { return walk.L().family == walk::LFamily::constant; }

void check_alpha(double alpha) {
  if (!(alpha > 1.0 && alpha <= 2.0))
    throw BoundsError(fmt::format("the bound needs alpha in (1, 2], got {}", alpha));
}

}  // namespace

BoundConfig resolve(const BoundConfig& config, double alpha) {
  check_alpha(alpha);
  BoundConfig c = config;
  if (c.gamma == 0.0) c.gamma = (1.0 + alpha) / 2.0;
  if (c.theta == 0.0) c.theta = (1.0 + 1.0 / c.gamma) / 2.0;
  if (!(c.gamma > 1.0 && c.gamma < alpha))
    throw BoundsError(fmt::format("gamma must lie in (1, alpha = {}), got {}", alpha, c.gamma));
  if (!(c.theta > 0.0 && c.theta < 1.0))
    throw BoundsError(fmt::format("theta must lie in (0, 1), got {}", c.theta));
  if (!(c.gamma * c.theta > 1.0))
    throw BoundsError(fmt::format("gamma * theta must exceed 1, got {}", c.gamma * c.theta));
  if (!(c.C1 >= 3.0)) throw BoundsError(fmt::format("C1 must be >= 3, got {}", c.C1));
  if (!(c.C2 > 0.0)) throw BoundsError(fmt::format("C2 must be positive, got {}", c.C2));
  if (!(c.K_cut >= 3.0) || c.K_cut != std::floor(c.K_cut))
    throw BoundsError(fmt::format("K_cut must be an integer >= 3, got {}", c.K_cut));
  if (c.mc_samples < 2) throw BoundsError("mc_samples must be at least 2");
  return c;
}

std::int64_t choose_n(const std::function<double(double)>& scale, double beta, double C2,
                      std::int64_t horizon) {
  if (!(beta > 0.0)) throw BoundsError("choose_n needs beta > 0");
  if (!(C2 > 0.0)) throw BoundsError("choose_n needs C2 > 0");
  const double target = (C2 / beta) * (C2 / beta);
  auto ok = [&](std::int64_t n) {
    const double nd = static_cast<double>(n);
    return nd / scale(nd) >= target;
  };
  if (ok(1)) return 1;
  std::int64_t lo = 1, hi = 2;
  while (!ok(hi)) {
    if (hi >= horizon)
      throw BoundsError(fmt::format("n(beta) exceeds the horizon {} at beta = {}", horizon, beta));
    lo = hi;
    hi = std::min(hi * 2, horizon);
  }
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (ok(mid) ? hi : lo) = mid;
  }
  // n / a_n is not monotone across jumps of a_n; step back over any earlier passes.
  for (int i = 0; i < 64 && hi > 1 && ok(hi - 1); ++i) --hi;
  return hi;
}

std::int64_t choose_n(const walk::WalkModel& walk, double beta, double C2, std::int64_t horizon) {
  check_alpha(walk.alpha());
  return choose_n([&](double n) { return walk::scaling_value(walk, n); }, beta, C2, horizon);
}

BlockLength block_length(const walk::WalkModel& walk, double beta, double C2) {
  check_alpha(walk.alpha());
  const double alpha = walk.alpha();
  const double log_scale = std::log(2.0 * walk.L().c / alpha);
  BlockLength out;
  if (constant_L(walk)) {
    // beta^2 n / a_n = C2^2 with a_n = (2 c n / alpha)^(1/alpha).
    const double ln = alpha / (alpha - 1.0) * (2.0 * std::log(C2 / beta) + log_scale / alpha);
    if (ln > kLogExactLimit) {
      out.log_n = ln;
      out.n = std::ceil(std::exp(ln));
      out.log_a_n = (ln + log_scale) / alpha;
      out.a_n = std::exp(out.log_a_n);
      return out;
    }
  }
  const std::int64_t n = choose_n(walk, beta, C2, std::int64_t{1} << 50);
  out.n = static_cast<double>(n);
  out.log_n = std::log(out.n);
  out.a_n = walk::scaling_value(walk, out.n);
  out.log_a_n = std::log(out.a_n);
  return out;
}

double delta_of_n(double n, double a_n, double C1) { return 1.0 / std::sqrt(C1 * n * a_n); }

double cost_factor(double n, double a_n, double C1, double theta) {
  const double d = delta_of_n(n, a_n, C1);
  return C1 * a_n * n * theta * d * d / (1.0 - theta);
}

double log_tail_bound(double log_K_minus_2, double gamma, double theta, double m) {
  const double s = gamma * theta;
  const double first = -s * log_K_minus_2;
  const double rest = (1.0 - s) * log_K_minus_2 - std::log(s - 1.0);
  return std::log(2.0) + theta * std::log(m) + log_add(first, rest);
}

double tail_series(double K_cut, double gamma, double theta, double m) {
  if (!(gamma * theta > 1.0)) throw BoundsError("tail_series needs gamma * theta > 1");
  if (!(K_cut >= 3.0)) throw BoundsError("tail_series needs K_cut >= 3");
  if (m == 0.0) return 0.0;
  const double s = gamma * theta;
  if (K_cut > 1e6) return std::exp(log_tail_bound(std::log(K_cut - 2.0), gamma, theta, m));
  const auto y0 = static_cast<std::int64_t>(K_cut) - 2;
  const auto y1 = 10 * static_cast<std::int64_t>(K_cut);
  // Convexity bounds each term beyond y1 by the integral over [y - 1/2, y + 1/2].
  double sum = std::pow(static_cast<double>(y1) + 0.5, 1.0 - s) / (s - 1.0);
  for (std::int64_t y = y1; y >= y0; --y) sum += std::pow(static_cast<double>(y), -s);
  return 2.0 * std::pow(m, theta) * sum;
}

MomentEstimate scaled_moment(const walk::WalkModel& walk, std::int64_t n, double a_n, double gamma,
                             std::size_t samples, std::uint64_t seed, unsigned threads) {
  if (n < 1 || samples < 2) throw BoundsError("scaled_moment needs n >= 1 and samples >= 2");
  std::vector<double> values(samples);
  parallel_for(samples, threads, [&](std::size_t j) {
    CounterRng rng(seed, stream_id(kMomentTag, j));
    std::int64_t s = 0;
    for (std::int64_t i = 0; i < n; ++i) s += walk.sample(rng);
    values[j] = std::pow(std::fabs(static_cast<double>(s)) / a_n, gamma);
  });
  const auto ms = stats::mean_se(values);
  return {ms.mean, ms.se};
}

BlockEstimate block_term(const walk::WalkModel& walk, std::int64_t n, double a_n, double beta,
                         double delta, double C1, double K_cut, double theta,
                         std::size_t samples, std::uint64_t seed, unsigned threads) {
  if (n < 1 || samples < 2) throw BoundsError("block_term needs n >= 1 and samples >= 2");
  const auto a = static_cast<std::int64_t>(std::ceil(a_n));
  BlockEstimate out;
  for (int j = 0; j <= 10; ++j) {
    const auto x = -a + static_cast<std::int64_t>(std::llround(j * (2.0 * a - 1.0) / 10.0));
    if (out.grid.empty() || out.grid.back() != x) out.grid.push_back(x);
  }
  const double corridor = (C1 - 1.0) * a_n;
  const double excursion = (C1 - 2.0) * a_n;
  const std::size_t G = out.grid.size();
  std::vector<double> values(G * samples);
  std::vector<char> exits(G * samples);
  parallel_for(G * samples, threads, [&](std::size_t idx) {
    const std::int64_t x0 = out.grid[idx / samples];
    CounterRng rng(seed, stream_id(kBlockTag, idx));
    std::int64_t s = x0;
    std::int64_t visits = 0;
    bool exited = false;
    for (std::int64_t i = 1; i <= n; ++i) {
      s += walk.sample(rng);
      if (std::fabs(static_cast<double>(s)) <= corridor) ++visits;
      if (std::fabs(static_cast<double>(s - x0)) > excursion) exited = true;
    }
    values[idx] = std::exp(-beta * delta * static_cast<double>(visits));
    exits[idx] = exited ? 1 : 0;
  });
  for (std::size_t g = 0; g < G; ++g) {
    const std::span<const double> row(values.data() + g * samples, samples);
    const auto ms = stats::mean_se(row);
    if (g == 0 || ms.mean > out.max_mean) {
      out.max_mean = ms.mean;
      out.max_se = ms.se;
      out.argmax_x = out.grid[g];
      std::size_t e = 0;
      for (std::size_t j = 0; j < samples; ++j) e += static_cast<std::size_t>(exits[g * samples + j]);
      out.exit_probability = static_cast<double>(e) / static_cast<double>(samples);
    }
  }
  out.term = 2.0 * K_cut * std::pow(out.max_mean, theta);
  out.term_se = out.max_mean > 0.0
                    ? 2.0 * K_cut * theta * std::pow(out.max_mean, theta - 1.0) * out.max_se
                    : 0.0;
  return out;
}

double moment_bound(const walk::WalkModel& walk, double log_n, double log_a, double gamma) {
  if (!constant_L(walk)) throw BoundsError("moment_bound supports constant L only");
  const double alpha = walk.alpha();
  if (!(gamma > 1.0 && gamma < alpha)) throw BoundsError("moment_bound needs gamma in (1, alpha)");
  const double log2c = std::log(2.0 * walk.L().c);
  // E[X^2; |X| <= a] <= 2c (1 + int_1^a x^(1-alpha) dx).
  double log_second;
  if (alpha < 2.0) {
    const double s = 2.0 - alpha;
    const double t = s * log_a;
    log_second = log2c + t - std::log(s) + std::log1p((s - 1.0) * std::exp(-t));
  } else {
    log_second = log2c + std::log1p(log_a);
  }
  const double log_var = log_n + log_second - 2.0 * log_a;
  // E[|X|^gamma; |X| > a] <= 2c (a^(gamma-alpha-1) + a^(gamma-alpha)/(alpha-gamma)).
  const double log_big = log2c + (gamma - alpha) * log_a +
                         log_add(-log_a, -std::log(alpha - gamma));
  const double log_jumps = std::log(2.0) + log_n + log_big - gamma * log_a;
  return std::exp((gamma - 1.0) * std::log(2.0) + log_add(0.5 * gamma * log_var, log_jumps));
}

double log_block_over_bound(double log_K, double n_beta_delta, double m, double C1, double gamma,
                            double theta) {
  const double log_exit = std::log(2.0 * m) - gamma * std::log(C1 - 2.0);
  const double inner = log_add(-n_beta_delta, std::min(0.0, log_exit));
  return std::log(2.0) + log_K + theta * inner;
}

std::string to_string(Certifier c) {
  switch (c) {
    case Certifier::mc: return "mc";
    case Certifier::analytic: return "analytic";
    case Certifier::none: break;
  }
  return "none";
}

BoundReport bracket_and_bound(const walk::WalkModel& walk, const env::EnvModel& env, double beta,
                              const BoundConfig& config) {
  if (env.family() != env::Family::gaussian)
    throw BoundsError("the bound is implemented for the gaussian environment only");
  if (!(beta > 0.0)) throw BoundsError("bracket_and_bound needs beta > 0");
  const BoundConfig cfg = resolve(config, walk.alpha());
  const double theta = cfg.theta, gamma = cfg.gamma;

  BoundReport r;
  r.beta = beta;
  r.C1 = cfg.C1;
  r.C2 = cfg.C2;
  r.theta = theta;
  r.gamma = gamma;
  r.K_cut = cfg.K_cut;
  const auto bl = block_length(walk, beta, cfg.C2);
  r.n_of_beta = bl.n;
  r.log_n = bl.log_n;
  r.a_n = bl.a_n;
  r.log_a_n = bl.log_a_n;
  r.log_delta_n = -0.5 * (std::log(cfg.C1) + bl.log_n + bl.log_a_n);
  r.delta_n = std::exp(r.log_delta_n);
  r.cost_factor = std::isfinite(bl.n) && bl.n * bl.a_n < 1e300
                      ? cost_factor(bl.n, bl.a_n, cfg.C1, theta)
                      : theta / (1.0 - theta) *
                            std::exp(std::log(cfg.C1) + bl.log_n + bl.log_a_n + 2.0 * r.log_delta_n);
  const double cost = theta / (1.0 - theta);
  const double n_beta_delta = std::exp(std::log(beta) + 0.5 * (bl.log_n - std::log(cfg.C1) - bl.log_a_n));

  double log_tail_over = kInf, log_block_over = kInf;
  double m_bound = kInf;
  r.bracket_over = kInf;
  if (constant_L(walk)) {
    m_bound = moment_bound(walk, bl.log_n, bl.log_a_n, gamma);
    log_tail_over = log_tail_bound(std::log(cfg.K_cut - 2.0), gamma, theta, m_bound);
    log_block_over = log_block_over_bound(std::log(cfg.K_cut), n_beta_delta, m_bound, cfg.C1, gamma,
                                          theta);
    r.bracket_over = cost + log_add(log_tail_over, log_block_over);
  }
  r.log_block_over_bound = log_block_over;

  if (bl.n <= static_cast<double>(cfg.mc_max_steps)) {
    const auto n = static_cast<std::int64_t>(bl.n);
    const auto m = scaled_moment(walk, n, bl.a_n, gamma, cfg.mc_samples, cfg.seed, cfg.threads);
    const auto blk = block_term(walk, n, bl.a_n, beta, r.delta_n, cfg.C1, cfg.K_cut, theta,
                                cfg.mc_samples, cfg.seed, cfg.threads);
    r.mc = true;
    r.moment = m.mean;
    r.moment_se = m.se;
    r.tail_sum = tail_series(cfg.K_cut, gamma, theta, m.mean);
    r.block_term = blk.term;
    r.block_se = blk.term_se;
    r.bracket = cost + std::log(r.tail_sum + r.block_term);
  } else {
    r.moment = m_bound;
    r.tail_sum = std::exp(log_tail_over);
    r.block_term = std::exp(log_block_over);
    r.block_se = 0.0;
    r.bracket = r.bracket_over;
  }

  r.log_neg_p_upper = -std::log(theta) - bl.log_n;
  if (r.bracket_over < -1.0)
    r.certified_by = Certifier::analytic;
  else if (r.mc && r.bracket < -1.0)
    r.certified_by = Certifier::mc;
  if (r.certified_by != Certifier::none)
    r.p_upper = -std::max(std::exp(r.log_neg_p_upper), std::numeric_limits<double>::denorm_min());
  return r;
}

BoundReport bound_with_ladder(const walk::WalkModel& walk, const env::EnvModel& env, double beta,
                              const BoundConfig& config) {
  BoundConfig cfg = config;
  BoundReport r;
  for (int rung = 0; rung <= std::max(0, config.max_rungs); ++rung) {
    cfg.C1 = std::ldexp(config.C1, rung);
    r = bracket_and_bound(walk, env, beta, cfg);
    r.rung = rung;
    if (r.certified_by != Certifier::none) break;
  }
  return r;
}

BoundConfig analytic_constants(const walk::WalkModel& walk, const BoundConfig& config,
                               double beta_min) {
  if (!constant_L(walk)) throw BoundsError("analytic constants need constant L");
  BoundConfig cfg = resolve(config, walk.alpha());
  const double theta = cfg.theta, gamma = cfg.gamma;
  // Each of the two pieces gets half of exp(-cost - 1), with a further factor 2 of margin.
  const double log_target = -theta / (1.0 - theta) - 1.0 - std::log(4.0);
  double m = 2.0 * moment_bound(walk, kLogExactLimit, kLogExactLimit / walk.alpha(), gamma);
  for (int iter = 0; iter < 64; ++iter) {
    // Tail: smallest log(K - 2) meeting the target, by bisection.
    double lo = 0.0, hi = 1.0;
    while (log_tail_bound(hi, gamma, theta, m) > log_target) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (log_tail_bound(mid, gamma, theta, m) > log_target ? lo : hi) = mid;
    }
    const double K = std::ceil(2.0 + std::exp(hi));
    const double log_u = (log_target - std::log(2.0) - std::log(K)) / theta;
    // 2 m / (C1 - 2)^gamma <= u / 2 and exp(-C2 / sqrt(C1)) <= u / 2.
    const double C1 = std::max(cfg.C1, 2.0 + std::exp((std::log(4.0 * m) - log_u) / gamma));
    const double C2 = std::max(cfg.C2, std::sqrt(C1) * (std::log(2.0) - log_u));
    cfg.K_cut = K;
    cfg.C1 = C1;
    cfg.C2 = C2;
    const auto bl = block_length(walk, beta_min, C2);
    const double m_here = moment_bound(walk, bl.log_n, bl.log_a_n, gamma);
    if (m_here <= m) return cfg;
    m = 2.0 * m_here;
  }
  throw BoundsError("analytic constants did not stabilize");
}

std::vector<BoundReport> bound_curve(const walk::WalkModel& walk, const env::EnvModel& env,
                                     const std::vector<double>& betas, const BoundConfig& config,
                                     bool analytic) {
  if (betas.empty()) return {};
  std::vector<BoundReport> rows;
  if (analytic) {
    const double beta_min = *std::min_element(betas.begin(), betas.end());
    const BoundConfig cfg = analytic_constants(walk, config, beta_min);
    for (double b : betas) rows.push_back(bracket_and_bound(walk, env, b, cfg));
    return rows;
  }
  BoundConfig cfg = config;
  for (int rung = 0; rung <= std::max(0, config.max_rungs); ++rung) {
    cfg.C1 = std::ldexp(config.C1, rung);
    rows.clear();
    bool all = true;
    for (double b : betas) {
      rows.push_back(bracket_and_bound(walk, env, b, cfg));
      rows.back().rung = rung;
      all = all && rows.back().certified_by != Certifier::none;
    }
    if (all) break;
  }
  return rows;
}

double log_log_slope(const std::vector<BoundReport>& rows) {
  std::vector<double> x, y;
  for (const auto& r : rows) {
    if (!r.p_upper) continue;
    x.push_back(std::log(r.beta));
    y.push_back(-r.log_neg_p_upper);
  }
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  return -stats::fit_line(x, y).slope;
}

double LogPowerForm::operator()(double x) const {
  if (exponent == 0.0) return coefficient;
  if (!(x > 1.0)) throw BoundsError("log-power forms are evaluated for x > 1");
  return coefficient * std::pow(std::log(x), exponent);
}

Conjugate conjugate_slowly_varying(const walk::SlowlyVaryingSpec& L, double alpha, double C2) {
  check_alpha(alpha);
  if (!(C2 > 0.0)) throw BoundsError("conjugate needs C2 > 0");
  double g = 0.0;
  switch (L.family) {
    case walk::LFamily::constant: break;
    case walk::LFamily::log_power: g = L.gamma; break;
    default: throw BoundsError("unsupported slowly varying family");
  }
  if (!(L.c > 0.0)) throw BoundsError("conjugate needs L.c > 0");
  const double p = 2.0 * alpha / (alpha - 1.0);
  // P(|X| > a) ~ (2c/alpha) (log a)^g a^-alpha, so a_n ~ kappa (log n)^(g/alpha) n^(1/alpha).
  const double kappa = std::pow(2.0 * L.c / alpha, 1.0 / alpha) * std::pow(alpha, -g / alpha);
  Conjugate out;
  out.l = {kappa, g / alpha};
  out.l_alpha = {std::pow(kappa, -0.5) * std::pow(p, -g / (2.0 * alpha)), -g / (2.0 * alpha)};
  out.l_sharp = {1.0 / out.l_alpha.coefficient, -out.l_alpha.exponent};
  out.phi = {std::pow(C2, -p) * std::pow(out.l_alpha.coefficient, p), out.l_alpha.exponent * p};
  out.description = g == 0.0
                        ? fmt::format("phi = {:.6g} (constant)", out.phi.coefficient)
                        : fmt::format("phi(x) = {:.6g} (log x)^{:.6g}", out.phi.coefficient,
                                      out.phi.exponent);
  return out;
}

}  // namespace polymerlab::bounds
