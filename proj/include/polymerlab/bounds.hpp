#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "polymerlab/environment.hpp"
#include "polymerlab/walk.hpp"

// Coarse-grained fractional-moment upper bound on the free energy for
// alpha in (1, 2]: block length n(beta), tilt delta(n), the per-block
// bracket and the certified value p(beta) <= -1/(theta n).

namespace polymerlab::bounds {

struct BoundsError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct BoundConfig {
  double C1 = 16.0;
  double C2 = 1.0;
  /// Zero selects the defaults gamma = (1 + alpha)/2, theta = (1 + 1/gamma)/2.
  double theta = 0.0;
  double gamma = 0.0;
  /// Integer valued; kept as a double because certified values can be huge.
  double K_cut = 64.0;
  std::size_t mc_samples = 4000;
  /// Monte Carlo is skipped when n(beta) exceeds this many steps.
  std::int64_t mc_max_steps = std::int64_t{1} << 14;
  /// Retry ladder: each rung doubles C1.
  int max_rungs = 8;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Fills gamma/theta defaults and checks gamma theta > 1, gamma in (1, alpha),
/// theta in (0, 1), C1 >= 3, C2 > 0, K_cut >= 3.
BoundConfig resolve(const BoundConfig& config, double alpha);

/// Smallest n >= 1 with beta^2 n / a(n) >= C2^2, i.e.
/// beta n^((alpha-1)/(2 alpha)) l(n)^(-1/2) >= C2 with l(n) = a(n)/n^(1/alpha).
/// Throws BoundsError when n would exceed `horizon`.
std::int64_t choose_n(const std::function<double(double)>& scale, double beta, double C2,
                      std::int64_t horizon);
std::int64_t choose_n(const walk::WalkModel& walk, double beta, double C2,
                      std::int64_t horizon = std::int64_t{1} << 50);

/// (C1 n a_n)^(-1/2).
double delta_of_n(double n, double a_n, double C1);

/// C1 a_n n theta delta^2 / (1 - theta); equals theta / (1 - theta) up to rounding.
double cost_factor(double n, double a_n, double C1, double theta);

/// 2 sum_{y >= K-2} (y^-gamma m)^theta, summed to 10 K and closed by the
/// midpoint integral bound beyond (valid since the summand is convex). For K above 1e6 only the closed bound
/// 2 m^theta [(K-2)^-s + (K-2)^(1-s)/(s-1)], s = gamma theta, is used.
double tail_series(double K_cut, double gamma, double theta, double m);

/// Log of the closed bound above.
double log_tail_bound(double log_K_minus_2, double gamma, double theta, double m);

struct MomentEstimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Monte Carlo E|S_n / a_n|^gamma for the free (renormalized truncated) walk.
MomentEstimate scaled_moment(const walk::WalkModel& walk, std::int64_t n, double a_n, double gamma,
                             std::size_t samples, std::uint64_t seed, unsigned threads);

struct BlockEstimate {
  double term = 0.0;        ///< 2 K_cut max_x E^x[exp(-beta delta T)]^theta
  double term_se = 0.0;     ///< delta-method standard error of `term`
  double max_mean = 0.0;    ///< the maximizing E^x[...]
  double max_se = 0.0;
  std::int64_t argmax_x = 0;
  double exit_probability = 0.0;  ///< MC P(leave the wider corridor) at the argmax start
  std::vector<std::int64_t> grid;
};

/// Free-walk estimate over start points x in I_0 = [-a_n, a_n): 9 interior
/// equispaced points plus both endpoints. T counts i in [1, n] with
/// |S_i| <= (C1 - 1) a_n.
BlockEstimate block_term(const walk::WalkModel& walk, std::int64_t n, double a_n, double beta,
                         double delta, double C1, double K_cut, double theta,
                         std::size_t samples, std::uint64_t seed, unsigned threads);

/// Rigorous bound on E|S_n / a_n|^gamma for the untruncated law with constant
/// L, from the split at a_n, Jensen on the truncated part and the
/// von Bahr-Esseen inequality on the large jumps. Arguments in log space.
double moment_bound(const walk::WalkModel& walk, double log_n, double log_a, double gamma);

/// 2 K [exp(-n beta delta) + 2 m / (C1 - 2)^gamma]^theta, the exit
/// probability bounded by the Levy inequality and Markov. Returns the log.
double log_block_over_bound(double log_K, double n_beta_delta, double m, double C1, double gamma,
                            double theta);

enum class Certifier { none, mc, analytic };
std::string to_string(Certifier c);

struct BoundReport {
  double beta = 0.0;
  double C1 = 0.0;
  double C2 = 0.0;
  double theta = 0.0;
  double gamma = 0.0;
  double K_cut = 0.0;
  int rung = 0;
  double n_of_beta = 0.0;  ///< integer valued; +inf when beyond double range
  double log_n = 0.0;
  double a_n = 0.0;
  double log_a_n = 0.0;
  double delta_n = 0.0;
  double log_delta_n = 0.0;
  double cost_factor = 0.0;
  double moment = 0.0;      ///< E|S_n/a_n|^gamma used (MC or bound)
  double moment_se = 0.0;
  bool mc = false;          ///< whether the Monte Carlo tier ran
  double tail_sum = 0.0;
  double block_term = 0.0;  ///< MC value; NaN when skipped
  double block_se = 0.0;
  double log_block_over_bound = 0.0;
  double bracket = 0.0;     ///< theta/(1-theta) + log(tail_sum + block_term)
  double bracket_over = 0.0;  ///< the same with the analytic over-bounds
  std::optional<double> p_upper;
  double log_neg_p_upper = 0.0;  ///< log(1/(theta n)); p_upper may underflow
  Certifier certified_by = Certifier::none;
};

/// One bracket evaluation at fixed constants. Monte Carlo is used when
/// n <= mc_max_steps; the analytic over-bound is always evaluated (constant L
/// only; otherwise +inf). p_upper is set when either bracket is below -1.
BoundReport bracket_and_bound(const walk::WalkModel& walk, const env::EnvModel& env, double beta,
                              const BoundConfig& config);

/// Retries with C1 doubled up to max_rungs times; returns the first
/// certified report or the last attempt.
BoundReport bound_with_ladder(const walk::WalkModel& walk, const env::EnvModel& env, double beta,
                              const BoundConfig& config);

/// Constants for which the analytic over-bound is below -1 with margin at
/// beta_min, chosen from closed-form sufficient conditions (constant L only).
BoundConfig analytic_constants(const walk::WalkModel& walk, const BoundConfig& config,
                               double beta_min);

/// log n(beta) and log a_n: exact search while n <= 2^50, beyond that the
/// asymptotic a_n = (2 c n / alpha)^(1/alpha) of constant L (relative error
/// below 1e-15 there).
struct BlockLength {
  double n = 0.0;
  double log_n = 0.0;
  double a_n = 0.0;
  double log_a_n = 0.0;
};
BlockLength block_length(const walk::WalkModel& walk, double beta, double C2);

/// Bound curve over a beta grid with constants shared by all points.
std::vector<BoundReport> bound_curve(const walk::WalkModel& walk, const env::EnvModel& env,
                                     const std::vector<double>& betas, const BoundConfig& config,
                                     bool analytic);

/// Log-log slope of |p_upper| against beta, from log_neg_p_upper.
double log_log_slope(const std::vector<BoundReport>& rows);

/// Asymptotic forms A (log x)^rho for the slowly varying functions of the
/// bound: l(n) = a_n / n^(1/alpha), l_alpha(x) = l(x^(2 alpha/(alpha-1)))^(-1/2),
/// its de Bruijn conjugate l#, and phi with 1/n(beta) ~ beta^(2 alpha/(alpha-1)) phi(1/beta).
struct LogPowerForm {
  double coefficient = 1.0;
  double exponent = 0.0;
  double operator()(double x) const;
};

struct Conjugate {
  LogPowerForm l;
  LogPowerForm l_alpha;
  LogPowerForm l_sharp;
  LogPowerForm phi;
  std::string description;
};

Conjugate conjugate_slowly_varying(const walk::SlowlyVaryingSpec& L, double alpha, double C2);

}  // namespace polymerlab::bounds
