#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "polymerlab/environment.hpp"
#include "polymerlab/polymer.hpp"
#include "polymerlab/stats.hpp"
#include "polymerlab/walk.hpp"

// Regime diagnostics built on replicated forward runs: free energy,
// fractional moments, overlap sums, the sufficient criteria for weak and
// strong disorder, and an endpoint invariance probe.

namespace polymerlab::diag {

struct DiagnosticsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Replicated environments: replica r reads EnvField(env, seed, first_replica + r).
/// Reusing one seed across beta values shares the environments.
struct Ensemble {
  env::EnvModel env = env::EnvModel::gaussian();
  std::uint64_t seed = 0;
  std::uint64_t first_replica = 0;
  unsigned threads = 1;
  double leak_budget = 1e-8;
};

/// Per-replica traces for n = 1..N, ordered by replica id.
std::vector<std::vector<polymer::TraceRow>> simulate(const Ensemble& ens,
                                                     const walk::WalkModel& walk, double beta,
                                                     std::int64_t N, std::size_t replicas);

struct FreeEnergy {
  double p_hat = 0.0;
  double se = 0.0;
  std::size_t replicas = 0;
  std::int64_t N = 0;
  /// p_hat + z99 se < 0.
  bool negative_at_99() const noexcept { return p_hat + stats::kZ99 * se < 0.0; }
};

FreeEnergy free_energy(const Ensemble& ens, const walk::WalkModel& walk, double beta,
                       std::int64_t N, std::size_t replicas);
FreeEnergy free_energy_from(const std::vector<std::vector<polymer::TraceRow>>& traces,
                            std::int64_t N);

struct FractionalMomentRow {
  std::int64_t N = 0;
  double mean = 1.0;
  double se = 0.0;
};

struct FractionalMoments {
  double theta = 0.5;
  std::vector<FractionalMomentRow> rows;
  /// Slope of log E[Zhat_N^theta] against N; standard error by delete-one jackknife.
  double rate = 0.0;
  double rate_se = 0.0;
  bool decaying_at_99() const noexcept { return rate + stats::kZ99 * rate_se < 0.0; }
};

FractionalMoments fractional_moment(const Ensemble& ens, const walk::WalkModel& walk, double beta,
                                    double theta, const std::vector<std::int64_t>& N_grid,
                                    std::size_t replicas);
FractionalMoments fractional_moment_from(const std::vector<std::vector<polymer::TraceRow>>& traces,
                                         double theta, const std::vector<std::int64_t>& N_grid);

struct RecursionTrace {
  double epsilon = 0.0;
  /// u_0 = 1, u_N = eps + exp(-c3 / (2 b_N)) (u_{N-1} - eps).
  std::vector<double> bound;
  /// The sharper linear form u_N = (1 - c3/(2 b_N)) u_{N-1} + (c3 / b_N) P(S_N not in Lambda_N)^theta.
  std::vector<double> linear;
};

/// b_sequence[i] and tail_probs[i] refer to N = i + 1. epsilon defaults to
/// max_N 2 P(S_N not in Lambda_N)^theta.
RecursionTrace fractional_moment_recursion_trace(double theta, double c3,
                                                 const std::vector<double>& b_sequence,
                                                 const std::vector<double>& tail_probs,
                                                 std::optional<double> epsilon = std::nullopt);

struct RatioSummary {
  std::int64_t N = 0;
  std::size_t valid = 0;
  std::size_t flagged = 0;  ///< replicas with -log Zhat_N <= 0
  std::size_t inside = 0;   ///< valid ratios inside [lo, hi]
  double median = 0.0;
  double q05 = 0.0;
  double q95 = 0.0;
  double fraction_inside() const noexcept {
    return valid == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(valid);
  }
};

struct OverlapRatios {
  double lo = 0.05, hi = 20.0;
  std::vector<RatioSummary> per_N;
  /// ratios[r][j] for replica r and N_grid[j]; NaN where flagged.
  std::vector<std::vector<double>> ratios;
};

OverlapRatios overlap_log_ratio(const Ensemble& ens, const walk::WalkModel& walk, double beta,
                                const std::vector<std::int64_t>& N_grid, std::size_t replicas,
                                double lo = 0.05, double hi = 20.0);
OverlapRatios overlap_log_ratio_from(const std::vector<std::vector<polymer::TraceRow>>& traces,
                                     const std::vector<std::int64_t>& N_grid, double lo = 0.05,
                                     double hi = 20.0);

/// Mean over replicas of sum_{n<=N} I_n.
double mean_overlap_sum(const std::vector<std::vector<polymer::TraceRow>>& traces, std::int64_t N);

enum class Verdict { holds, fails, undecided, inapplicable };
std::string to_string(Verdict v);

struct Criterion {
  Verdict verdict = Verdict::undecided;
  double margin = 0.0;  ///< positive when the condition holds
  double margin_lo = 0.0;
  double margin_hi = 0.0;
  double pi_p = 0.0;     ///< weak criterion only
  double entropy = 0.0;  ///< strong criterion only
};

/// lambda(2 beta) - 2 lambda(beta) < -log pi_p. The pi_p bracket widens the
/// margin into an undecided band.
Criterion weak_disorder_criterion(const env::EnvModel& env, const walk::WalkModel& walk,
                                  double beta, std::int64_t horizon = 4096);
/// Same, reusing a computed pi_p estimate.
Criterion weak_disorder_criterion(const env::EnvModel& env, const walk::IntersectionEstimate& pi,
                                  double beta);

/// beta lambda'(beta) - lambda(beta) > H(q), with H bracketed by the entropy
/// tail bound.
Criterion strong_disorder_criterion(const env::EnvModel& env, const walk::WalkModel& walk,
                                    double beta);
Criterion strong_disorder_criterion(const env::EnvModel& env, const walk::Entropy& entropy,
                                    double beta);

/// Largest beta >= 0 with lambda(2 beta) - 2 lambda(beta) < -log pi_p.
double weak_disorder_threshold(const env::EnvModel& env, double pi_p);
/// Smallest beta >= 0 with beta lambda' - lambda > H.
double strong_disorder_threshold(const env::EnvModel& env, double entropy);

/// Throws DiagnosticsError if both criteria hold: they are sufficient
/// conditions for disjoint regimes.
void check_exclusive(const Criterion& weak, const Criterion& strong);

struct EndpointDistance {
  std::int64_t N = 0;
  std::int64_t a_N = 0;
  std::vector<double> per_replica;
  double mean = 0.0;
  double se = 0.0;
  double median = 0.0;
  double q90 = 0.0;
};

/// Total variation between polymer and free endpoint laws after binning x
/// into cells floor(x / a_N).
EndpointDistance scaled_endpoint_distance(const Ensemble& ens, const walk::WalkModel& walk,
                                          double beta, std::int64_t N, std::size_t replicas);

double binned_tv(const polymer::ForwardState& a, const polymer::ForwardState& b, std::int64_t bin);

struct PhaseCell {
  double alpha = 1.5;
  double beta = 0.0;
};

struct PhaseScanConfig {
  std::vector<PhaseCell> cells;
  walk::SlowlyVaryingSpec L = walk::SlowlyVaryingSpec::constant();
  double p0 = 0.5;
  double tail_tolerance = 1e-6;
  std::optional<std::int64_t> support;
  Ensemble ensemble;
  std::int64_t N = 128;
  std::size_t replicas = 50;
  double theta = 0.5;
  std::vector<std::int64_t> fm_grid;  ///< empty means {N/8, N/4, N/2, N}
  std::int64_t pi_horizon = 4096;
  /// When false, cell i reads replicas starting at ensemble.first_replica + i * replicas.
  bool share_seeds = true;
};

enum class PhaseVerdict { weak_consistent, very_strong_consistent, undecided, error };
std::string to_string(PhaseVerdict v);

struct PhasePoint {
  double alpha = 0.0, beta = 0.0;
  std::int64_t N = 0;
  double theta = 0.0;
  std::size_t replicas = 0;
  double p_hat = 0.0, p_se = 0.0;
  double fm_rate = 0.0, fm_se = 0.0;
  double overlap_sum = 0.0;
  Verdict weak = Verdict::undecided;
  Verdict strong = Verdict::undecided;
  PhaseVerdict verdict = PhaseVerdict::undecided;
  std::string error;
};

std::vector<PhasePoint> phase_scan(const PhaseScanConfig& config);

}  // namespace polymerlab::diag
