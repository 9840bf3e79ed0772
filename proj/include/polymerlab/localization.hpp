#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "polymerlab/diagnostics.hpp"
#include "polymerlab/environment.hpp"
#include "polymerlab/polymer.hpp"
#include "polymerlab/stats.hpp"
#include "polymerlab/walk.hpp"

// Endpoint atoms and the superdiffusivity machinery: restricted partition
// ratios, half-time block partition functions, exchangeability of shifted
// blocks, the shift density-ratio bound and the tilted environment.

namespace polymerlab::loc {

struct LocalizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AtomRow {
  std::int64_t n = 0;
  /// max_x P_{n-1}(S_n = x): one free increment applied to the law at n - 1.
  double max_mass = 0.0;
  bool indicator = false;
  /// (1/n) sum_{m <= n} indicator_m.
  double running_fraction = 0.0;
};

struct AtomTrace {
  double epsilon = 0.0;
  std::vector<AtomRow> rows;  ///< rows[n - 1]

  /// Fraction of indicators over n in [n_from, n_to].
  double fraction(std::int64_t n_from, std::int64_t n_to) const;
};

AtomTrace atom_trace(const env::Environment& field, const polymer::Context& ctx, std::int64_t N,
                     double epsilon);

/// P_N(max_{n<=N} |S_n| < r) as a ratio of the window-restricted and the
/// unrestricted partition functions on the same field.
double restricted_ratio(const env::Environment& field, const polymer::Context& ctx,
                        std::int64_t N, double r);

/// beta^2 N / (4 (alpha + 1 + eps)^2 (log N)^2).
double theorem_radius(double alpha, double beta, std::int64_t N, double eps);

struct Fluctuation {
  std::int64_t N = 0;
  double radius = 0.0;
  bool theorem_mode = true;
  bool radius_below_one = false;
  /// P_N(max |S_n| >= radius) per replica.
  std::vector<double> per_replica;
  stats::MeanSe mean;
};

/// Replicated 1 - restricted_ratio at the theorem radius, or at `radius`
/// when given. Needs alpha > 1 and a gaussian environment.
Fluctuation fluctuation_probability(const diag::Ensemble& ens, const walk::WalkModel& walk,
                                    double beta, std::int64_t N, double eps,
                                    std::size_t replicas,
                                    std::optional<double> radius = std::nullopt);

/// Blocks I^k = [(2k - 1) L, (2k + 1) L) for |k| <= M.
struct BlockLayout {
  std::int64_t N = 0;
  std::int64_t L = 0;
  std::int64_t M = 0;

  /// L = floor(beta^2 N / (4 (alpha + 1 + eps0)^2 (log N)^2)) with eps0 = eps / 2.
  static BlockLayout from_theorem(double alpha, double beta, std::int64_t N, double eps,
                                  std::int64_t M);
  static BlockLayout with_half_width(std::int64_t N, std::int64_t L, std::int64_t M);

  std::int64_t lo(std::int64_t k) const noexcept { return (2 * k - 1) * L; }
  /// Exclusive upper end.
  std::int64_t hi(std::int64_t k) const noexcept { return (2 * k + 1) * L; }
  void validate() const;
};

struct BlockValues {
  BlockLayout layout;
  /// log of Zhat_N(k) for k = -M..M (index k + M); -inf when the block is unreachable.
  std::vector<double> log_zhat;
  double log_zhat_free = 0.0;
};

/// Partition functions with the second half of the path confined to each
/// block, from one shared first-half state.
BlockValues block_partition_functions(const env::Environment& field, const polymer::Context& ctx,
                                      const BlockLayout& layout);

/// The same values, each computed from scratch. Used as a recomputation check.
BlockValues block_partition_functions_direct(const env::Environment& field,
                                             const polymer::Context& ctx,
                                             const BlockLayout& layout);

struct Exchangeability {
  BlockLayout layout;
  std::size_t replicas = 0;
  std::size_t hits = 0;  ///< replicas where k = 0 attains the max
  stats::Proportion frequency;
  double expected = 0.0;  ///< 1 / (2M + 1)
};

/// For each replica, shifted-environment block values Zbar(k) (the field read
/// at x + 2kL for n > N/2, second half confined to I^0); counts how often k = 0
/// is the maximum. An exact tie throws.
Exchangeability exchangeability_frequency(const diag::Ensemble& ens, const walk::WalkModel& walk,
                                          double beta, const BlockLayout& layout,
                                          std::size_t replicas);

struct ShiftBound {
  std::int64_t h = 0;
  double exact_min = 1.0;  ///< min over the scan domain of p_x / p_{x-h}
  std::int64_t argmin_x = 0;
  std::int64_t scan_lo = 0;  ///< scan domain [scan_lo, scan_hi]: x and x - h in [-K, K]
  std::int64_t scan_hi = 0;
  double excluded_mass = 0.0;  ///< P(X in [-K, K] outside the scan domain)
  double floor = 1.0;          ///< analytic lower bound on the minimum
  double floor_exponent = 0.0; ///< floor >= C (1 + |h|)^-floor_exponent
  double potter_constant = 0.0;  ///< floor * (|k| N)^(alpha + 1 + delta)
};

/// Exact minimum of the density-ratio terms for a shift h, with the explicit
/// Potter-type floor for the supported L families.
ShiftBound shift_rn_bound(const walk::WalkModel& walk, std::int64_t h);
ShiftBound shift_rn_bound(const walk::WalkModel& walk, const BlockLayout& layout, std::int64_t k,
                          double delta);

/// J = (-R, R) intersected with the integers.
struct TiltRegion {
  std::int64_t N = 0;
  std::int64_t half = 0;  ///< J = [-half, half]
  double shift = 0.0;     ///< (N/2 |J|)^(-1/2)
  env::Region region;     ///< [N/2 + 1, N] x J as a half-open rectangle
  std::int64_t size() const noexcept { return 2 * half + 1; }
};

TiltRegion tilt_region(std::int64_t N, double R);

/// omega + shift on [N/2 + 1, N] x J, omega elsewhere.
std::shared_ptr<const env::TiltedField> tilted_environment(
    std::shared_ptr<const env::Environment> base, const env::EnvModel& env, const TiltRegion& t);

struct TiltIdentity {
  double tilted = 0.0;  ///< mean of exp(-W - 1/2) F(omega_hat)
  double tilted_se = 0.0;
  double base = 0.0;    ///< mean of F(omega)
  double base_se = 0.0;
  double difference = 0.0;  ///< paired mean of the two, with its SE
  double difference_se = 0.0;
  std::size_t replicas = 0;
};

/// Change-of-variables check for the tilted field with F the restricted ratio
/// at radius |J|/2: both estimators have the same expectation.
TiltIdentity tilt_identity(const diag::Ensemble& ens, const walk::WalkModel& walk, double beta,
                           std::int64_t N, double R, std::size_t replicas);

}  // namespace polymerlab::loc
