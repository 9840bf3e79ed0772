#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "polymerlab/convolution.hpp"
#include "polymerlab/environment.hpp"
#include "polymerlab/rng.hpp"
#include "polymerlab/stats.hpp"
#include "polymerlab/walk.hpp"

// Forward transfer-matrix recursion for the normalized point-to-line
// partition function Zhat_n = Z_n exp(-n lambda(beta)) and the endpoint law.

namespace polymerlab::polymer {

struct PolymerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Sites with rho below this fraction of the maximum are trimmed from the
/// window edges.
inline constexpr double kTrimRatio = 1e-16;

struct ForwardState {
  std::int64_t n = 0;
  std::int64_t x_lo = 0;
  std::vector<double> rho{1.0};
  double log_zhat = 0.0;
  double leaked_mass = 0.0;
  /// I_n = sum_x mu_n(x)^2 from the step that produced this state.
  double overlap = std::numeric_limits<double>::quiet_NaN();
  /// max_x mu_n(x) from the same step.
  double max_mu = std::numeric_limits<double>::quiet_NaN();
  double max_endpoint_mass = 1.0;
  std::int64_t argmax_x = 0;

  std::int64_t x_hi() const noexcept { return x_lo + static_cast<std::int64_t>(rho.size()) - 1; }
  double rho_at(std::int64_t x) const noexcept {
    return (x < x_lo || x > x_hi()) ? 0.0 : rho[static_cast<std::size_t>(x - x_lo)];
  }
};

/// Restriction of the path. Both parts are optional and combine by
/// intersection: |S_n| <= radius for all n >= 1, and S_n in [lo, hi] for
/// n >= from_n.
struct PathConstraint {
  struct Block {
    std::int64_t lo = 0, hi = 0, from_n = 1;
  };
  std::optional<std::int64_t> radius;
  std::optional<Block> block;

  static PathConstraint none() { return {}; }
  static PathConstraint global_window(std::int64_t r);
  static PathConstraint half_time_block(std::int64_t lo, std::int64_t hi, std::int64_t from_n);

  bool active() const noexcept { return radius.has_value() || block.has_value(); }
  bool allows(std::int64_t n, std::int64_t x) const noexcept;
  /// Allowed x range at time n, as [lo, hi].
  std::pair<std::int64_t, std::int64_t> allowed_range(std::int64_t n) const noexcept;
};

/// Everything a step needs besides the state and the field. Built once per
/// (walk, env, beta) and shared read-only between threads.
struct Context {
  walk::WalkModel walk;
  double beta = 0.0;
  double lambda_beta = 0.0;
  double leak_budget = 1e-8;
  std::shared_ptr<const conv::KernelConvolver> kernel;

  std::int64_t K() const noexcept { return walk.support(); }
};

Context make_context(const walk::WalkModel& walk, const env::EnvModel& env, double beta,
                     double leak_budget = 1e-8);

ForwardState init_state();

ForwardState step(const ForwardState& state, const env::Environment& field, const Context& ctx,
                  const PathConstraint& constraint = PathConstraint::none());

struct TraceRow {
  std::int64_t n = 0;
  double log_zhat = 0.0;
  double overlap = 0.0;
  double max_mu = 0.0;
  double max_endpoint_mass = 0.0;
  std::int64_t argmax_x = 0;
  double leaked_mass = 0.0;
};

ForwardState run(const env::Environment& field, const Context& ctx, std::int64_t N,
                 const PathConstraint& constraint = PathConstraint::none(),
                 std::vector<TraceRow>* trace = nullptr);

/// All states 0..N, for path sampling.
std::vector<ForwardState> run_states(const env::Environment& field, const Context& ctx,
                                     std::int64_t N,
                                     const PathConstraint& constraint = PathConstraint::none());

struct EndpointLaw {
  std::int64_t x_lo = 0;
  std::span<const double> p;
};

inline EndpointLaw endpoint_law(const ForwardState& state) { return {state.x_lo, state.rho}; }

/// mu(x) = sum_y rho(y) q(x - y) over [x_lo - K, x_hi + K].
std::vector<double> free_step(const ForwardState& state, const Context& ctx);

/// I_{n+1} = sum_x mu(x)^2 for a state at time n.
double overlap(const ForwardState& state, const Context& ctx);

/// Draw S_0..S_N from the polymer measure by backward sampling through the
/// stored forward states.
std::vector<std::int64_t> sample_path(std::span<const ForwardState> states, const Context& ctx,
                                      CounterRng& rng);

/// Monte Carlo estimate of P^{(x)2}_{N-1}(S^1_N = S^2_N): two independent
/// polymer paths of length N-1, each extended by one free increment.
stats::MeanSe two_replica_overlap_mc(const env::Environment& field, const Context& ctx,
                                     std::int64_t N, std::size_t samples, std::uint64_t seed,
                                     std::uint64_t stream = 0);

}  // namespace polymerlab::polymer
