#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "polymerlab/rng.hpp"

// Heavy-tailed symmetric increment laws on the integers,
//
//   q(k) = L(|k|) / |k|^(alpha+1)  for k != 0,   q(0) = p0,
//
// together with their scaling sequences, recurrence class, entropy and
// two-walk intersection probability.

namespace polymerlab::walk {

struct WalkError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class LFamily { constant, log_power };

/// Slowly varying factor L(x) = c * shape(x), with shape(x) = 1 for the
/// constant family and (log(e + x))^gamma for the log-power family.
struct SlowlyVaryingSpec {
  LFamily family = LFamily::constant;
  double c = 1.0;
  double gamma = 0.0;

  static SlowlyVaryingSpec constant(double c = 1.0) { return {LFamily::constant, c, 0.0}; }
  static SlowlyVaryingSpec log_power(double c, double gamma) {
    return {LFamily::log_power, c, gamma};
  }

  double shape(double x) const noexcept;
  double operator()(double x) const noexcept { return c * shape(x); }
  std::string name() const;
};

/// Immutable, cheaply copyable increment law. Tables are shared between copies.
class WalkModel {
 public:
  double alpha() const noexcept;
  /// L with the constant c solved for by the constructor.
  const SlowlyVaryingSpec& L() const noexcept;
  double p0() const noexcept;
  /// Truncation K: the tabulated support is [-K, K].
  std::int64_t support() const noexcept;
  /// Analytic mass 2 c sum_{k>K} L(k)/k^(alpha+1) dropped by truncation.
  double tail_mass() const noexcept;
  /// Integral bracket [lo, hi] for tail_mass.
  std::pair<double, double> tail_mass_bracket() const noexcept;

  /// Untruncated q(k); zero outside the support.
  double pmf(std::int64_t k) const noexcept;
  /// One-sided untruncated table q(0..K).
  std::span<const double> one_sided() const noexcept;
  /// P(|X_1| > a) for the untruncated law, any real a >= 0.
  double tail_probability(double a) const;
  /// sum_{k > m} L(k)/k^(alpha+1) / c for integer m >= 0 (the raw series tail).
  double series_tail(std::int64_t m) const;
  /// Draw from the truncated law renormalized by 1/(1 - tail_mass).
  std::int64_t sample(CounterRng& rng) const noexcept;

  struct Impl;  // defined in walk.cpp

 private:
  std::shared_ptr<const Impl> impl_;

  explicit WalkModel(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  friend WalkModel build_walk(double, SlowlyVaryingSpec, double, double);
  friend WalkModel build_walk_with_support(double, SlowlyVaryingSpec, double, std::int64_t);
};

/// Largest support the constructors will tabulate.
inline constexpr std::int64_t kMaxSupport = std::int64_t{1} << 25;

/// Build the normalized law, choosing the smallest K whose analytic tail mass
/// is at most `tail_tolerance`. L's shape is kept; its constant is rescaled so
/// the full series sums to 1 - p0.
WalkModel build_walk(double alpha, SlowlyVaryingSpec L, double p0, double tail_tolerance);

/// Same normalization with an explicitly chosen truncation K.
WalkModel build_walk_with_support(double alpha, SlowlyVaryingSpec L, double p0,
                                  std::int64_t support);

inline double pmf(const WalkModel& model, std::int64_t k) noexcept { return model.pmf(k); }

inline std::int64_t sample_increment(const WalkModel& model, CounterRng& rng) noexcept {
  return model.sample(rng);
}

/// Two-sided kernel of the truncated law renormalized to total mass 1,
/// indexed by k + K.
std::vector<double> renormalized_kernel(const WalkModel& model);

/// Law of X_1 - X~_1 for the truncated kernel, indexed by y + 2K.
std::vector<double> difference_law(const WalkModel& model);

struct ScalingSequence {
  /// values[n - 1] = a_n.
  std::vector<std::int64_t> values;
  std::string rule;

  std::int64_t operator[](std::int64_t n) const { return values.at(static_cast<std::size_t>(n - 1)); }
  std::int64_t horizon() const noexcept { return static_cast<std::int64_t>(values.size()); }
};

/// a_n = min{a >= 1 : n P(|X_1| > a) <= 1} from the untruncated tail.
ScalingSequence scaling_sequence(const WalkModel& model, std::int64_t n_max);

/// The same rule for a single (possibly huge) n, returned as a real number.
double scaling_value(const WalkModel& model, double n);

enum class Recurrence { recurrent, transient };
std::string to_string(Recurrence r);

Recurrence classify_recurrence(const WalkModel& model);

struct Entropy {
  double value = 0.0;       ///< -sum_{|k|<=K} q log q
  double tail_bound = 0.0;  ///< bound on the neglected -sum_{|k|>K} q log q
};

Entropy walk_entropy(const WalkModel& model);

struct IntersectionEstimate {
  double pi_p = 0.0;
  double error_bound = 0.0;  ///< half-width of the tail-completion bracket
  double pi_lo = 0.0;
  double pi_hi = 0.0;
  double green_partial = 0.0;  ///< sum_{n<=H} P(Y_n = 0)
  double green = 0.0;          ///< completed Green function at 0
  double local_constant = 0.0; ///< fitted P(Y_n = 0) a_n on the last decade
  std::int64_t horizon = 0;
  std::int64_t fft_size = 0;
};

/// pi_p = P(exists n >= 1 : S_n = S~_n) for transient walks; throws WalkError
/// for recurrent ones. Uses the untruncated law folded onto a periodic lattice
/// much wider than a_horizon, so the result does not depend on K.
IntersectionEstimate intersection_probability(const WalkModel& model, std::int64_t horizon);

/// Return probabilities P(Y_n = 0 mod fft_size) of the difference walk of the
/// untruncated law, from the transform intersection_probability uses.
std::vector<double> difference_return_probabilities(const WalkModel& model,
                                                    std::span<const std::int64_t> ns,
                                                    std::int64_t fft_size);

}  // namespace polymerlab::walk
