#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// I.i.d. standardized random field omega_{n,x}, generated on demand from a
// counter-based cipher keyed by (seed, replica, n, x).

namespace polymerlab::env {

struct EnvError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Family { gaussian, rademacher, tabulated };

std::string to_string(Family f);

class EnvModel {
 public:
  static constexpr double kUnbounded = std::numeric_limits<double>::infinity();

  /// `interval` is the declared half-width c of [-c, c] on which lambda is
  /// finite.
  static EnvModel gaussian(double interval = kUnbounded);
  static EnvModel rademacher(double interval = kUnbounded);
  /// Values are standardized to mean 0 and variance 1 by the constructor.
  static EnvModel tabulated(std::vector<double> values, std::vector<double> probabilities,
                            double interval = kUnbounded);

  Family family() const noexcept { return family_; }
  double interval() const noexcept { return interval_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> probabilities() const noexcept { return probs_; }

  /// Map two cipher output words to one draw.
  double draw(std::uint32_t w0, std::uint32_t w1) const noexcept;

 private:
  Family family_ = Family::gaussian;
  double interval_ = kUnbounded;
  std::vector<double> values_;
  std::vector<double> probs_;
  std::vector<double> cum_;
};

/// log E exp(beta omega).
double lambda(const EnvModel& env, double beta);
/// d/d beta of lambda; closed form for gaussian and rademacher, central
/// differences with a Richardson check for tabulated laws.
double lambda_prime(const EnvModel& env, double beta);

/// Read access to a field. Implementations are immutable and thread-safe.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual double omega(std::int64_t n, std::int64_t x) const = 0;
  /// out[i] = omega(n, x_lo + i).
  virtual void fill_row(std::int64_t n, std::int64_t x_lo, std::span<double> out) const;
};

class EnvField final : public Environment {
 public:
  EnvField(EnvModel env, std::uint64_t master_seed, std::uint64_t replica_id);

  double omega(std::int64_t n, std::int64_t x) const override;

  const EnvModel& model() const noexcept { return env_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t replica() const noexcept { return replica_; }

 private:
  EnvModel env_;
  std::uint64_t seed_;
  std::uint64_t replica_;
};

inline double omega(const Environment& field, std::int64_t n, std::int64_t x) {
  return field.omega(n, x);
}

/// omega'(n, x) = omega(n, x + shift(n)).
class ShiftedField final : public Environment {
 public:
  ShiftedField(std::shared_ptr<const Environment> base, std::function<std::int64_t(std::int64_t)> shift);
  double omega(std::int64_t n, std::int64_t x) const override;

 private:
  std::shared_ptr<const Environment> base_;
  std::function<std::int64_t(std::int64_t)> shift_;
};

/// Half-open rectangle [n_lo, n_hi) x [x_lo, x_hi) of sites.
struct Region {
  std::int64_t n_lo = 0, n_hi = 0, x_lo = 0, x_hi = 0;

  bool contains(std::int64_t n, std::int64_t x) const noexcept {
    return n >= n_lo && n < n_hi && x >= x_lo && x < x_hi;
  }
  std::int64_t size() const noexcept { return (n_hi - n_lo) * (x_hi - x_lo); }
};

/// omega'(n, x) = omega(n, x) + s on the region, unchanged elsewhere.
class TiltedField final : public Environment {
 public:
  TiltedField(std::shared_ptr<const Environment> base, Region region, double s);
  double omega(std::int64_t n, std::int64_t x) const override;

  const Region& region() const noexcept { return region_; }
  double tilt() const noexcept { return s_; }

 private:
  std::shared_ptr<const Environment> base_;
  Region region_;
  double s_;
};

}  // namespace polymerlab::env
