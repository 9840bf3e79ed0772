#include "polymerlab/environment.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "polymerlab/rng.hpp"

namespace polymerlab::env {

std::string to_string(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::rademacher: return "rademacher";
    case Family::tabulated: return "tabulated";
  }
  return "unknown";
}

namespace {

void check_interval(double interval) {
  if (!(interval > 0.0)) throw EnvError("finiteness interval must be positive");
}

}  // namespace

EnvModel EnvModel::gaussian(double interval) {
  check_interval(interval);
  EnvModel m;
  m.family_ = Family::gaussian;
  m.interval_ = interval;
  return m;
}

EnvModel EnvModel::rademacher(double interval) {
  check_interval(interval);
  EnvModel m;
  m.family_ = Family::rademacher;
  m.interval_ = interval;
  m.values_ = {-1.0, 1.0};
  m.probs_ = {0.5, 0.5};
  return m;
}

EnvModel EnvModel::tabulated(std::vector<double> values, std::vector<double> probabilities,
                             double interval) {
  check_interval(interval);
  if (values.empty() || values.size() != probabilities.size())
    throw EnvError("tabulated law needs matching non-empty values and probabilities");
  double total = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw EnvError("tabulated probabilities must be >= 0");
    total += p;
  }
  if (!(total > 0.0)) throw EnvError("tabulated probabilities sum to zero");
  for (double& p : probabilities) p /= total;
  double mean = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) mean += probabilities[i] * values[i];
  double var = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    var += probabilities[i] * (values[i] - mean) * (values[i] - mean);
  if (!(var > 0.0)) throw EnvError("tabulated law is degenerate");
  const double sd = std::sqrt(var);
  for (double& v : values) v = (v - mean) / sd;

  EnvModel m;
  m.family_ = Family::tabulated;
  m.interval_ = interval;
  m.values_ = std::move(values);
  m.probs_ = std::move(probabilities);
  m.cum_.resize(m.probs_.size());
  std::partial_sum(m.probs_.begin(), m.probs_.end(), m.cum_.begin());
  m.cum_.back() = 1.0;
  return m;
}

double EnvModel::draw(std::uint32_t w0, std::uint32_t w1) const noexcept {
  switch (family_) {
    case Family::gaussian: return normal_quantile(open_unit(w0, w1));
    case Family::rademacher: return (w0 >> 31) != 0 ? 1.0 : -1.0;
    case Family::tabulated: {
      const double u = open_unit(w0, w1);
      const auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
      const auto i = std::min<std::size_t>(static_cast<std::size_t>(it - cum_.begin()),
                                           values_.size() - 1);
      return values_[i];
    }
  }
  return 0.0;
}

namespace {

void check_beta(const EnvModel& env, double beta, bool strict) {
  const double c = env.interval();
  const bool ok = strict ? std::fabs(beta) < c : std::fabs(beta) <= c;
  if (!ok || !std::isfinite(beta))
    throw EnvError(fmt::format("beta = {} outside the declared finiteness interval [-{}, {}]",
                               beta, c, c));
}

double log_cosh(double b) {
  const double a = std::fabs(b);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

double tabulated_lambda(const EnvModel& env, double beta) {
  const auto v = env.values();
  const auto p = env.probabilities();
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (p[i] > 0.0) top = std::max(top, beta * v[i]);
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (p[i] > 0.0) acc += p[i] * std::exp(beta * v[i] - top);
  return top + std::log(acc);
}

}  // namespace

double lambda(const EnvModel& env, double beta) {
  check_beta(env, beta, false);
  if (beta == 0.0) return 0.0;
  switch (env.family()) {
    case Family::gaussian: return 0.5 * beta * beta;
    case Family::rademacher: return log_cosh(beta);
    case Family::tabulated: return tabulated_lambda(env, beta);
  }
  return 0.0;
}

double lambda_prime(const EnvModel& env, double beta) {
  check_beta(env, beta, true);
  switch (env.family()) {
    case Family::gaussian: return beta;
    case Family::rademacher: return std::tanh(beta);
    case Family::tabulated: break;
  }
  constexpr double h = 1e-6;
  const double c = env.interval();
  if (std::fabs(beta) + 2.0 * h >= c)
    throw EnvError("beta too close to the interval edge for a finite difference");
  const double d1 = (tabulated_lambda(env, beta + h) - tabulated_lambda(env, beta - h)) / (2.0 * h);
  const double d2 =
      (tabulated_lambda(env, beta + 2.0 * h) - tabulated_lambda(env, beta - 2.0 * h)) / (4.0 * h);
  const double richardson = (4.0 * d1 - d2) / 3.0;
  // The two estimates disagree only if lambda is badly conditioned here.
  if (std::fabs(richardson - d1) > 1e-6 * std::max(1.0, std::fabs(d1)))
    throw EnvError("finite-difference lambda' failed its Richardson check");
  return richardson;
}

void Environment::fill_row(std::int64_t n, std::int64_t x_lo, std::span<double> out) const {
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = omega(n, x_lo + static_cast<std::int64_t>(i));
}

EnvField::EnvField(EnvModel env, std::uint64_t master_seed, std::uint64_t replica_id)
    : env_(std::move(env)), seed_(master_seed), replica_(replica_id) {}

double EnvField::omega(std::int64_t n, std::int64_t x) const {
  const auto ux = static_cast<std::uint64_t>(x);
  const Philox4x32::Counter ctr{static_cast<std::uint32_t>(ux), static_cast<std::uint32_t>(ux >> 32),
                                static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(replica_)};
  const Philox4x32::Key key{static_cast<std::uint32_t>(seed_),
                            static_cast<std::uint32_t>(seed_ >> 32)};
  const auto w = Philox4x32::apply(ctr, key);
  return env_.draw(w[0], w[1]);
}

ShiftedField::ShiftedField(std::shared_ptr<const Environment> base,
                           std::function<std::int64_t(std::int64_t)> shift)
    : base_(std::move(base)), shift_(std::move(shift)) {}

double ShiftedField::omega(std::int64_t n, std::int64_t x) const {
  return base_->omega(n, x + shift_(n));
}

TiltedField::TiltedField(std::shared_ptr<const Environment> base, Region region, double s)
    : base_(std::move(base)), region_(region), s_(s) {}

double TiltedField::omega(std::int64_t n, std::int64_t x) const {
  const double w = base_->omega(n, x);
  return region_.contains(n, x) ? w + s_ : w;
}

}  // namespace polymerlab::env
