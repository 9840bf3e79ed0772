#include "polymerlab/walk.hpp"

#include <fftw3.h>

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>

#include "polymerlab/convolution.hpp"

namespace polymerlab::walk {

namespace {

constexpr double kE = std::numbers::e;
// Below this index the series tail is tabulated by exact summation; above it
// the midpoint Euler-Maclaurin formula is accurate to double precision.
constexpr std::int64_t kExactTail = 1024;

/// log(e + exp(lx)) without overflow.
double log_e_plus_exp(double lx) noexcept {
  return lx > 1.0 ? lx + std::log1p(kE * std::exp(-lx)) : std::log(kE + std::exp(lx));
}

double shape_of(const SlowlyVaryingSpec& L, double x) noexcept {
  if (L.family == LFamily::constant) return 1.0;
  return std::pow(std::log(kE + x), L.gamma);
}

double log_shape_at_log(const SlowlyVaryingSpec& L, double lx) noexcept {
  if (L.family == LFamily::constant) return 0.0;
  return L.gamma * std::log(log_e_plus_exp(lx));
}

/// Shape-only series term f(t) = shape(t) t^-(alpha+1).
struct Series {
  double alpha;
  SlowlyVaryingSpec L;

  double f(double t) const noexcept { return shape_of(L, t) * std::pow(t, -(alpha + 1.0)); }

  double log_derivative(double t) const noexcept {
    double d = -(alpha + 1.0) / t;
    if (L.family == LFamily::log_power) d += L.gamma / ((kE + t) * std::log(kE + t));
    return d;
  }

  /// int_x^inf f(t) dt.
  double integral(double x) const {
    if (L.family == LFamily::constant) return std::pow(x, -alpha) / alpha;
    // t = x e^u turns the tail into x^-alpha int_0^inf shape(x e^u) e^(-alpha u) du.
    boost::math::quadrature::exp_sinh<double> quad;
    const double lx = std::log(x);
    auto g = [&](double u) { return std::exp(log_shape_at_log(L, lx + u) - alpha * u); };
    return std::exp(-alpha * lx) * quad.integrate(g, 0.0, std::numeric_limits<double>::infinity(),
                                                  1e-14);
  }

  /// sum_{k > m} f(k) for real integer-valued m >= kExactTail.
  double em_tail(double m) const {
    const double t = m + 0.5;
    const double ft = f(t);
    const double d1 = ft * log_derivative(t);
    const double s = alpha + 1.0;
    const double d3 = -ft * s * (s + 1.0) * (s + 2.0) / (t * t * t);
    return integral(t) + d1 / 24.0 - 7.0 * d3 / 5760.0;
  }
};

}  // namespace

struct WalkModel::Impl {
  double alpha = 0.0;
  SlowlyVaryingSpec L;
  double p0 = 0.0;
  std::int64_t K = 0;
  double eps = 0.0;
  double eps_lo = 0.0;
  double eps_hi = 0.0;
  std::vector<double> q;         // q(0..K)
  std::vector<double> cum;       // renormalized P(|X| <= m), m = 0..K
  std::vector<double> tail_tab;  // sum_{k>m} f(k), m = 0..kExactTail

  Series series() const { return {alpha, L}; }

  double series_tail(double m) const {
    if (m < static_cast<double>(kExactTail))
      return tail_tab[static_cast<std::size_t>(std::max(0.0, m))];
    return series().em_tail(m);
  }
};

double SlowlyVaryingSpec::shape(double x) const noexcept { return shape_of(*this, x); }

std::string SlowlyVaryingSpec::name() const {
  if (family == LFamily::constant) return "constant";
  return fmt::format("log_power({})", gamma);
}

double WalkModel::alpha() const noexcept { return impl_->alpha; }
const SlowlyVaryingSpec& WalkModel::L() const noexcept { return impl_->L; }
double WalkModel::p0() const noexcept { return impl_->p0; }
std::int64_t WalkModel::support() const noexcept { return impl_->K; }
double WalkModel::tail_mass() const noexcept { return impl_->eps; }
std::pair<double, double> WalkModel::tail_mass_bracket() const noexcept {
  return {impl_->eps_lo, impl_->eps_hi};
}

double WalkModel::pmf(std::int64_t k) const noexcept {
  const std::int64_t a = k < 0 ? -k : k;
  if (a > impl_->K) return 0.0;
  return impl_->q[static_cast<std::size_t>(a)];
}

std::span<const double> WalkModel::one_sided() const noexcept { return impl_->q; }

double WalkModel::series_tail(std::int64_t m) const {
  if (m < 0) throw WalkError("series_tail needs m >= 0");
  return impl_->series_tail(static_cast<double>(m));
}

double WalkModel::tail_probability(double a) const {
  if (!(a >= 0.0)) throw WalkError("tail_probability needs a >= 0");
  if (std::isinf(a)) return 0.0;
  return 2.0 * impl_->L.c * impl_->series_tail(std::floor(a));
}

std::int64_t WalkModel::sample(CounterRng& rng) const noexcept {
  const bool negative = (rng() & 1u) != 0;
  const double u = rng.uniform();
  const auto& cum = impl_->cum;
  const auto m = static_cast<std::int64_t>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
  const std::int64_t mag = std::min(m, impl_->K);
  return negative ? -mag : mag;
}

namespace {

void validate(double alpha, const SlowlyVaryingSpec& L, double p0) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw WalkError("alpha must be positive");
  if (!(p0 >= 0.0 && p0 < 1.0)) throw WalkError("p0 must lie in [0, 1)");
  if (!(L.c > 0.0)) throw WalkError("L constant must be positive");
  if (L.family == LFamily::log_power && !std::isfinite(L.gamma))
    throw WalkError("log-power exponent must be finite");
}

std::shared_ptr<WalkModel::Impl> normalize(double alpha, SlowlyVaryingSpec L, double p0) {
  auto impl = std::make_shared<WalkModel::Impl>();
  impl->alpha = alpha;
  impl->p0 = p0;
  impl->L = L;
  const Series s{alpha, L};
  impl->tail_tab.assign(kExactTail + 1, 0.0);
  impl->tail_tab[kExactTail] = s.em_tail(static_cast<double>(kExactTail));
  // Backward accumulation adds small terms first.
  for (std::int64_t m = kExactTail; m-- > 0;)
    impl->tail_tab[static_cast<std::size_t>(m)] =
        impl->tail_tab[static_cast<std::size_t>(m + 1)] + s.f(static_cast<double>(m + 1));
  impl->L.c = (1.0 - p0) / (2.0 * impl->tail_tab[0]);
  return impl;
}

void tabulate(WalkModel::Impl& impl, std::int64_t K) {
  impl.K = K;
  const Series s = impl.series();
  const double c = impl.L.c;
  impl.eps = 2.0 * c * impl.series_tail(static_cast<double>(K));
  impl.eps_lo = 2.0 * c * s.integral(static_cast<double>(K + 1));
  impl.eps_hi = 2.0 * c * s.integral(static_cast<double>(K));
  impl.q.assign(static_cast<std::size_t>(K + 1), 0.0);
  impl.q[0] = impl.p0;
  for (std::int64_t k = 1; k <= K; ++k)
    impl.q[static_cast<std::size_t>(k)] = c * s.f(static_cast<double>(k));
  impl.cum.assign(static_cast<std::size_t>(K + 1), 0.0);
  const double scale = 1.0 / (1.0 - impl.eps);
  double acc = impl.p0 * scale;
  impl.cum[0] = acc;
  for (std::int64_t k = 1; k <= K; ++k) {
    acc += 2.0 * impl.q[static_cast<std::size_t>(k)] * scale;
    impl.cum[static_cast<std::size_t>(k)] = acc;
  }
  impl.cum.back() = 1.0;
}

}  // namespace

WalkModel build_walk(double alpha, SlowlyVaryingSpec L, double p0, double tail_tolerance) {
  validate(alpha, L, p0);
  if (!(tail_tolerance > 0.0 && tail_tolerance < 1.0))
    throw WalkError("tail_tolerance must lie in (0, 1)");
  auto impl = normalize(alpha, L, p0);
  const double c = impl->L.c;
  auto mass = [&](std::int64_t K) { return 2.0 * c * impl->series_tail(static_cast<double>(K)); };
  if (mass(kMaxSupport) > tail_tolerance)
    throw WalkError(fmt::format(
        "tail_tolerance {} needs support beyond the maximum {} (tail mass there is {:.3g}); "
        "raise the tolerance or set the support explicitly",
        tail_tolerance, kMaxSupport, mass(kMaxSupport)));
  std::int64_t hi = 1;
  while (mass(hi) > tail_tolerance) hi = std::min(hi * 2, kMaxSupport);
  std::int64_t lo = hi / 2;  // mass(lo) > tol unless lo == 0
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (mass(mid) > tail_tolerance ? lo : hi) = mid;
  }
  tabulate(*impl, std::max<std::int64_t>(hi, 1));
  return WalkModel(std::move(impl));
}

WalkModel build_walk_with_support(double alpha, SlowlyVaryingSpec L, double p0,
                                  std::int64_t support) {
  validate(alpha, L, p0);
  if (support < 1 || support > kMaxSupport)
    throw WalkError(fmt::format("support must lie in [1, {}]", kMaxSupport));
  auto impl = normalize(alpha, L, p0);
  tabulate(*impl, support);
  return WalkModel(std::move(impl));
}

std::vector<double> renormalized_kernel(const WalkModel& model) {
  const std::int64_t K = model.support();
  const auto q = model.one_sided();
  const double scale = 1.0 / (1.0 - model.tail_mass());
  std::vector<double> out(static_cast<std::size_t>(2 * K + 1));
  for (std::int64_t k = -K; k <= K; ++k)
    out[static_cast<std::size_t>(k + K)] = q[static_cast<std::size_t>(k < 0 ? -k : k)] * scale;
  return out;
}

std::vector<double> difference_law(const WalkModel& model) {
  // The law is symmetric, so X - X~ has the law of X + X~.
  const auto kernel = renormalized_kernel(model);
  return conv::linear(kernel, kernel);
}

namespace {

template <class Tail>
double smallest_scale(double n, double start, Tail&& tail) {
  auto ok = [&](double a) { return n * tail(a) <= 1.0; };
  double lo = std::max(1.0, start);
  if (ok(lo)) return lo;
  double step = 1.0;
  double hi = lo + step;
  while (!ok(hi)) {
    lo = hi;
    step *= 2.0;
    hi = lo + step;
  }
  // lo fails, hi passes. Stop once adjacent integers or at relative precision.
  while (hi - lo > 1.0 && hi - lo > 1e-13 * hi) {
    const double mid = std::floor(lo + (hi - lo) / 2.0);
    if (mid <= lo || mid >= hi) break;
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

ScalingSequence scaling_sequence(const WalkModel& model, std::int64_t n_max) {
  if (n_max < 1) throw WalkError("scaling_sequence needs n_max >= 1");
  ScalingSequence out;
  out.rule = "a_n = min{a >= 1 : n P(|X_1| > a) <= 1}";
  out.values.reserve(static_cast<std::size_t>(n_max));
  auto tail = [&](double a) { return model.tail_probability(a); };
  double a = 1.0;
  for (std::int64_t n = 1; n <= n_max; ++n) {
    a = smallest_scale(static_cast<double>(n), a, tail);
    out.values.push_back(static_cast<std::int64_t>(a));
  }
  return out;
}

double scaling_value(const WalkModel& model, double n) {
  if (!(n >= 1.0)) throw WalkError("scaling_value needs n >= 1");
  return smallest_scale(n, 1.0, [&](double a) { return model.tail_probability(a); });
}

std::string to_string(Recurrence r) { return r == Recurrence::recurrent ? "recurrent" : "transient"; }

Recurrence classify_recurrence(const WalkModel& model) {
  // Recurrent iff sum_n 1/a_n diverges.
  const double alpha = model.alpha();
  if (alpha > 1.0) return Recurrence::recurrent;
  if (alpha < 1.0) return Recurrence::transient;
  const auto& L = model.L();
  if (L.family == LFamily::log_power && L.gamma > 1.0) return Recurrence::transient;
  return Recurrence::recurrent;
}

Entropy walk_entropy(const WalkModel& model) {
  Entropy out;
  const auto q = model.one_sided();
  auto term = [](double p) { return p > 0.0 ? -p * std::log(p) : 0.0; };
  double acc = 0.0;
  for (std::size_t k = q.size(); k-- > 1;) acc += 2.0 * term(q[k]);
  out.value = acc + term(q[0]);

  const double K = static_cast<double>(model.support());
  const double c = model.L().c;
  boost::math::quadrature::exp_sinh<double> quad;
  const double lK = std::log(K);
  const double lc = std::log(c);
  // t = K e^u; integrand -p(t) log p(t) t in log form.
  auto g = [&](double u) {
    const double lt = lK + u;
    const double lp = lc + log_shape_at_log(model.L(), lt) - (model.alpha() + 1.0) * lt;
    return -lp * std::exp(lp + lt);
  };
  out.tail_bound = 2.0 * quad.integrate(g, 0.0, std::numeric_limits<double>::infinity(), 1e-12);
  return out;
}

namespace {

std::mutex& r2r_mutex() {
  static std::mutex m;
  return m;
}

/// Characteristic function phi_j = E exp(2 pi i j X / M), j = 0..M/2, of the
/// untruncated law folded onto Z_M, via a type-I DCT. Mass beyond M/2 is
/// spread uniformly over the residues, so it only enters phi_0.
std::vector<double> characteristic(const WalkModel& model, std::int64_t M) {
  const std::size_t n = static_cast<std::size_t>(M / 2 + 1);
  double* in = fftw_alloc_real(n);
  double* out = fftw_alloc_real(n);
  const Series s{model.alpha(), model.L()};
  const double c = model.L().c;
  const std::int64_t half = M / 2;
  in[0] = model.p0();
  // REDFT00 doubles the interior terms, matching the symmetric sum.
  for (std::int64_t k = 1; k < half; ++k) in[k] = c * s.f(static_cast<double>(k));
  in[half] = 0.0;
  fftw_plan plan;
  {
    std::lock_guard lock(r2r_mutex());
    plan = fftw_plan_r2r_1d(static_cast<int>(n), in, out, FFTW_REDFT00, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::vector<double> phi(out, out + n);
  {
    std::lock_guard lock(r2r_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  phi[0] = 1.0;
  return phi;
}

double lattice_weight(std::size_t j, std::size_t last) { return (j == 0 || j == last) ? 1.0 : 2.0; }

std::vector<double> return_probabilities(const std::vector<double>& phi, std::int64_t M,
                                         std::span<const std::int64_t> ns) {
  const std::size_t last = phi.size() - 1;
  std::vector<double> logsq(phi.size());
  for (std::size_t j = 0; j < phi.size(); ++j)
    logsq[j] = phi[j] == 0.0 ? -std::numeric_limits<double>::infinity()
                             : std::log(phi[j] * phi[j]);
  std::vector<double> out;
  out.reserve(ns.size());
  for (std::int64_t n : ns) {
    const double dn = static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t j = 0; j < phi.size(); ++j) {
      const double e = dn * logsq[j];
      if (e < -745.0) continue;
      acc += lattice_weight(j, last) * std::exp(e);
    }
    out.push_back(acc / static_cast<double>(M));
  }
  return out;
}

}  // namespace

std::vector<double> difference_return_probabilities(const WalkModel& model,
                                                    std::span<const std::int64_t> ns,
                                                    std::int64_t fft_size) {
  if (fft_size < 4 || (fft_size & (fft_size - 1)) != 0)
    throw WalkError("fft_size must be a power of two >= 4");
  const auto phi = characteristic(model, fft_size);
  return return_probabilities(phi, fft_size, ns);
}

IntersectionEstimate intersection_probability(const WalkModel& model, std::int64_t horizon) {
  if (classify_recurrence(model) == Recurrence::recurrent)
    throw WalkError("intersection probability is 1 for a recurrent walk");
  if (horizon < 10) throw WalkError("intersection_probability needs horizon >= 10");
  constexpr std::int64_t kMaxLattice = std::int64_t{1} << 26;
  const double aH = scaling_value(model, static_cast<double>(horizon));
  std::int64_t M = std::int64_t{1} << 16;
  while (static_cast<double>(M) < 64.0 * aH) M <<= 1;
  if (M > kMaxLattice)
    throw WalkError(fmt::format("horizon {} needs a lattice beyond 2^26", horizon));

  const auto phi = characteristic(model, M);
  const std::size_t last = phi.size() - 1;
  const double H1 = static_cast<double>(horizon + 1);
  double partial = 0.0;
  for (std::size_t j = 0; j < phi.size(); ++j) {
    double geometric;
    if (j == 0) {
      geometric = H1;
    } else {
      const double p2 = phi[j] * phi[j];
      const double one_minus = (1.0 - phi[j]) * (1.0 + phi[j]);
      geometric = one_minus <= 0.0 ? H1 : (1.0 - std::pow(p2, H1)) / one_minus;
    }
    partial += lattice_weight(j, last) * geometric;
  }
  partial /= static_cast<double>(M);

  // Local limit P(Y_n = 0) ~ C / a_n fitted on the last decade of the horizon.
  const std::int64_t n_lo = std::max<std::int64_t>(1, horizon / 10);
  std::vector<std::int64_t> ns;
  constexpr int kFitPoints = 24;
  for (int i = 0; i < kFitPoints; ++i) {
    const double t = static_cast<double>(i) / (kFitPoints - 1);
    const auto n = static_cast<std::int64_t>(
        std::llround(std::exp(std::log(double(n_lo)) * (1 - t) + std::log(double(horizon)) * t)));
    if (ns.empty() || n != ns.back()) ns.push_back(n);
  }
  const auto P = return_probabilities(phi, M, ns);
  const auto seq = scaling_sequence(model, horizon);
  double c_sum = 0.0, c_lo = std::numeric_limits<double>::infinity(), c_hi = 0.0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double v = P[i] * static_cast<double>(seq[ns[i]]);
    c_sum += v;
    c_lo = std::min(c_lo, v);
    c_hi = std::max(c_hi, v);
  }
  const double c_mean = c_sum / static_cast<double>(ns.size());

  // sum_{n > H} 1/a_n with a_n interpolated as a local power law between
  // doubling checkpoints, plus the power-law remainder past the last one.
  constexpr int kCheckpoints = 48;
  double tail = 0.0;
  double n_i = static_cast<double>(horizon);
  double a_i = scaling_value(model, n_i);
  double b = 1.0 / model.alpha();
  for (int i = 0; i < kCheckpoints; ++i) {
    const double n_next = 2.0 * n_i;
    const double a_next = scaling_value(model, n_next);
    b = std::log(a_next / a_i) / std::log(2.0);
    const double piece = std::fabs(1.0 - b) < 1e-12
                             ? n_i / a_i * std::log(2.0)
                             : n_i / a_i * (std::pow(2.0, 1.0 - b) - 1.0) / (1.0 - b);
    tail += piece;
    n_i = n_next;
    a_i = a_next;
  }
  const bool convergent = b > 1.0;
  tail += convergent ? n_i / (a_i * (b - 1.0)) : std::numeric_limits<double>::infinity();

  IntersectionEstimate out;
  out.horizon = horizon;
  out.fft_size = M;
  out.green_partial = partial;
  out.local_constant = c_mean;
  out.green = partial + c_mean * tail;
  const double g_lo = partial + c_lo * tail;
  const double g_hi = partial + c_hi * tail;
  out.pi_p = 1.0 - 1.0 / out.green;
  out.pi_lo = 1.0 - 1.0 / g_lo;
  out.pi_hi = std::isfinite(g_hi) ? 1.0 - 1.0 / g_hi : 1.0;
  out.error_bound = std::max(out.pi_p - out.pi_lo, out.pi_hi - out.pi_p);
  return out;
}

}  // namespace polymerlab::walk
