#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace polymerlab::stats {

/// Sample mean with standard error of the mean. `se` is NaN when fewer than
/// two samples are available.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t count = 0;

  bool se_defined() const noexcept;
};

MeanSe mean_se(std::span<const double> xs);

/// Linear-interpolated quantile (type 7), q in [0, 1]. Input need not be sorted.
double quantile(std::vector<double> xs, double q);

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
};

/// Ordinary least squares of y on x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// One-sided 99% standard normal quantile.
inline constexpr double kZ99 = 2.3263478740408408;

/// Binomial proportion with a Wilson score interval at the given z.
struct Proportion {
  double estimate = 0.0;
  double se = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

Proportion proportion(std::size_t successes, std::size_t trials, double z = 3.0);

}  // namespace polymerlab::stats
