#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

// Full linear convolution of nonnegative sequences. Results are clamped at
// zero, so FFT round-off never produces negative mass.

namespace polymerlab::conv {

std::vector<double> direct(std::span<const double> a, std::span<const double> b);
std::vector<double> fft(std::span<const double> a, std::span<const double> b);

/// Picks direct summation for short operands and FFT otherwise.
std::vector<double> linear(std::span<const double> a, std::span<const double> b);

/// Smallest 2^i 3^j 5^k >= n.
std::size_t fft_size(std::size_t n);

bool prefer_direct(std::size_t na, std::size_t nb) noexcept;

/// Repeated convolution against one fixed kernel. Kernel spectra are cached
/// per transform size; safe to share between threads.
class KernelConvolver {
 public:
  explicit KernelConvolver(std::vector<double> kernel);

  std::size_t kernel_size() const noexcept { return kernel_.size(); }
  std::span<const double> kernel() const noexcept { return kernel_; }

  /// out.size() becomes in.size() + kernel_size() - 1.
  void apply(std::span<const double> in, std::vector<double>& out) const;

 private:
  using Spectrum = std::vector<std::complex<double>>;
  std::shared_ptr<const Spectrum> spectrum(std::size_t n) const;

  std::vector<double> kernel_;
  mutable std::mutex mutex_;
  mutable std::map<std::size_t, std::shared_ptr<const Spectrum>> cache_;
};

}  // namespace polymerlab::conv
