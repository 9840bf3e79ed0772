#include "polymerlab/convolution.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <unordered_map>

namespace polymerlab::conv {

namespace {

// FFTW planning is not thread-safe; execution on fresh aligned arrays is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

const PlanPair& plans(std::size_t n) {
  static std::unordered_map<std::size_t, PlanPair> cache;
  std::lock_guard lock(plan_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  const int ni = static_cast<int>(n);
  double* r = fftw_alloc_real(n);
  fftw_complex* c = fftw_alloc_complex(n / 2 + 1);
  PlanPair p;
  p.forward = fftw_plan_dft_r2c_1d(ni, r, c, FFTW_ESTIMATE);
  p.backward = fftw_plan_dft_c2r_1d(ni, c, r, FFTW_ESTIMATE);
  fftw_free(r);
  fftw_free(c);
  if (!p.forward || !p.backward) throw std::runtime_error("fftw planning failed");
  return cache.emplace(n, p).first->second;
}

struct RealBuf {
  explicit RealBuf(std::size_t n) : p(fftw_alloc_real(n)) { std::memset(p, 0, n * sizeof(double)); }
  ~RealBuf() { fftw_free(p); }
  RealBuf(const RealBuf&) = delete;
  RealBuf& operator=(const RealBuf&) = delete;
  double* p;
};

struct ComplexBuf {
  explicit ComplexBuf(std::size_t n) : p(fftw_alloc_complex(n)) {}
  ~ComplexBuf() { fftw_free(p); }
  ComplexBuf(const ComplexBuf&) = delete;
  ComplexBuf& operator=(const ComplexBuf&) = delete;
  fftw_complex* p;
};

void forward(std::span<const double> x, std::size_t n, ComplexBuf& out) {
  RealBuf in(n);
  std::copy(x.begin(), x.end(), in.p);
  fftw_execute_dft_r2c(plans(n).forward, in.p, out.p);
}

}  // namespace

std::size_t fft_size(std::size_t n) {
  std::size_t best = 1;
  while (best < n) best <<= 1;
  for (std::size_t p5 = 1; p5 < best; p5 *= 5)
    for (std::size_t p35 = p5; p35 < best; p35 *= 3) {
      std::size_t v = p35;
      while (v < n) v <<= 1;
      best = std::min(best, v);
    }
  return best;
}

bool prefer_direct(std::size_t na, std::size_t nb) noexcept {
  return std::min(na, nb) <= 48 || na * nb <= (std::size_t{1} << 16);
}

std::vector<double> direct(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    double* o = out.data() + i;
    for (std::size_t j = 0; j < b.size(); ++j) o[j] += ai * b[j];
  }
  return out;
}

std::vector<double> fft(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t len = a.size() + b.size() - 1;
  const std::size_t n = fft_size(len);
  const std::size_t nc = n / 2 + 1;
  ComplexBuf fa(nc), fb(nc);
  forward(a, n, fa);
  forward(b, n, fb);
  for (std::size_t j = 0; j < nc; ++j) {
    const double re = fa.p[j][0] * fb.p[j][0] - fa.p[j][1] * fb.p[j][1];
    const double im = fa.p[j][0] * fb.p[j][1] + fa.p[j][1] * fb.p[j][0];
    fa.p[j][0] = re;
    fa.p[j][1] = im;
  }
  RealBuf r(n);
  fftw_execute_dft_c2r(plans(n).backward, fa.p, r.p);
  std::vector<double> out(len);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < len; ++i) out[i] = std::max(0.0, r.p[i] * scale);
  return out;
}

std::vector<double> linear(std::span<const double> a, std::span<const double> b) {
  return prefer_direct(a.size(), b.size()) ? direct(a, b) : fft(a, b);
}

KernelConvolver::KernelConvolver(std::vector<double> kernel) : kernel_(std::move(kernel)) {
  if (kernel_.empty()) throw std::invalid_argument("empty convolution kernel");
}

std::shared_ptr<const KernelConvolver::Spectrum> KernelConvolver::spectrum(std::size_t n) const {
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(n);
    if (it != cache_.end()) return it->second;
  }
  const std::size_t nc = n / 2 + 1;
  ComplexBuf f(nc);
  forward(kernel_, n, f);
  auto s = std::make_shared<Spectrum>(nc);
  for (std::size_t j = 0; j < nc; ++j) (*s)[j] = {f.p[j][0], f.p[j][1]};
  std::lock_guard lock(mutex_);
  return cache_.emplace(n, std::move(s)).first->second;
}

void KernelConvolver::apply(std::span<const double> in, std::vector<double>& out) const {
  if (in.empty()) {
    out.clear();
    return;
  }
  if (prefer_direct(in.size(), kernel_.size())) {
    out = direct(in, kernel_);
    return;
  }
  const std::size_t len = in.size() + kernel_.size() - 1;
  const std::size_t n = fft_size(len);
  const std::size_t nc = n / 2 + 1;
  const auto spec = spectrum(n);
  ComplexBuf f(nc);
  forward(in, n, f);
  for (std::size_t j = 0; j < nc; ++j) {
    const std::complex<double> v = std::complex<double>(f.p[j][0], f.p[j][1]) * (*spec)[j];
    f.p[j][0] = v.real();
    f.p[j][1] = v.imag();
  }
  RealBuf r(n);
  fftw_execute_dft_c2r(plans(n).backward, f.p, r.p);
  out.resize(len);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < len; ++i) out[i] = std::max(0.0, r.p[i] * scale);
}

}  // namespace polymerlab::conv
