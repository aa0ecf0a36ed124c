#include "lyricdet/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "lyricdet/error.hpp"

namespace lyricdet::dsp {
namespace {

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

struct RealFft::Impl {
  double* time = nullptr;
  fftw_complex* freq = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (inv) fftw_destroy_plan(inv);
    fftw_free(time);
    fftw_free(freq);
  }
};

RealFft::RealFft(std::size_t n) : n_(n), impl_(std::make_unique<Impl>()) {
  if (n < 2) throw Error("FFT size must be at least 2");
  std::lock_guard lock(planner_mutex());
  impl_->time = fftw_alloc_real(n);
  impl_->freq = fftw_alloc_complex(n / 2 + 1);
  const int size = static_cast<int>(n);
  // FFTW_ESTIMATE keeps plans (and therefore results) independent of timing.
  impl_->fwd = fftw_plan_dft_r2c_1d(size, impl_->time, impl_->freq, FFTW_ESTIMATE);
  impl_->inv = fftw_plan_dft_c2r_1d(size, impl_->freq, impl_->time, FFTW_ESTIMATE);
  if (!impl_->fwd || !impl_->inv) throw Error("FFTW planning failed");
}

RealFft::~RealFft() = default;
RealFft::RealFft(RealFft&&) noexcept = default;
RealFft& RealFft::operator=(RealFft&&) noexcept = default;

void RealFft::forward(std::span<const double> input, std::span<std::complex<double>> output) {
  std::copy(input.begin(), input.end(), impl_->time);
  fftw_execute(impl_->fwd);
  for (std::size_t k = 0; k < bins(); ++k) {
    output[k] = {impl_->freq[k][0], impl_->freq[k][1]};
  }
}

void RealFft::inverse(std::span<const std::complex<double>> input, std::span<double> output) {
  for (std::size_t k = 0; k < bins(); ++k) {
    impl_->freq[k][0] = input[k].real();
    impl_->freq[k][1] = input[k].imag();
  }
  fftw_execute(impl_->inv);
  std::copy(impl_->time, impl_->time + n_, output.begin());
}

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::vector<double> convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = next_pow2(out_len);
  RealFft fft(n);
  std::vector<double> pa(n, 0.0), pb(n, 0.0);
  std::copy(a.begin(), a.end(), pa.begin());
  std::copy(b.begin(), b.end(), pb.begin());
  std::vector<std::complex<double>> fa(fft.bins()), fb(fft.bins());
  fft.forward(pa, fa);
  fft.forward(pb, fb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  fft.inverse(fa, pa);
  std::vector<double> out(out_len);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = pa[i] * scale;
  return out;
}

double dominant_frequency(std::span<const double> x, int sample_rate) {
  if (x.size() < 4) throw Error("signal too short for spectral peak");
  const std::size_t n = next_pow2(x.size());
  RealFft fft(n);
  const auto w = hann(x.size());
  std::vector<double> buf(n, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) buf[i] = x[i] * w[i];
  std::vector<std::complex<double>> spec(fft.bins());
  fft.forward(buf, spec);
  std::size_t best = 1;
  for (std::size_t k = 1; k + 1 < spec.size(); ++k) {
    if (std::abs(spec[k]) > std::abs(spec[best])) best = k;
  }
  double offset = 0.0;
  if (best > 0 && best + 1 < spec.size()) {
    const double a = std::log(std::abs(spec[best - 1]) + 1e-300);
    const double b = std::log(std::abs(spec[best]) + 1e-300);
    const double c = std::log(std::abs(spec[best + 1]) + 1e-300);
    const double denom = a - 2.0 * b + c;
    if (denom != 0.0) offset = 0.5 * (a - c) / denom;
  }
  return (static_cast<double>(best) + offset) * sample_rate / static_cast<double>(n);
}

}  // namespace lyricdet::dsp
