#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace lyricdet::dsp {

/// Real-to-complex / complex-to-real FFT plan of fixed size.
///
/// Not thread-safe for concurrent execute on one instance; create one per thread.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  RealFft(RealFft&&) noexcept;
  RealFft& operator=(RealFft&&) noexcept;

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  /// input.size() == size(); output gets bins() values.
  void forward(std::span<const double> input, std::span<std::complex<double>> output);
  /// Unnormalized inverse: forward then inverse scales by size().
  void inverse(std::span<const std::complex<double>> input, std::span<double> output);

 private:
  struct Impl;
  std::size_t n_;
  std::unique_ptr<Impl> impl_;
};

/// Periodic Hann window (the STFT convention).
std::vector<double> hann(std::size_t n);

/// Smallest power of two >= n.
std::size_t next_pow2(std::size_t n);

/// Linear convolution via FFT; result length a.size() + b.size() - 1.
std::vector<double> convolve(std::span<const double> a, std::span<const double> b);

/// Frequency (Hz) of the largest-magnitude bin of a Hann-windowed spectrum,
/// refined by parabolic interpolation on log magnitude.
double dominant_frequency(std::span<const double> x, int sample_rate);

}  // namespace lyricdet::dsp
