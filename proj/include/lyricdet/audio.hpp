#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lyricdet {

enum class SampleFormat { kPcm8, kPcm16, kPcm24, kPcm32, kFloat32 };

int bits_per_sample(SampleFormat f);

/// Decoded audio with samples in [-1, 1], interleaved by channel.
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 0;
  int channels = 1;
  SampleFormat format = SampleFormat::kPcm16;

  std::size_t frames() const noexcept {
    return channels > 0 ? samples.size() / static_cast<std::size_t>(channels) : 0;
  }
  double duration_s() const noexcept {
    return sample_rate > 0 ? static_cast<double>(frames()) / sample_rate : 0.0;
  }
};

/// Mono signal at a known sample rate.
struct Signal {
  std::vector<double> samples;
  int sample_rate = 0;
  SampleFormat format = SampleFormat::kPcm16;  // format of the file it came from

  double duration_s() const noexcept {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/// Reads WAV (PCM 8/16/24/32-bit, IEEE float) or FLAC, detected by magic bytes.
/// Throws AudioError on anything undecodable.
AudioBuffer read_audio(const std::filesystem::path& path);
AudioBuffer decode_wav(std::span<const std::uint8_t> bytes);
AudioBuffer decode_flac(std::span<const std::uint8_t> bytes);

/// Writes a mono WAV. Samples are clipped to [-1, 1] before quantization.
void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               int sample_rate, SampleFormat format = SampleFormat::kPcm16);
std::vector<std::uint8_t> encode_wav(std::span<const double> samples, int sample_rate,
                                     SampleFormat format);

/// Channel-mean downmix.
std::vector<double> downmix(const AudioBuffer& audio);

/// Band-limited (windowed-sinc) sample-rate conversion.
std::vector<double> resample(std::span<const double> input, int from_rate, int to_rate);

/// Resamples by an arbitrary ratio (output rate / input rate). The output
/// has `out_len` samples, or round(len * ratio) when out_len is 0.
std::vector<double> resample_ratio(std::span<const double> input, double ratio, std::size_t out_len = 0);

/// Reads, downmixes and, when target_rate > 0, resamples.
Signal load_mono(const std::filesystem::path& path, int target_rate = 0);

double rms(std::span<const double> x);

}  // namespace lyricdet
