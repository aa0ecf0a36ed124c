#include "lyricdet/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "lyricdet/error.hpp"

namespace lyricdet {
namespace {

std::uint32_t read_le(std::span<const std::uint8_t> b, std::size_t pos, int n) {
  std::uint32_t v = 0;
  for (int i = n - 1; i >= 0; --i) v = (v << 8) | b[pos + static_cast<std::size_t>(i)];
  return v;
}

void put_le(std::vector<std::uint8_t>& out, std::uint32_t v, int n) {
  for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open audio file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

int bits_per_sample(SampleFormat f) {
  switch (f) {
    case SampleFormat::kPcm8: return 8;
    case SampleFormat::kPcm16: return 16;
    case SampleFormat::kPcm24: return 24;
    case SampleFormat::kPcm32: return 32;
    case SampleFormat::kFloat32: return 32;
  }
  return 16;
}

AudioBuffer decode_wav(std::span<const std::uint8_t> b) {
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 ||
      std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw AudioError("not a RIFF/WAVE file");
  }
  AudioBuffer out;
  int format_tag = 0;
  int bits = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint32_t size = read_le(b, pos + 4, 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, b.size() - body);
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
      if (avail < 16) throw AudioError("truncated fmt chunk");
      format_tag = static_cast<int>(read_le(b, body, 2));
      out.channels = static_cast<int>(read_le(b, body + 2, 2));
      out.sample_rate = static_cast<int>(read_le(b, body + 4, 4));
      bits = static_cast<int>(read_le(b, body + 14, 2));
      if (format_tag == 0xFFFE && avail >= 26) format_tag = static_cast<int>(read_le(b, body + 24, 2));
      have_fmt = true;
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      if (!have_fmt) throw AudioError("data chunk before fmt chunk");
      if (out.channels <= 0 || out.sample_rate <= 0) throw AudioError("invalid WAV header");
      const int bytes = bits / 8;
      if (format_tag == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) {
        out.format = bits == 8    ? SampleFormat::kPcm8
                     : bits == 16 ? SampleFormat::kPcm16
                     : bits == 24 ? SampleFormat::kPcm24
                                  : SampleFormat::kPcm32;
      } else if (format_tag == 3 && bits == 32) {
        out.format = SampleFormat::kFloat32;
      } else {
        throw AudioError("unsupported WAV encoding (format " + std::to_string(format_tag) + ", " +
                         std::to_string(bits) + " bits)");
      }
      const std::size_t frame_bytes = static_cast<std::size_t>(bytes) * static_cast<std::size_t>(out.channels);
      const std::size_t count = (avail / frame_bytes) * static_cast<std::size_t>(out.channels);
      out.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t p = body + i * static_cast<std::size_t>(bytes);
        double v = 0.0;
        switch (out.format) {
          case SampleFormat::kPcm8: v = (static_cast<int>(b[p]) - 128) / 128.0; break;
          case SampleFormat::kPcm16:
            v = static_cast<std::int16_t>(read_le(b, p, 2)) / 32768.0;
            break;
          case SampleFormat::kPcm24: {
            auto raw = static_cast<std::int32_t>(read_le(b, p, 3) << 8) >> 8;
            v = raw / 8388608.0;
            break;
          }
          case SampleFormat::kPcm32:
            v = static_cast<std::int32_t>(read_le(b, p, 4)) / 2147483648.0;
            break;
          case SampleFormat::kFloat32: {
            const std::uint32_t raw = read_le(b, p, 4);
            float f;
            std::memcpy(&f, &raw, 4);
            v = f;
            break;
          }
        }
        out.samples[i] = v;
      }
      return out;
    }
    pos = body + size + (size & 1u);
  }
  throw AudioError("WAV file has no data chunk");
}

std::vector<std::uint8_t> encode_wav(std::span<const double> samples, int sample_rate,
                                     SampleFormat format) {
  const int bits = bits_per_sample(format);
  const int bytes = bits / 8;
  const auto data_size = static_cast<std::uint32_t>(samples.size() * static_cast<std::size_t>(bytes));
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
  tag("RIFF");
  put_le(out, 36 + data_size, 4);
  tag("WAVE");
  tag("fmt ");
  put_le(out, 16, 4);
  put_le(out, format == SampleFormat::kFloat32 ? 3 : 1, 2);
  put_le(out, 1, 2);
  put_le(out, static_cast<std::uint32_t>(sample_rate), 4);
  put_le(out, static_cast<std::uint32_t>(sample_rate * bytes), 4);
  put_le(out, static_cast<std::uint32_t>(bytes), 2);
  put_le(out, static_cast<std::uint32_t>(bits), 2);
  tag("data");
  put_le(out, data_size, 4);
  for (double x : samples) {
    x = std::isfinite(x) ? std::clamp(x, -1.0, 1.0) : 0.0;
    switch (format) {
      case SampleFormat::kPcm8: {
        const long q = std::clamp(std::lround(x * 128.0), -128L, 127L);
        out.push_back(static_cast<std::uint8_t>(q + 128));
        break;
      }
      case SampleFormat::kPcm16:
        put_le(out, static_cast<std::uint32_t>(std::clamp(std::lround(x * 32768.0), -32768L, 32767L)), 2);
        break;
      case SampleFormat::kPcm24:
        put_le(out, static_cast<std::uint32_t>(std::clamp(std::lround(x * 8388608.0), -8388608L, 8388607L)), 3);
        break;
      case SampleFormat::kPcm32:
        put_le(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(
                        std::clamp(std::llround(x * 2147483648.0), -2147483648LL, 2147483647LL))),
               4);
        break;
      case SampleFormat::kFloat32: {
        const auto f = static_cast<float>(x);
        std::uint32_t raw;
        std::memcpy(&raw, &f, 4);
        put_le(out, raw, 4);
        break;
      }
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples, int sample_rate,
               SampleFormat format) {
  const auto bytes = encode_wav(samples, sample_rate, format);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw AudioError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw AudioError("write failed for " + path.string());
}

AudioBuffer read_audio(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), "RIFF", 4) == 0) return decode_wav(bytes);
    if (bytes.size() >= 4 &&
        (std::memcmp(bytes.data(), "fLaC", 4) == 0 || std::memcmp(bytes.data(), "ID3", 3) == 0)) {
      return decode_flac(bytes);
    }
  } catch (const AudioError& e) {
    throw AudioError(path.string() + ": " + e.what());
  }
  throw AudioError(path.string() + ": unrecognized audio container");
}

std::vector<double> downmix(const AudioBuffer& audio) {
  const std::size_t frames = audio.frames();
  const auto ch = static_cast<std::size_t>(audio.channels);
  if (ch == 1) return audio.samples;
  std::vector<double> mono(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < ch; ++c) acc += audio.samples[i * ch + c];
    mono[i] = acc / static_cast<double>(ch);
  }
  return mono;
}

std::vector<double> resample(std::span<const double> input, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw AudioError("sample rates must be positive");
  if (from_rate == to_rate || input.empty()) return {input.begin(), input.end()};
  return resample_ratio(input, static_cast<double>(to_rate) / from_rate);
}

std::vector<double> resample_ratio(std::span<const double> input, double ratio, std::size_t out_len) {
  if (!(ratio > 0.0) || !std::isfinite(ratio)) throw AudioError("resampling ratio must be positive");
  if (out_len == 0) out_len = static_cast<std::size_t>(std::llround(static_cast<double>(input.size()) * ratio));
  const double cutoff = std::min(1.0, ratio) * 0.97;
  constexpr double kZeroCrossings = 24.0;
  const double half_width = kZeroCrossings / cutoff;
  std::vector<double> out(out_len, 0.0);
  const auto n = static_cast<std::ptrdiff_t>(input.size());
  for (std::size_t j = 0; j < out_len; ++j) {
    const double t = static_cast<double>(j) / ratio;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(n - 1, static_cast<std::ptrdiff_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t i = lo; i <= hi; ++i) {
      const double d = t - static_cast<double>(i);
      const double u = d / half_width;  // in [-1, 1]
      const double window = 0.42 + 0.5 * std::cos(std::numbers::pi * u) + 0.08 * std::cos(2.0 * std::numbers::pi * u);
      acc += input[static_cast<std::size_t>(i)] * cutoff * sinc(cutoff * d) * window;
    }
    out[j] = acc;
  }
  return out;
}

Signal load_mono(const std::filesystem::path& path, int target_rate) {
  const AudioBuffer audio = read_audio(path);
  Signal s;
  s.format = audio.format;
  s.sample_rate = audio.sample_rate;
  s.samples = downmix(audio);
  if (target_rate > 0 && target_rate != audio.sample_rate) {
    s.samples = resample(s.samples, audio.sample_rate, target_rate);
    s.sample_rate = target_rate;
  }
  return s;
}

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

}  // namespace lyricdet
