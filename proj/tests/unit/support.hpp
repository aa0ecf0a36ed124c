#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace lyricdet::test {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("lyricdet-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> tone(double hz, int sample_rate, double seconds, double amp = 0.5) {
  std::vector<double> x(static_cast<std::size_t>(std::llround(seconds * sample_rate)));
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / sample_rate);
  }
  return x;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Manifest line with the common defaults filled in.
inline std::string track_line(const std::string& id, const std::string& source, const std::string& split,
                              const std::string& extra = "") {
  std::string s = "{\"track_id\":\"" + id + "\",\"language\":\"en\",\"genre\":\"pop\",\"source\":\"" + source +
                  "\",\"lyrics_generator\":\"" + (source == "ai" ? "mistral" : "none") +
                  "\",\"audio_generator\":\"" + (source == "ai" ? "suno" : "none") + "\",\"split\":\"" + split + "\"";
  if (!extra.empty()) s += "," + extra;
  return s + "}";
}

// Minimal FLAC writer for decoder tests: fixed-blocksize frames, verbatim or
// fixed-predictor subframes with order-0 Rice partitions.
class FlacWriter {
 public:
  enum class Subframe { kVerbatim, kFixed2 };
  enum class Stereo { kIndependent, kMidSide };

  FlacWriter(int sample_rate, int channels, int bps) : sample_rate_(sample_rate), channels_(channels), bps_(bps) {}

  std::vector<std::uint8_t> encode(const std::vector<std::int32_t>& interleaved, int block_size, Subframe sub,
                                   Stereo stereo = Stereo::kIndependent) {
    out_.clear();
    const std::size_t frames = interleaved.size() / static_cast<std::size_t>(channels_);
    for (char c : std::string("fLaC")) out_.push_back(static_cast<std::uint8_t>(c));
    out_.push_back(0x80);  // last block, STREAMINFO
    put_be(34, 3);
    put_be(static_cast<std::uint64_t>(block_size), 2);
    put_be(static_cast<std::uint64_t>(block_size), 2);
    put_be(0, 3);
    put_be(0, 3);
    BitBuf info;
    info.put(static_cast<std::uint64_t>(sample_rate_), 20);
    info.put(static_cast<std::uint64_t>(channels_ - 1), 3);
    info.put(static_cast<std::uint64_t>(bps_ - 1), 5);
    info.put(frames, 36);
    for (auto b : info.bytes) out_.push_back(b);
    for (int i = 0; i < 16; ++i) out_.push_back(0);  // MD5 unset

    std::uint32_t frame_no = 0;
    for (std::size_t start = 0; start < frames; start += static_cast<std::size_t>(block_size), ++frame_no) {
      const auto n = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(block_size), frames - start));
      BitBuf f;
      f.put(0x3FFE, 14);
      f.put(0, 2);
      f.put(7, 4);  // 16-bit blocksize-1 follows
      f.put(0, 4);  // rate from STREAMINFO
      const bool ms = stereo == Stereo::kMidSide && channels_ == 2;
      f.put(ms ? 10u : static_cast<std::uint64_t>(channels_ - 1), 4);
      f.put(0, 3);
      f.put(0, 1);
      if (frame_no >= 128) throw std::runtime_error("test FLAC writer supports < 128 frames");
      f.put(frame_no, 8);
      f.put(static_cast<std::uint64_t>(n - 1), 16);
      f.put(crc8(f.bytes), 8);
      std::vector<std::vector<std::int64_t>> ch(static_cast<std::size_t>(channels_));
      for (int i = 0; i < n; ++i) {
        for (int c = 0; c < channels_; ++c) {
          ch[static_cast<std::size_t>(c)].push_back(
              interleaved[(start + static_cast<std::size_t>(i)) * static_cast<std::size_t>(channels_) +
                          static_cast<std::size_t>(c)]);
        }
      }
      if (ms) {
        for (int i = 0; i < n; ++i) {
          const auto l = ch[0][static_cast<std::size_t>(i)], r = ch[1][static_cast<std::size_t>(i)];
          ch[0][static_cast<std::size_t>(i)] = (l + r) >> 1;
          ch[1][static_cast<std::size_t>(i)] = l - r;
        }
      }
      for (int c = 0; c < channels_; ++c) {
        put_subframe(f, ch[static_cast<std::size_t>(c)], bps_ + (ms && c == 1 ? 1 : 0), sub);
      }
      f.align();
      const auto crc = crc16(f.bytes);
      f.put(crc, 16);
      for (auto b : f.bytes) out_.push_back(b);
    }
    return out_;
  }

 private:
  struct BitBuf {
    std::vector<std::uint8_t> bytes;
    int used = 8;
    void put(std::uint64_t v, int bits) {
      for (int i = bits - 1; i >= 0; --i) {
        if (used == 8) {
          bytes.push_back(0);
          used = 0;
        }
        bytes.back() = static_cast<std::uint8_t>(bytes.back() | (((v >> i) & 1u) << (7 - used)));
        ++used;
      }
    }
    void put_signed(std::int64_t v, int bits) { put(static_cast<std::uint64_t>(v) & ((1ull << bits) - 1), bits); }
    void align() { used = 8; }
  };

  static std::uint8_t crc8(const std::vector<std::uint8_t>& d) {
    std::uint8_t crc = 0;
    for (auto byte : d) {
      crc ^= byte;
      for (int i = 0; i < 8; ++i) crc = static_cast<std::uint8_t>((crc & 0x80) ? (crc << 1) ^ 0x07 : crc << 1);
    }
    return crc;
  }
  static std::uint16_t crc16(const std::vector<std::uint8_t>& d) {
    std::uint16_t crc = 0;
    for (auto byte : d) {
      crc ^= static_cast<std::uint16_t>(byte << 8);
      for (int i = 0; i < 8; ++i) {
        crc = static_cast<std::uint16_t>((crc & 0x8000) ? (crc << 1) ^ 0x8005 : crc << 1);
      }
    }
    return crc;
  }

  void put_be(std::uint64_t v, int bytes) {
    for (int i = bytes - 1; i >= 0; --i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  static void put_subframe(BitBuf& f, const std::vector<std::int64_t>& x, int bps, Subframe sub) {
    f.put(0, 1);
    if (sub == Subframe::kVerbatim || x.size() < 3) {
      f.put(1, 6);
      f.put(0, 1);
      for (auto v : x) f.put_signed(v, bps);
      return;
    }
    f.put(8 + 2, 6);
    f.put(0, 1);
    f.put_signed(x[0], bps);
    f.put_signed(x[1], bps);
    std::vector<std::uint64_t> folded;
    for (std::size_t i = 2; i < x.size(); ++i) {
      const std::int64_t r = x[i] - (2 * x[i - 1] - x[i - 2]);
      folded.push_back(r >= 0 ? static_cast<std::uint64_t>(r) * 2 : static_cast<std::uint64_t>(-r) * 2 - 1);
    }
    double mean = 0.0;
    for (auto u : folded) mean += static_cast<double>(u);
    mean /= static_cast<double>(folded.size());
    int k = 0;
    while (k < 14 && static_cast<double>(1ull << (k + 1)) < mean + 1.0) ++k;
    f.put(0, 2);  // Rice, 4-bit parameter
    f.put(0, 4);  // one partition
    f.put(static_cast<std::uint64_t>(k), 4);
    for (auto u : folded) {
      for (std::uint64_t q = u >> k; q > 0; --q) f.put(0, 1);
      f.put(1, 1);
      if (k > 0) f.put(u & ((1ull << k) - 1), k);
    }
  }

  int sample_rate_;
  int channels_;
  int bps_;
  std::vector<std::uint8_t> out_;
};

}  // namespace lyricdet::test
