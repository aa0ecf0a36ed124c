// Native FLAC stream decoder: STREAMINFO, all subframe types (constant,
// verbatim, fixed, LPC), Rice/Rice2 residuals with escape codes, wasted bits
// and the three stereo decorrelation modes. Frame CRCs are verified.

#include <array>
#include <cstring>

#include "lyricdet/audio.hpp"
#include "lyricdet/error.hpp"

namespace lyricdet {
namespace {

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t byte_pos() const noexcept { return bit_ / 8; }
  bool at_end() const noexcept { return bit_ >= data_.size() * 8; }
  void seek_byte(std::size_t byte) { bit_ = byte * 8; }

  std::uint32_t bit() {
    if (bit_ >= data_.size() * 8) throw AudioError("FLAC stream truncated");
    const std::uint32_t v = (data_[bit_ / 8] >> (7 - bit_ % 8)) & 1u;
    ++bit_;
    return v;
  }

  std::uint64_t bits(int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 1) | bit();
    return v;
  }

  std::int64_t signed_bits(int n) {
    if (n == 0) return 0;
    const std::uint64_t v = bits(n);
    const std::uint64_t sign = 1ULL << (n - 1);
    return static_cast<std::int64_t>(v ^ sign) - static_cast<std::int64_t>(sign);
  }

  std::uint32_t unary() {
    std::uint32_t zeros = 0;
    while (bit() == 0) {
      if (++zeros > (1u << 26)) throw AudioError("FLAC unary code runaway");
    }
    return zeros;
  }

  std::int64_t rice(int param) {
    const std::uint64_t q = unary();
    const std::uint64_t u = (q << param) | bits(param);
    return (u & 1u) ? -static_cast<std::int64_t>(u >> 1) - 1 : static_cast<std::int64_t>(u >> 1);
  }

  void align() { bit_ = (bit_ + 7) & ~std::size_t{7}; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t bit_ = 0;
};

std::uint8_t crc8(std::span<const std::uint8_t> data) {
  std::uint8_t crc = 0;
  for (std::uint8_t byte : data) {
    crc ^= byte;
    for (int i = 0; i < 8; ++i) crc = static_cast<std::uint8_t>((crc & 0x80) ? (crc << 1) ^ 0x07 : crc << 1);
  }
  return crc;
}

std::uint16_t crc16(std::span<const std::uint8_t> data) {
  std::uint16_t crc = 0;
  for (std::uint8_t byte : data) {
    crc ^= static_cast<std::uint16_t>(byte << 8);
    for (int i = 0; i < 8; ++i) {
      crc = static_cast<std::uint16_t>((crc & 0x8000) ? (crc << 1) ^ 0x8005 : crc << 1);
    }
  }
  return crc;
}

struct StreamInfo {
  int sample_rate = 0;
  int channels = 0;
  int bps = 0;
  std::uint64_t total_samples = 0;
};

void decode_residual(BitReader& br, int block_size, int order, std::vector<std::int64_t>& out) {
  const auto method = br.bits(2);
  if (method > 1) throw AudioError("reserved FLAC residual coding method");
  const int param_bits = method == 0 ? 4 : 5;
  const std::uint64_t escape = method == 0 ? 15 : 31;
  const int partition_order = static_cast<int>(br.bits(4));
  const int partitions = 1 << partition_order;
  if ((block_size >> partition_order) < order) throw AudioError("FLAC partition smaller than order");
  std::size_t idx = static_cast<std::size_t>(order);
  for (int p = 0; p < partitions; ++p) {
    const int count = (block_size >> partition_order) - (p == 0 ? order : 0);
    const std::uint64_t param = br.bits(param_bits);
    if (param == escape) {
      const int raw_bits = static_cast<int>(br.bits(5));
      for (int i = 0; i < count; ++i) out[idx++] = br.signed_bits(raw_bits);
    } else {
      for (int i = 0; i < count; ++i) out[idx++] = br.rice(static_cast<int>(param));
    }
  }
}

void decode_subframe(BitReader& br, int block_size, int bps, std::vector<std::int64_t>& out) {
  if (br.bit() != 0) throw AudioError("FLAC subframe padding bit set");
  const auto type = static_cast<int>(br.bits(6));
  int wasted = 0;
  if (br.bit()) wasted = static_cast<int>(br.unary()) + 1;
  bps -= wasted;
  out.assign(static_cast<std::size_t>(block_size), 0);

  if (type == 0) {
    const auto v = br.signed_bits(bps);
    std::fill(out.begin(), out.end(), v);
  } else if (type == 1) {
    for (auto& v : out) v = br.signed_bits(bps);
  } else if (type >= 8 && type <= 12) {
    const int order = type & 7;
    for (int i = 0; i < order; ++i) out[static_cast<std::size_t>(i)] = br.signed_bits(bps);
    decode_residual(br, block_size, order, out);
    static constexpr std::array<std::array<int, 4>, 5> kCoefs = {
        {{0, 0, 0, 0}, {1, 0, 0, 0}, {2, -1, 0, 0}, {3, -3, 1, 0}, {4, -6, 4, -1}}};
    for (int i = order; i < block_size; ++i) {
      std::int64_t pred = 0;
      for (int j = 0; j < order; ++j) pred += kCoefs[static_cast<std::size_t>(order)][static_cast<std::size_t>(j)] * out[static_cast<std::size_t>(i - 1 - j)];
      out[static_cast<std::size_t>(i)] += pred;
    }
  } else if (type >= 32) {
    const int order = (type & 31) + 1;
    for (int i = 0; i < order; ++i) out[static_cast<std::size_t>(i)] = br.signed_bits(bps);
    const int precision = static_cast<int>(br.bits(4)) + 1;
    if (precision == 16) throw AudioError("invalid FLAC LPC precision");
    const auto shift = static_cast<int>(br.signed_bits(5));
    if (shift < 0) throw AudioError("negative FLAC LPC shift");
    std::vector<std::int64_t> coefs(static_cast<std::size_t>(order));
    for (auto& c : coefs) c = br.signed_bits(precision);
    decode_residual(br, block_size, order, out);
    for (int i = order; i < block_size; ++i) {
      std::int64_t pred = 0;
      for (int j = 0; j < order; ++j) pred += coefs[static_cast<std::size_t>(j)] * out[static_cast<std::size_t>(i - 1 - j)];
      out[static_cast<std::size_t>(i)] += pred >> shift;
    }
  } else {
    throw AudioError("reserved FLAC subframe type " + std::to_string(type));
  }
  if (wasted > 0) {
    for (auto& v : out) v *= (std::int64_t{1} << wasted);
  }
}

std::uint64_t read_utf8_number(BitReader& br) {
  std::uint64_t first = br.bits(8);
  if ((first & 0x80) == 0) return first;
  int extra = 0;
  std::uint64_t mask = 0x40;
  while (first & mask) {
    ++extra;
    mask >>= 1;
  }
  if (extra == 0 || extra > 6) throw AudioError("invalid FLAC frame number coding");
  std::uint64_t v = first & (mask - 1);
  for (int i = 0; i < extra; ++i) {
    const auto cont = br.bits(8);
    if ((cont & 0xC0) != 0x80) throw AudioError("invalid FLAC frame number coding");
    v = (v << 6) | (cont & 0x3F);
  }
  return v;
}

}  // namespace

AudioBuffer decode_flac(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  if (bytes.size() >= 10 && std::memcmp(bytes.data(), "ID3", 3) == 0) {
    const std::size_t size = (std::size_t{bytes[6]} & 0x7F) << 21 | (std::size_t{bytes[7]} & 0x7F) << 14 |
                             (std::size_t{bytes[8]} & 0x7F) << 7 | (std::size_t{bytes[9]} & 0x7F);
    pos = 10 + size;
  }
  if (bytes.size() < pos + 4 || std::memcmp(bytes.data() + pos, "fLaC", 4) != 0) {
    throw AudioError("missing fLaC marker");
  }
  pos += 4;

  StreamInfo info;
  bool have_info = false;
  bool last = false;
  while (!last) {
    if (pos + 4 > bytes.size()) throw AudioError("truncated FLAC metadata");
    last = (bytes[pos] & 0x80) != 0;
    const int type = bytes[pos] & 0x7F;
    const std::size_t len = std::size_t{bytes[pos + 1]} << 16 | std::size_t{bytes[pos + 2]} << 8 | bytes[pos + 3];
    pos += 4;
    if (pos + len > bytes.size()) throw AudioError("truncated FLAC metadata block");
    if (type == 0) {
      if (len < 34) throw AudioError("short STREAMINFO");
      BitReader br(bytes.subspan(pos, len));
      br.bits(16 + 16 + 24 + 24);
      info.sample_rate = static_cast<int>(br.bits(20));
      info.channels = static_cast<int>(br.bits(3)) + 1;
      info.bps = static_cast<int>(br.bits(5)) + 1;
      info.total_samples = br.bits(36);
      have_info = true;
    }
    pos += len;
  }
  if (!have_info) throw AudioError("FLAC stream has no STREAMINFO");

  AudioBuffer out;
  out.sample_rate = info.sample_rate;
  out.channels = info.channels;
  out.format = info.bps <= 8    ? SampleFormat::kPcm8
               : info.bps <= 16 ? SampleFormat::kPcm16
               : info.bps <= 24 ? SampleFormat::kPcm24
                                : SampleFormat::kPcm32;
  if (info.total_samples > 0) out.samples.reserve(info.total_samples * static_cast<std::size_t>(info.channels));
  const double scale = 1.0 / static_cast<double>(std::int64_t{1} << (info.bps - 1));

  BitReader br(bytes);
  br.seek_byte(pos);
  std::vector<std::vector<std::int64_t>> chans(8);
  while (br.byte_pos() + 2 <= bytes.size()) {
    const std::size_t frame_start = br.byte_pos();
    if (br.bits(14) != 0x3FFE) throw AudioError("lost FLAC frame sync");
    br.bits(2);  // reserved + blocking strategy
    const auto bs_code = static_cast<int>(br.bits(4));
    const auto sr_code = static_cast<int>(br.bits(4));
    const auto ch_code = static_cast<int>(br.bits(4));
    const auto ss_code = static_cast<int>(br.bits(3));
    br.bits(1);
    read_utf8_number(br);

    int block_size = 0;
    if (bs_code == 1) block_size = 192;
    else if (bs_code >= 2 && bs_code <= 5) block_size = 576 << (bs_code - 2);
    else if (bs_code == 6) block_size = static_cast<int>(br.bits(8)) + 1;
    else if (bs_code == 7) block_size = static_cast<int>(br.bits(16)) + 1;
    else if (bs_code >= 8) block_size = 256 << (bs_code - 8);
    else throw AudioError("reserved FLAC block size");

    if (sr_code == 12) br.bits(8);
    else if (sr_code == 13 || sr_code == 14) br.bits(16);
    else if (sr_code == 15) throw AudioError("invalid FLAC sample rate code");

    int bps = info.bps;
    static constexpr std::array<int, 8> kSizes = {0, 8, 12, 0, 16, 20, 24, 32};
    if (ss_code != 0) {
      bps = kSizes[static_cast<std::size_t>(ss_code)];
      if (bps == 0) throw AudioError("reserved FLAC sample size");
    }

    const std::size_t header_end = br.byte_pos();
    const auto expected_crc8 = static_cast<std::uint8_t>(br.bits(8));
    if (crc8(bytes.subspan(frame_start, header_end - frame_start)) != expected_crc8) {
      throw AudioError("FLAC frame header CRC mismatch");
    }

    int nch = 0;
    if (ch_code <= 7) nch = ch_code + 1;
    else if (ch_code <= 10) nch = 2;
    else throw AudioError("reserved FLAC channel assignment");
    if (nch != info.channels) throw AudioError("FLAC channel count changes mid-stream");

    for (int c = 0; c < nch; ++c) {
      int sub_bps = bps;
      if ((ch_code == 8 && c == 1) || (ch_code == 9 && c == 0) || (ch_code == 10 && c == 1)) ++sub_bps;
      decode_subframe(br, block_size, sub_bps, chans[static_cast<std::size_t>(c)]);
    }
    br.align();
    const std::size_t body_end = br.byte_pos();
    const auto expected_crc16 = static_cast<std::uint16_t>(br.bits(16));
    if (crc16(bytes.subspan(frame_start, body_end - frame_start)) != expected_crc16) {
      throw AudioError("FLAC frame CRC mismatch");
    }

    auto& a = chans[0];
    auto& b = chans[1];
    for (int i = 0; i < block_size; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (ch_code == 8) {
        b[k] = a[k] - b[k];
      } else if (ch_code == 9) {
        a[k] = a[k] + b[k];
      } else if (ch_code == 10) {
        const std::int64_t side = b[k];
        const std::int64_t mid = (a[k] * 2) | (side & 1);
        a[k] = (mid + side) >> 1;
        b[k] = (mid - side) >> 1;
      }
      for (int c = 0; c < nch; ++c) {
        out.samples.push_back(static_cast<double>(chans[static_cast<std::size_t>(c)][k]) * scale);
      }
    }
    if (info.total_samples > 0 && out.frames() >= info.total_samples) break;
  }
  if (info.total_samples > 0 && out.frames() > info.total_samples) {
    out.samples.resize(info.total_samples * static_cast<std::size_t>(info.channels));
  }
  return out;
}

}  // namespace lyricdet
