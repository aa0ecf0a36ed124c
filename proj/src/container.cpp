#include "lyricdet/container.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lyricdet/error.hpp"

namespace lyricdet {
namespace {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(T)) throw FormatError("model file truncated");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::uint32_t crc(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace

std::string seal_container(std::string_view magic, const Container& c) {
  std::string out(magic);
  out.resize(8, '\0');
  put<std::uint32_t>(out, c.version);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.header.size()));
  out += c.header;
  put<std::uint64_t>(out, c.values.size());
  const auto* raw = reinterpret_cast<const char*>(c.values.data());
  out.append(raw, c.values.size() * sizeof(float));
  put<std::uint32_t>(out, crc(out));
  return out;
}

Container open_container(std::string_view bytes, std::string_view magic, std::uint32_t max_version) {
  std::string expected(magic);
  expected.resize(8, '\0');
  if (bytes.size() < 8 || bytes.substr(0, 8) != expected) {
    throw FormatError("not a " + std::string(magic) + " file");
  }
  std::size_t pos = 8;
  Container c;
  c.version = get<std::uint32_t>(bytes, pos);
  if (c.version > max_version) {
    throw FormatError("schema_version " + std::to_string(c.version) + " is newer than supported (" +
                      std::to_string(max_version) + ")");
  }
  if (bytes.size() < pos + 4) throw FormatError("model file truncated");
  const std::uint32_t stored = [&] {
    std::size_t p = bytes.size() - 4;
    return get<std::uint32_t>(bytes, p);
  }();
  if (crc(bytes.substr(0, bytes.size() - 4)) != stored) throw FormatError("checksum mismatch: model file is corrupted");
  const auto body = bytes.substr(0, bytes.size() - 4);
  const auto header_len = get<std::uint32_t>(body, pos);
  if (body.size() - pos < header_len) throw FormatError("model file truncated");
  c.header.assign(body.substr(pos, header_len));
  pos += header_len;
  const auto n = get<std::uint64_t>(body, pos);
  if ((body.size() - pos) / sizeof(float) != n || (body.size() - pos) % sizeof(float) != 0) {
    throw FormatError("parameter block size mismatch");
  }
  c.values.resize(n);
  std::memcpy(c.values.data(), body.data() + pos, n * sizeof(float));
  return c;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error("cannot write " + path);
}

}  // namespace lyricdet
