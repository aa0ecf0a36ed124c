#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lyricdet {

/// Checksummed binary model container shared by every serialized model:
///
///   magic[8] | u32 version | u32 header_len | header (JSON text)
///   | u64 n | n x float32 | u32 crc32(all preceding bytes)
///
/// All integers and floats are little-endian.
struct Container {
  std::uint32_t version = 0;
  std::string header;
  std::vector<float> values;
};

std::string seal_container(std::string_view magic, const Container& c);

/// Checks magic, then version (> max_version is rejected before anything
/// else is interpreted), then the checksum. Throws FormatError.
Container open_container(std::string_view bytes, std::string_view magic, std::uint32_t max_version);

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::string_view bytes);

}  // namespace lyricdet
