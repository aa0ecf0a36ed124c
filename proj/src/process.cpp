#include "lyricdet/process.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lyricdet/error.hpp"

namespace lyricdet {

std::string shell_quote(std::string_view arg) {
  std::string out = "'";
  for (char c : arg) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += '\'';
  return out;
}

ProcessResult run_command(const std::string& command, std::string_view stdin_data) {
  std::string full = command;
  std::filesystem::path input_file;
  if (!stdin_data.empty()) {
    static int counter = 0;
    input_file = std::filesystem::temp_directory_path() /
                 ("lyricdet-stdin-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::ofstream(input_file, std::ios::binary).write(stdin_data.data(),
                                                      static_cast<std::streamsize>(stdin_data.size()));
    full += " < " + shell_quote(input_file.string());
  }
  FILE* pipe = ::popen(full.c_str(), "r");
  if (!pipe) throw BackendError("cannot spawn: " + command);
  ProcessResult result;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) result.output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  if (!input_file.empty()) std::filesystem::remove(input_file);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

}  // namespace lyricdet
