#pragma once

#include <string>
#include <string_view>

namespace lyricdet {

struct ProcessResult {
  int exit_code = 0;
  std::string output;  // captured stdout
};

/// Runs `command` through /bin/sh, feeding `stdin_data` (if any) and
/// capturing stdout. stderr passes through.
ProcessResult run_command(const std::string& command, std::string_view stdin_data = {});

/// Single-quotes `arg` for /bin/sh.
std::string shell_quote(std::string_view arg);

}  // namespace lyricdet
