#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "test_support.hpp"

namespace kegat::testing {

struct CommandResult {
  int code = -1;
  std::string out;
};

// Runs the CLI with `args` (already shell-quoted), capturing stdout.
inline CommandResult run_cli(const std::string& args, const std::filesystem::path& scratch) {
  const auto out = scratch / "stdout.txt";
  const std::string cmd = std::string("\"") + KEGAT_CLI_PATH + "\" " + args + " > \"" + out.string() +
                          "\" 2> \"" + (scratch / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  CommandResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text(out);
  return r;
}

inline std::string q(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

}  // namespace kegat::testing
