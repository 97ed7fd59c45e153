#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace evasion::cli {

enum ExitCode { kOk = 0, kRuntimeError = 1, kUsageError = 2 };

/// Runs one command line (without the program name), e.g.
/// {"train", "--config", "run.ini", "--steps", "50"}. Never throws.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace evasion::cli
