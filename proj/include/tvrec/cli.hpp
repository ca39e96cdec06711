#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tvrec::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kDataError = 2,
    kNumericFailure = 3,
};

/// Entry point for the `tvrec` tool: train, eval, export-filters, bench, synth.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
std::string file_checksum(const std::string& path);

} // namespace tvrec::cli
