#pragma once

#include <string>

namespace spoi {

/// Writes `contents` to `path` via a temp file plus rename, so a killed
/// process never leaves a truncated file that parses.
void atomic_write_file(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

}  // namespace spoi
