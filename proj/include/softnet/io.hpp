#pragma once

#include <filesystem>
#include <string>

namespace softnet {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Write to `<path>.tmp`, then rename over `path`. Parent directories are
/// created as needed.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace softnet
