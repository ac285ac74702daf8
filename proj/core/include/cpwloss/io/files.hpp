#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cpwloss::io {

/// Writes to a temporary sibling and renames it over `path`, so readers see
/// either the old file or the complete new one. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Regular files directly inside `dir` with one of `extensions` (lower case,
/// with dot), sorted lexicographically by file name.
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                              const std::vector<std::string>& extensions);

}  // namespace cpwloss::io
