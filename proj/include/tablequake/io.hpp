#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace tablequake::io {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over the target, so readers
// never observe a partially written output.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

void ensure_directory(const std::filesystem::path& dir);

// Shortest text that reads back to the same double ("1", "0.5", "-0.32").
std::string format_number(double v);

}  // namespace tablequake::io
