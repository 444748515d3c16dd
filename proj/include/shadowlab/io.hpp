#pragma once

#include <string>

namespace shadowlab::io {

// Writes to a sibling temporary file and renames it over the target.
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);
bool file_exists(const std::string& path);

}  // namespace shadowlab::io
