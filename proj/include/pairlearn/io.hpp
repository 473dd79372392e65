#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace pairlearn::io {

/// Writes via a sibling temp file and rename, so readers never see a torn file.
void write_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace pairlearn::io
