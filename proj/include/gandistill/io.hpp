#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace gandistill {

std::uint32_t crc32_of(std::string_view bytes);

/// Writes `bytes` to a temporary sibling, then renames it over `path`. The
/// temporary is removed if anything fails. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Throws IoError when the file cannot be opened or read.
std::string read_file(const std::filesystem::path& path);

}  // namespace gandistill
