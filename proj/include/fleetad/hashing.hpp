#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace fleetad {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& file);

// Hash of every regular file under `root`: relative paths in sorted order,
// each followed by its content hash.
std::string directory_fingerprint(const std::filesystem::path& root);

}  // namespace fleetad
