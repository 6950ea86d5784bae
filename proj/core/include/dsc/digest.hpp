#pragma once

#include <string>
#include <string_view>

namespace dsc {

// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view data);

// Digest of a file's contents; throws Error if the file cannot be read.
std::string sha256_file(const std::string& path);

}  // namespace dsc
