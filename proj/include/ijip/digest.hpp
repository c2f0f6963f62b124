#pragma once

#include <string>
#include <string_view>

namespace ijip {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::string_view data);

} // namespace ijip
