#pragma once

#include <string>
#include <string_view>

namespace tln {

// SHA-256 of a byte string, lowercase hex. Used for config content hashes
// recorded in run manifests.
std::string sha256_hex(std::string_view bytes);

}  // namespace tln
