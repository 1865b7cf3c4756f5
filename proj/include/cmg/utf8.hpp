#pragma once

#include <string>
#include <string_view>

namespace cmg {

// Replaces every byte that does not start a well-formed UTF-8 sequence
// (overlongs, surrogates and code points above U+10FFFF included) with U+FFFD.
std::string sanitize_utf8(std::string_view bytes);

bool is_valid_utf8(std::string_view bytes);

}  // namespace cmg
