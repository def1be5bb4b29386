#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "advrep/error.hpp"

namespace advrep::utf8 {

// Splits UTF-8 text into code points, each kept as its encoded byte sequence.
// Character offsets throughout the library index into this sequence.
inline std::vector<std::string> split(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    else if (lead >= 0x80) throw Error(errc::kValidation, "invalid UTF-8 continuation byte");
    if (i + len > text.size()) throw Error(errc::kValidation, "truncated UTF-8 sequence");
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80)
        throw Error(errc::kValidation, "invalid UTF-8 sequence");
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

inline std::size_t length(std::string_view text) { return split(text).size(); }

// Maps a byte offset that lies on a code point boundary to a character offset.
inline std::size_t char_offset(std::string_view text, std::size_t byte_offset) {
  std::size_t chars = 0;
  for (std::size_t i = 0; i < byte_offset && i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) ++chars;
  }
  return chars;
}

}  // namespace advrep::utf8
