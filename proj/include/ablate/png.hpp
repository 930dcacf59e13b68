#pragma once

#include <cstdint>
#include <string>

namespace ablate {

// Minimal 8-bit RGB PNG writer (single IDAT, zlib level 6, filter 0). Output
// bytes are a pure function of the pixel data, so golden-image tests can
// compare files byte-for-byte. rgb is row-major, top row first, 3 bytes/pixel.
void writePng(const std::string& path, int width, int height, const std::uint8_t* rgb);

} // namespace ablate
