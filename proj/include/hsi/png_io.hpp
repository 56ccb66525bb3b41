#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace hsi::png {

using Color = std::array<std::uint8_t, 3>;

// Writes an 8-bit indexed-color PNG. `indices` is row-major height x width,
// each entry a palette index. Palette size is capped at 256 by the format.
void write_indexed(const std::string& path, int width, int height,
                   const std::vector<std::uint8_t>& indices,
                   const std::vector<Color>& palette);

}  // namespace hsi::png
