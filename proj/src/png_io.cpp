#include "hsi/png_io.hpp"

#include <cstring>
#include <fstream>

#include <zlib.h>

#include "hsi/errors.hpp"

namespace hsi::png {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
    put_u32(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const auto crc = crc32(crc32(0L, Z_NULL, 0), out.data() + crc_start,
                           static_cast<uInt>(out.size() - crc_start));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_indexed(const std::string& path, int width, int height,
                   const std::vector<std::uint8_t>& indices,
                   const std::vector<Color>& palette) {
    if (width < 1 || height < 1) throw DataError("PNG dimensions must be positive");
    if (palette.empty() || palette.size() > 256)
        throw DataError("indexed PNG palette must hold 1..256 colors");
    if (indices.size() != static_cast<std::size_t>(width) * height)
        throw DataError("PNG index buffer does not match dimensions");
    for (const std::uint8_t idx : indices)
        if (idx >= palette.size()) throw DataError("PNG pixel index outside palette");

    // raw scanlines, filter byte 0 per row
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(height) * (width + 1));
    for (int r = 0; r < height; ++r) {
        raw.push_back(0);
        raw.insert(raw.end(), indices.begin() + static_cast<std::ptrdiff_t>(r) * width,
                   indices.begin() + static_cast<std::ptrdiff_t>(r + 1) * width);
    }

    uLongf compressed_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(compressed_size);
    if (compress2(compressed.data(), &compressed_size, raw.data(),
                  static_cast<uLong>(raw.size()), Z_BEST_COMPRESSION) != Z_OK)
        throw DataError("zlib compression failed while writing " + path);
    compressed.resize(compressed_size);

    std::vector<std::uint8_t> file = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(width));
    put_u32(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(3);  // color type: indexed
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // no interlace
    put_chunk(file, "IHDR", ihdr);

    std::vector<std::uint8_t> plte;
    for (const auto& c : palette) plte.insert(plte.end(), c.begin(), c.end());
    put_chunk(file, "PLTE", plte);

    put_chunk(file, "IDAT", compressed);
    put_chunk(file, "IEND", {});

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write PNG: " + path);
    out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
}

}  // namespace hsi::png
