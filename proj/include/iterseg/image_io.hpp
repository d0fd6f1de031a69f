#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace iterseg {

/// Single-channel raster with 8- or 16-bit samples, row-major.
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    int bit_depth = 8;
    std::vector<std::uint16_t> pixels;

    std::uint16_t max_value() const { return bit_depth == 16 ? 65535 : 255; }
};

struct ReadOptions {
    /// Convert RGB(A) input to luma (0.299 R + 0.587 G + 0.114 B) instead of rejecting it.
    bool convert_color = false;
};

/// Reads PNG or binary/ASCII PGM, chosen by file signature. Colour input is
/// rejected with DataError unless options.convert_color is set.
GrayImage read_image(const std::filesystem::path& path, const ReadOptions& options = {});

void write_png(const std::filesystem::path& path, const GrayImage& image);

/// Binary (P5) PGM; 16-bit samples are written big-endian.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

}  // namespace iterseg
