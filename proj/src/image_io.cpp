#include "iterseg/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include "iterseg/error.hpp"

namespace iterseg {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode) {
    File f(std::fopen(path.c_str(), mode));
    if (!f) throw DataError("cannot open '" + path.string() + "'");
    return f;
}

std::uint16_t luma(double r, double g, double b) {
    return static_cast<std::uint16_t>(std::lround(0.299 * r + 0.587 * g + 0.114 * b));
}

GrayImage read_png(const std::filesystem::path& path, const ReadOptions& options) {
    File file = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng: cannot create read struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("libpng: cannot create info struct");
    }
    GrayImage image;
    std::string failure;
    bool color = false;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("'" + path.string() + "': corrupt PNG");
    }
    png_init_io(png, file.get());
    png_read_png(png, info, PNG_TRANSFORM_PACKING | PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_SWAP_ENDIAN, nullptr);
    const auto width = png_get_image_width(png, info);
    const auto height = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int channels = png_get_channels(png, info);
    const int color_type = png_get_color_type(png, info);
    color = (color_type & PNG_COLOR_MASK_COLOR) != 0;
    if (color && !options.convert_color) {
        failure = "'" + path.string() + "': non-grayscale PNG (" + std::to_string(channels) + " channels)";
    } else {
        image.width = width;
        image.height = height;
        image.bit_depth = depth == 16 ? 16 : 8;
        image.pixels.resize(static_cast<std::size_t>(width) * height);
        png_bytepp rows = png_get_rows(png, info);
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                auto sample = [&](int c) -> std::uint16_t {
                    const std::size_t idx = x * channels + c;
                    if (depth == 16) {
                        const auto* row = reinterpret_cast<const std::uint16_t*>(rows[y]);
                        return row[idx];
                    }
                    return rows[y][idx];
                };
                image.pixels[y * width + x] = color ? luma(sample(0), sample(1), sample(2)) : sample(0);
            }
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (!failure.empty()) throw DataError(failure);
    return image;
}

// Reads a whitespace-separated header token, skipping '#' comments.
std::string pnm_token(const std::vector<unsigned char>& bytes, std::size_t& pos) {
    for (;;) {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        if (pos < bytes.size() && bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    std::string token;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) token += static_cast<char>(bytes[pos++]);
    return token;
}

GrayImage read_pnm(const std::filesystem::path& path, const std::vector<unsigned char>& bytes,
                   const ReadOptions& options) {
    const std::string where = "'" + path.string() + "'";
    std::size_t pos = 0;
    const std::string magic = pnm_token(bytes, pos);
    const bool ascii = magic == "P2" || magic == "P3";
    const bool color = magic == "P3" || magic == "P6";
    if (magic != "P2" && magic != "P5" && !color) throw DataError(where + ": unsupported PNM type '" + magic + "'");
    if (color && !options.convert_color) throw DataError(where + ": non-grayscale PNM (" + magic + ")");
    auto number = [&](const char* what) {
        const std::string tok = pnm_token(bytes, pos);
        try {
            std::size_t used = 0;
            const long v = std::stol(tok, &used);
            if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
            return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
            throw DataError(where + ": bad " + std::string(what) + " '" + tok + "'");
        }
    };
    GrayImage image;
    image.width = number("width");
    image.height = number("height");
    const std::size_t maxval = number("maxval");
    if (maxval > 65535) throw DataError(where + ": maxval " + std::to_string(maxval) + " out of range");
    image.bit_depth = maxval > 255 ? 16 : 8;
    const std::size_t channels = color ? 3 : 1;
    const std::size_t count = image.width * image.height * channels;
    std::vector<std::uint16_t> raw(count);
    if (ascii) {
        for (auto& v : raw) {
            const std::string tok = pnm_token(bytes, pos);
            if (tok.empty()) throw DataError(where + ": truncated pixel data");
            v = static_cast<std::uint16_t>(std::stoul(tok));
        }
    } else {
        ++pos;  // single whitespace after maxval
        const std::size_t bytes_per = maxval > 255 ? 2 : 1;
        if (bytes.size() < pos + count * bytes_per) throw DataError(where + ": truncated pixel data");
        for (std::size_t i = 0; i < count; ++i) {
            raw[i] = bytes_per == 2 ? static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1])
                                    : bytes[pos + i];
        }
    }
    // Rescale to the full range of the chosen bit depth.
    const double full = image.bit_depth == 16 ? 65535.0 : 255.0;
    image.pixels.resize(image.width * image.height);
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        double v = color ? 0.299 * raw[3 * i] + 0.587 * raw[3 * i + 1] + 0.114 * raw[3 * i + 2] : raw[i];
        if (v > static_cast<double>(maxval)) throw DataError(where + ": sample exceeds maxval");
        image.pixels[i] = maxval == full ? static_cast<std::uint16_t>(std::lround(v))
                                         : static_cast<std::uint16_t>(std::lround(v * full / maxval));
    }
    return image;
}

void check_image(const GrayImage& image, const std::filesystem::path& path) {
    if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height) {
        throw DataError("cannot write '" + path.string() + "': inconsistent image dimensions");
    }
    if (image.bit_depth != 8 && image.bit_depth != 16) {
        throw DataError("cannot write '" + path.string() + "': bit depth must be 8 or 16");
    }
}

}  // namespace

GrayImage read_image(const std::filesystem::path& path, const ReadOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image '" + path.string() + "'");
    unsigned char signature[8] = {};
    in.read(reinterpret_cast<char*>(signature), 8);
    if (in.gcount() == 8 && png_sig_cmp(signature, 0, 8) == 0) {
        in.close();
        return read_png(path, options);
    }
    in.clear();
    in.seekg(0);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() >= 2 && bytes[0] == 'P') return read_pnm(path, bytes, options);
    throw DataError("'" + path.string() + "': not a PNG or PGM file");
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
    check_image(image, path);
    File file(std::fopen(path.c_str(), "wb"));
    if (!file) throw DataError("cannot open '" + path.string() + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("libpng: cannot create write struct");
    }
    std::vector<unsigned char> row(image.width * (image.bit_depth / 8));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng: failed writing '" + path.string() + "'");
    }
    png_init_io(png, file.get());
    png_set_compression_level(png, 1);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height),
                 image.bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) {
            const std::uint16_t v = image.pixels[y * image.width + x];
            if (image.bit_depth == 16) {
                row[2 * x] = static_cast<unsigned char>(v >> 8);
                row[2 * x + 1] = static_cast<unsigned char>(v & 0xff);
            } else {
                row[x] = static_cast<unsigned char>(v);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
    check_image(image, path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out << "P5\n" << image.width << " " << image.height << "\n" << image.max_value() << "\n";
    std::vector<unsigned char> bytes;
    bytes.reserve(image.pixels.size() * (image.bit_depth / 8));
    for (auto v : image.pixels) {
        if (image.bit_depth == 16) bytes.push_back(static_cast<unsigned char>(v >> 8));
        bytes.push_back(static_cast<unsigned char>(v & 0xff));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace iterseg
