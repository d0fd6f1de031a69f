#include "iterseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

namespace iterseg {
namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".pgm";
}

std::map<std::string, fs::path> list_images(const fs::path& dir, std::vector<std::string>& warnings) {
    std::map<std::string, fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
        const std::string stem = entry.path().stem().string();
        if (!files.emplace(stem, entry.path()).second) {
            warnings.push_back("duplicate stem '" + stem + "' in " + dir.string() + "; keeping " +
                               files[stem].filename().string());
        }
    }
    return files;
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

}  // namespace

Tensor<float> to_tensor(const GrayImage& image) {
    Tensor<float> t({1, 1, image.height, image.width});
    const float scale = 1.0f / static_cast<float>(image.max_value());
    for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = static_cast<float>(image.pixels[i]) * scale;
    return t;
}

namespace {

GrayImage quantize(const Tensor<float>& values, int depth) {
    if (values.rank() != 4 || values.dim(0) != 1 || values.dim(1) != 1) {
        throw ShapeError("image export needs a 1 x 1 x H x W tensor, got " + shape_string(values.shape()));
    }
    GrayImage image{values.dim(3), values.dim(2), depth, {}};
    const double full = image.max_value();
    image.pixels.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = std::clamp(static_cast<double>(values[i]), 0.0, 1.0);
        image.pixels[i] = static_cast<std::uint16_t>(std::lround(v * full));
    }
    return image;
}

}  // namespace

GrayImage to_gray8(const Tensor<float>& values) { return quantize(values, 8); }
GrayImage to_gray16(const Tensor<float>& values) { return quantize(values, 16); }

Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t height, std::size_t width) {
    const std::size_t in_h = image.dim(2), in_w = image.dim(3);
    if (in_h == height && in_w == width) return image;
    Tensor<float> out({1, 1, height, width});
    const double sy = static_cast<double>(in_h) / height, sx = static_cast<double>(in_w) / width;
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - y0;
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - x0;
            const double top = (1 - wx) * image[y0 * in_w + x0] + wx * image[y0 * in_w + x1];
            const double bottom = (1 - wx) * image[y1 * in_w + x0] + wx * image[y1 * in_w + x1];
            out[y * width + x] = static_cast<float>((1 - wy) * top + wy * bottom);
        }
    }
    return out;
}

Tensor<float> resize_nearest(const Tensor<float>& image, std::size_t height, std::size_t width) {
    const std::size_t in_h = image.dim(2), in_w = image.dim(3);
    if (in_h == height && in_w == width) return image;
    Tensor<float> out({1, 1, height, width});
    for (std::size_t y = 0; y < height; ++y) {
        const std::size_t sy = std::min(in_h - 1, (2 * y + 1) * in_h / (2 * height));
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t sx = std::min(in_w - 1, (2 * x + 1) * in_w / (2 * width));
            out[y * width + x] = image[sy * in_w + sx];
        }
    }
    return out;
}

LoadResult load_dataset(const fs::path& root, const LoadOptions& options) {
    if (!fs::is_directory(root)) throw DataError("dataset root '" + root.string() + "' is not a directory");
    LoadResult result;
    const fs::path image_dir = root / "images", mask_dir = root / "masks";
    if (!fs::is_directory(image_dir)) {
        result.warnings.push_back("no images directory under '" + root.string() + "'");
        return result;
    }
    const auto images = list_images(image_dir, result.warnings);
    if (images.empty()) {
        result.warnings.push_back("no PNG/PGM files in '" + image_dir.string() + "'");
        return result;
    }
    if (!fs::is_directory(mask_dir)) throw DataError("missing masks directory '" + mask_dir.string() + "'");
    const auto masks = list_images(mask_dir, result.warnings);

    ReadOptions read{options.convert_color};
    for (const auto& [stem, image_path] : images) {
        auto m = masks.find(stem);
        if (m == masks.end()) throw DataError("no mask for image '" + image_path.string() + "'");
        const GrayImage raw_image = read_image(image_path, read);
        const GrayImage raw_mask = read_image(m->second, read);
        if (raw_image.width != raw_mask.width || raw_image.height != raw_mask.height) {
            throw DataError("mask '" + m->second.string() + "' is " + std::to_string(raw_mask.width) + "x" +
                            std::to_string(raw_mask.height) + ", image is " + std::to_string(raw_image.width) + "x" +
                            std::to_string(raw_image.height));
        }
        Tensor<float> image = to_tensor(raw_image);
        Tensor<float> mask({1, 1, raw_mask.height, raw_mask.width});
        // value >= 128/255 of full scale, in integer arithmetic
        for (std::size_t i = 0; i < mask.size(); ++i) {
            mask[i] = 255u * raw_mask.pixels[i] >= 128u * raw_mask.max_value() ? 1.0f : 0.0f;
        }
        if (options.resolution) {
            image = resize_bilinear(image, options.resolution->height, options.resolution->width);
            mask = resize_nearest(mask, options.resolution->height, options.resolution->width);
        }
        result.samples.push_back({stem, std::move(image), GroundTruthMask<float>(std::move(mask))});
    }
    for (const auto& [stem, path] : masks) {
        if (!images.count(stem)) result.warnings.push_back("mask without image: '" + path.string() + "'");
    }
    return result;
}

std::map<std::string, Split> read_split_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split manifest '" + path.string() + "'");
    std::map<std::string, Split> split;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto comma = line.rfind(',');
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (comma == std::string::npos) throw DataError(where + ": expected 'id,train|test'");
        const std::string id = trim(line.substr(0, comma)), side = trim(line.substr(comma + 1));
        if (side != "train" && side != "test") throw DataError(where + ": unknown split '" + side + "'");
        if (!split.emplace(id, side == "train" ? Split::train : Split::test).second) {
            throw DataError(where + ": duplicate id '" + id + "'");
        }
    }
    return split;
}

void write_split_manifest(const fs::path& path, const std::map<std::string, Split>& split) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write split manifest '" + path.string() + "'");
    for (const auto& [id, side] : split) out << id << "," << (side == Split::train ? "train" : "test") << "\n";
}

std::map<std::string, Split> random_split(const std::vector<std::string>& ids, std::size_t train_count,
                                          std::uint64_t seed) {
    if (train_count > ids.size()) {
        throw ConfigError("train count " + std::to_string(train_count) + " exceeds " + std::to_string(ids.size()) +
                          " samples");
    }
    std::vector<std::string> order(ids);
    std::sort(order.begin(), order.end());
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    std::map<std::string, Split> split;
    for (std::size_t i = 0; i < order.size(); ++i) split[order[i]] = i < train_count ? Split::train : Split::test;
    return split;
}

SplitSamples apply_split(std::vector<Sample> samples, const std::map<std::string, Split>& split) {
    SplitSamples out;
    for (auto& s : samples) {
        auto it = split.find(s.id);
        if (it == split.end()) throw DataError("sample '" + s.id + "' is not listed in the split manifest");
        (it->second == Split::train ? out.train : out.test).push_back(std::move(s));
    }
    return out;
}

}  // namespace iterseg
