#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iterseg/image_io.hpp"
#include "iterseg/metrics.hpp"
#include "iterseg/tensor.hpp"

namespace iterseg {

/// One image with its mask, both 1 x 1 x H x W; image values in [0, 1].
struct Sample {
    std::string id;
    Tensor<float> image;
    GroundTruthMask<float> mask;
};

struct Resolution {
    std::size_t height;
    std::size_t width;
};

struct LoadOptions {
    /// Resize target; images bilinear, masks nearest. Native size when unset.
    std::optional<Resolution> resolution;
    bool convert_color = false;
};

struct LoadResult {
    std::vector<Sample> samples;  // sorted by id
    std::vector<std::string> warnings;
};

/// Reads `root/images/<stem>.{png,pgm}` with masks at `root/masks/<stem>.{png,pgm}`.
/// Masks are binarized at 128/255 of full scale before resizing.
LoadResult load_dataset(const std::filesystem::path& root, const LoadOptions& options = {});

enum class Split { train, test };

/// `split.txt`: one `id,train|test` line per image.
std::map<std::string, Split> read_split_manifest(const std::filesystem::path& path);
void write_split_manifest(const std::filesystem::path& path, const std::map<std::string, Split>& split);

/// Seeded random assignment of `train_count` ids to the training side.
std::map<std::string, Split> random_split(const std::vector<std::string>& ids, std::size_t train_count,
                                          std::uint64_t seed);

struct SplitSamples {
    std::vector<Sample> train;
    std::vector<Sample> test;
};

/// Partitions by id; every sample must appear in the manifest.
SplitSamples apply_split(std::vector<Sample> samples, const std::map<std::string, Split>& split);

Tensor<float> to_tensor(const GrayImage& image);
GrayImage to_gray8(const Tensor<float>& values);
GrayImage to_gray16(const Tensor<float>& values);

Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t height, std::size_t width);
Tensor<float> resize_nearest(const Tensor<float>& image, std::size_t height, std::size_t width);

}  // namespace iterseg
