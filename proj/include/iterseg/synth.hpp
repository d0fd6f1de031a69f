#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "iterseg/dataset.hpp"

namespace iterseg {

enum class ShapeFamily { disk, ring, blob };

std::string to_string(ShapeFamily family);
ShapeFamily parse_shape_family(const std::string& text);

/// Noisy disk (background ~0.25, foreground ~0.75, +-0.08 uniform noise).
/// Mask pixel (x, y) is 1 iff (x - cx)^2 + (y - cy)^2 <= r^2.
Sample render_disk(std::string id, std::size_t height, std::size_t width, double cx, double cy, double radius,
                   std::uint64_t noise_seed);

/// Deterministic corpus of `count` samples. Blobs are star-shaped regions
/// with low contrast, a soft boundary ramp, an illumination gradient and
/// Gaussian noise.
std::vector<Sample> synth_corpus(std::size_t count, std::size_t height, std::size_t width, ShapeFamily family,
                                 std::uint64_t seed);

}  // namespace iterseg
