#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "iterseg/dataset.hpp"

namespace iterseg {

enum class Flip { identity, horizontal, vertical, both };

std::string to_string(Flip flip);
Flip parse_flip(const std::string& text);

/// Declarative grid: every flip x every rotation x every (dx, dy) translation.
struct AugmentationSpec {
    std::vector<Flip> flips{Flip::identity};
    double rotation_min = 0;  // degrees
    double rotation_max = 0;
    double rotation_step = 0;  // ignored when min == max == 0
    std::vector<int> translate_x{0};
    std::vector<int> translate_y{0};

    /// Four flips, rotations -16..16 step 4, translations {0, +-20, +-40}^2: 900 variants.
    static AugmentationSpec ph2();
    /// Four flips, rotations -24..24 step 4, translations {0, +-10, +-20}^2: 1,300 variants.
    static AugmentationSpec drive();
    static AugmentationSpec identity();

    /// Rotation sequence must be symmetric about 0 and contain 0.
    void validate() const;
    std::vector<double> rotations() const;
    std::size_t variant_count() const;
};

struct Transform {
    Flip flip = Flip::identity;
    double degrees = 0;
    int dx = 0;
    int dy = 0;
};

/// Grid points in order: flips, then rotations, then x offsets, then y offsets.
std::vector<Transform> transform_grid(const AugmentationSpec& spec);

/// Flip first, then rotation about the image centre, then translation. Images
/// are sampled bilinearly, masks by nearest neighbour; uncovered pixels become 0.
/// Positive dx moves content right, positive dy down, positive degrees
/// counter-clockwise as displayed.
Sample apply_transform(const Sample& sample, const Transform& transform);

/// One output per grid point, ids "<id>_g<index>" with a zero-padded index.
std::vector<Sample> augment(const Sample& sample, const AugmentationSpec& spec);

std::string variant_id(const std::string& id, std::size_t grid_index);

}  // namespace iterseg
