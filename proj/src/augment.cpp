#include "iterseg/augment.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace iterseg {

std::string to_string(Flip flip) {
    switch (flip) {
        case Flip::identity: return "identity";
        case Flip::horizontal: return "horizontal";
        case Flip::vertical: return "vertical";
        case Flip::both: return "both";
    }
    return "?";
}

Flip parse_flip(const std::string& text) {
    for (Flip f : {Flip::identity, Flip::horizontal, Flip::vertical, Flip::both}) {
        if (text == to_string(f)) return f;
    }
    throw ConfigError("unknown flip '" + text + "' (expected identity, horizontal, vertical or both)");
}

namespace {
const std::vector<Flip> kAllFlips{Flip::identity, Flip::horizontal, Flip::vertical, Flip::both};
}

AugmentationSpec AugmentationSpec::ph2() {
    return {kAllFlips, -16, 16, 4, {-40, -20, 0, 20, 40}, {-40, -20, 0, 20, 40}};
}

AugmentationSpec AugmentationSpec::drive() {
    return {kAllFlips, -24, 24, 4, {-20, -10, 0, 10, 20}, {-20, -10, 0, 10, 20}};
}

AugmentationSpec AugmentationSpec::identity() { return {}; }

void AugmentationSpec::validate() const {
    if (flips.empty()) throw ConfigError("augmentation needs at least one flip entry");
    if (translate_x.empty() || translate_y.empty()) throw ConfigError("augmentation needs translation offsets");
    for (std::size_t i = 0; i < flips.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (flips[i] == flips[j]) throw ConfigError("duplicate flip '" + to_string(flips[i]) + "'");
        }
    }
    if (rotation_min == 0 && rotation_max == 0) return;
    if (!(rotation_step > 0)) throw ConfigError("rotation_step must be > 0");
    if (rotation_min != -rotation_max) throw ConfigError("rotation range must be symmetric about 0");
    const double half = rotation_max / rotation_step;
    if (std::abs(half - std::round(half)) > 1e-9) {
        throw ConfigError("rotation range must contain 0 (rotation_max must be a multiple of rotation_step)");
    }
}

std::vector<double> AugmentationSpec::rotations() const {
    validate();
    if (rotation_min == 0 && rotation_max == 0) return {0.0};
    const auto half = static_cast<long>(std::lround(rotation_max / rotation_step));
    std::vector<double> out;
    for (long i = -half; i <= half; ++i) out.push_back(static_cast<double>(i) * rotation_step);
    return out;
}

std::size_t AugmentationSpec::variant_count() const {
    return flips.size() * rotations().size() * translate_x.size() * translate_y.size();
}

std::vector<Transform> transform_grid(const AugmentationSpec& spec) {
    std::vector<Transform> grid;
    grid.reserve(spec.variant_count());
    const auto angles = spec.rotations();
    for (Flip f : spec.flips) {
        for (double a : angles) {
            for (int dx : spec.translate_x) {
                for (int dy : spec.translate_y) grid.push_back({f, a, dx, dy});
            }
        }
    }
    return grid;
}

namespace {

Tensor<float> flip_plane(const Tensor<float>& in, Flip flip) {
    if (flip == Flip::identity) return in;
    const std::size_t h = in.dim(2), w = in.dim(3);
    const bool fx = flip == Flip::horizontal || flip == Flip::both;
    const bool fy = flip == Flip::vertical || flip == Flip::both;
    Tensor<float> out(in.shape());
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t sy = fy ? h - 1 - y : y;
        for (std::size_t x = 0; x < w; ++x) out[y * w + x] = in[sy * w + (fx ? w - 1 - x : x)];
    }
    return out;
}

Tensor<float> shift_plane(const Tensor<float>& in, int dx, int dy) {
    if (dx == 0 && dy == 0) return in;
    const auto h = static_cast<long>(in.dim(2)), w = static_cast<long>(in.dim(3));
    Tensor<float> out(in.shape());
    for (long y = 0; y < h; ++y) {
        const long sy = y - dy;
        if (sy < 0 || sy >= h) continue;
        for (long x = 0; x < w; ++x) {
            const long sx = x - dx;
            if (sx >= 0 && sx < w) out[y * w + x] = in[sy * w + sx];
        }
    }
    return out;
}

// Inverse-maps every output pixel through translation and rotation.
Tensor<float> rotate_shift_plane(const Tensor<float>& in, double degrees, int dx, int dy, bool nearest) {
    const auto h = static_cast<long>(in.dim(2)), w = static_cast<long>(in.dim(3));
    const double rad = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    auto pixel = [&](long x, long y) -> double {
        return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : static_cast<double>(in[y * w + x]);
    };
    Tensor<float> out(in.shape());
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            // Counter-clockwise on screen is clockwise in (x right, y down) maths,
            // so the inverse rotation below uses +angle.
            const double u = x - dx - cx, v = y - dy - cy;
            const double sx = c * u - s * v + cx;
            const double sy = s * u + c * v + cy;
            double value;
            if (nearest) {
                value = pixel(std::lround(sx), std::lround(sy));
            } else {
                const double fx = std::floor(sx), fy = std::floor(sy);
                const double ax = sx - fx, ay = sy - fy;
                const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
                value = (1 - ay) * ((1 - ax) * pixel(x0, y0) + ax * pixel(x0 + 1, y0)) +
                        ay * ((1 - ax) * pixel(x0, y0 + 1) + ax * pixel(x0 + 1, y0 + 1));
            }
            out[y * w + x] = static_cast<float>(std::clamp(value, 0.0, 1.0));
        }
    }
    return out;
}

Tensor<float> transform_plane(const Tensor<float>& in, const Transform& t, bool nearest) {
    Tensor<float> flipped = flip_plane(in, t.flip);
    if (t.degrees == 0) return shift_plane(flipped, t.dx, t.dy);
    return rotate_shift_plane(flipped, t.degrees, t.dx, t.dy, nearest);
}

}  // namespace

std::string variant_id(const std::string& id, std::size_t grid_index) {
    char suffix[32];
    std::snprintf(suffix, sizeof(suffix), "_g%04zu", grid_index);
    return id + suffix;
}

Sample apply_transform(const Sample& sample, const Transform& transform) {
    Tensor<float> image = transform_plane(sample.image, transform, false);
    Tensor<float> mask = transform_plane(sample.mask.values(), transform, true);
    for (auto& v : mask.data()) v = v >= 0.5f ? 1.0f : 0.0f;
    return {sample.id, std::move(image), GroundTruthMask<float>(std::move(mask))};
}

std::vector<Sample> augment(const Sample& sample, const AugmentationSpec& spec) {
    const auto grid = transform_grid(spec);
    std::vector<Sample> out;
    out.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        Sample s = apply_transform(sample, grid[i]);
        s.id = variant_id(sample.id, i);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace iterseg
