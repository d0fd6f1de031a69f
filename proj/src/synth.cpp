#include "iterseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace iterseg {

std::string to_string(ShapeFamily family) {
    switch (family) {
        case ShapeFamily::disk: return "disk";
        case ShapeFamily::ring: return "ring";
        case ShapeFamily::blob: return "blob";
    }
    return "?";
}

ShapeFamily parse_shape_family(const std::string& text) {
    for (auto f : {ShapeFamily::disk, ShapeFamily::ring, ShapeFamily::blob}) {
        if (text == to_string(f)) return f;
    }
    throw ConfigError("unknown shape family '" + text + "' (expected disk, ring or blob)");
}

namespace {

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        // Box-Muller; u1 in (0, 1]
        const double u1 = 1.0 - uniform(), u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

  private:
    std::mt19937_64 engine_;
};

std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

Sample render_ring(std::string id, std::size_t h, std::size_t w, Rng& rng) {
    const double m = static_cast<double>(std::min(h, w));
    const double outer = rng.uniform(0.22, 0.34) * m;
    const double inner = outer * rng.uniform(0.4, 0.6);
    const double cx = rng.uniform(outer + 1, w - outer - 2), cy = rng.uniform(outer + 1, h - outer - 2);
    Tensor<float> image({1, 1, h, w}), mask({1, 1, h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            const bool inside = d2 <= outer * outer && d2 >= inner * inner;
            mask[y * w + x] = inside ? 1.0f : 0.0f;
            image[y * w + x] = clamp01((inside ? 0.75 : 0.25) + rng.uniform(-0.08, 0.08));
        }
    }
    return {std::move(id), std::move(image), GroundTruthMask<float>(std::move(mask))};
}

double smoothstep(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3 - 2 * t);
}

Sample render_blob(std::string id, std::size_t h, std::size_t w, Rng& rng) {
    const double m = static_cast<double>(std::min(h, w));
    const double r0 = rng.uniform(0.18, 0.28) * m;
    double amp[3], phase[3];
    for (int k = 0; k < 3; ++k) {
        amp[k] = rng.uniform(0.0, 0.12);
        phase[k] = rng.uniform(0.0, 2 * std::numbers::pi);
    }
    const double reach = r0 * 1.4;
    const double cx = rng.uniform(reach, w - reach), cy = rng.uniform(reach, h - reach);
    const double background = rng.uniform(0.35, 0.5);
    const double contrast = rng.uniform(0.15, 0.25);
    const double softness = rng.uniform(1.5, 3.0);
    const double gx = rng.uniform(-0.08, 0.08), gy = rng.uniform(-0.08, 0.08);
    const double sigma = 0.05;

    Tensor<float> image({1, 1, h, w}), mask({1, 1, h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double dist = std::sqrt(dx * dx + dy * dy);
            const double theta = std::atan2(dy, dx);
            double radius = r0;
            for (int k = 0; k < 3; ++k) radius += r0 * amp[k] * std::sin((k + 2) * theta + phase[k]);
            mask[y * w + x] = dist <= radius ? 1.0f : 0.0f;
            const double ramp = smoothstep((radius - dist) / (2 * softness) + 0.5);
            const double shade = background + gx * (x / static_cast<double>(w) - 0.5) * 2 +
                                 gy * (y / static_cast<double>(h) - 0.5) * 2;
            image[y * w + x] = clamp01(shade + contrast * ramp + sigma * rng.normal());
        }
    }
    return {std::move(id), std::move(image), GroundTruthMask<float>(std::move(mask))};
}

}  // namespace

Sample render_disk(std::string id, std::size_t height, std::size_t width, double cx, double cy, double radius,
                   std::uint64_t noise_seed) {
    Rng rng(noise_seed);
    Tensor<float> image({1, 1, height, width}), mask({1, 1, height, width});
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            const bool inside = d2 <= radius * radius;
            mask[y * width + x] = inside ? 1.0f : 0.0f;
            image[y * width + x] = clamp01((inside ? 0.75 : 0.25) + rng.uniform(-0.08, 0.08));
        }
    }
    return {std::move(id), std::move(image), GroundTruthMask<float>(std::move(mask))};
}

std::vector<Sample> synth_corpus(std::size_t count, std::size_t height, std::size_t width, ShapeFamily family,
                                 std::uint64_t seed) {
    if (height < 8 || width < 8) throw ConfigError("synthetic images must be at least 8x8");
    std::vector<Sample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        char id[64];
        std::snprintf(id, sizeof(id), "%s_%04zu", to_string(family).c_str(), i);
        Rng rng(mix(seed, i));
        switch (family) {
            case ShapeFamily::disk: {
                const double m = static_cast<double>(std::min(height, width));
                const double r = rng.uniform(0.15, 0.3) * m;
                const double cx = rng.uniform(r + 1, width - r - 2), cy = rng.uniform(r + 1, height - r - 2);
                out.push_back(render_disk(id, height, width, cx, cy, r, mix(seed ^ 0x5eedULL, i)));
                break;
            }
            case ShapeFamily::ring: out.push_back(render_ring(id, height, width, rng)); break;
            case ShapeFamily::blob: out.push_back(render_blob(id, height, width, rng)); break;
        }
    }
    return out;
}

}  // namespace iterseg
