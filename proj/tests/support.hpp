#pragma once

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <iterator>
#include <limits>
#include <set>
#include <random>
#include <span>
#include <vector>

#include "iterseg/graph.hpp"
#include "iterseg/network.hpp"
#include "iterseg/ops.hpp"
#include "iterseg/tensor.hpp"

namespace iterseg::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
}

// Straight loop oracles. Everything is indexed explicitly so that no code is
// shared with the im2col kernels under test.

template <typename T>
Tensor<T> naive_conv2d_same(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b) {
    const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t co = k.dim(0), ks = k.dim(2);
    const long pad = static_cast<long>(ks / 2);
    Tensor<T> out({n, co, h, w});
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) {
                    double acc = static_cast<double>(b[o]);
                    for (std::size_t c = 0; c < ci; ++c)
                        for (std::size_t ky = 0; ky < ks; ++ky)
                            for (std::size_t kx = 0; kx < ks; ++kx) {
                                const long sy = static_cast<long>(y + ky) - pad;
                                const long sx = static_cast<long>(xx + kx) - pad;
                                if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
                                acc += static_cast<double>(x.at(in, c, sy, sx)) * static_cast<double>(k.at(o, c, ky, kx));
                            }
                    out.at(in, o, y, xx) = static_cast<T>(acc);
                }
    return out;
}

// Scatter form: every input pixel (i, j) spreads its kernel onto output
// positions (2i - 1 + ky, 2j - 1 + kx), clipped to the 2H x 2W output.
template <typename T>
Tensor<T> naive_conv_transpose2d(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b) {
    const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t co = k.dim(1);
    std::vector<double> acc(n * co * 4 * h * w, 0.0);
    auto idx = [&](std::size_t in, std::size_t o, std::size_t y, std::size_t xx) {
        return ((in * co + o) * 2 * h + y) * 2 * w + xx;
    };
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    for (std::size_t o = 0; o < co; ++o)
                        for (std::size_t ky = 0; ky < 3; ++ky)
                            for (std::size_t kx = 0; kx < 3; ++kx) {
                                const long oy = 2 * static_cast<long>(i) - 1 + static_cast<long>(ky);
                                const long ox = 2 * static_cast<long>(j) - 1 + static_cast<long>(kx);
                                if (oy < 0 || ox < 0 || oy >= static_cast<long>(2 * h) || ox >= static_cast<long>(2 * w))
                                    continue;
                                acc[idx(in, o, oy, ox)] +=
                                    static_cast<double>(x.at(in, c, i, j)) * static_cast<double>(k.at(c, o, ky, kx));
                            }
    Tensor<T> out({n, co, 2 * h, 2 * w});
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t y = 0; y < 2 * h; ++y)
                for (std::size_t xx = 0; xx < 2 * w; ++xx)
                    out.at(in, o, y, xx) = static_cast<T>(acc[idx(in, o, y, xx)] + static_cast<double>(b[o]));
    return out;
}

template <typename T>
Tensor<T> naive_maxpool2x2(const Tensor<T>& x) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2) / 2, w = x.dim(3) / 2;
    Tensor<T> out({n, c, h, w});
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) {
                    T m = x.at(in, ch, 2 * y, 2 * xx);
                    for (std::size_t d = 1; d < 4; ++d) m = std::max(m, x.at(in, ch, 2 * y + d / 2, 2 * xx + d % 2));
                    out.at(in, ch, y, xx) = m;
                }
    return out;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) return INFINITY;
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

/// Set-based overlap scores: masks become sets of foreground indices.
struct SetScores {
    double dice;
    double jaccard;
};

inline SetScores set_scores(std::span<const float> a, std::span<const float> b) {
    std::set<std::size_t> sa, sb, both, either;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == 1.0f) sa.insert(i);
        if (b[i] == 1.0f) sb.insert(i);
    }
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(both, both.end()));
    std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(either, either.end()));
    const double total = static_cast<double>(sa.size() + sb.size());
    return {total == 0 ? 1.0 : 2.0 * static_cast<double>(both.size()) / total,
            either.empty() ? 1.0 : static_cast<double>(both.size()) / static_cast<double>(either.size())};
}

/// Worst per-tensor relative error between analytic and central-difference
/// gradients: |a - n| / max(|a| + |n|, 1e-12), norms over the whole tensor.
/// `build` records a scalar function of the given leaves on a fresh graph.
struct GradCheck {
    double worst_relative_error = 0;
    std::size_t leaves_checked = 0;
};

using LeafBuilder = std::function<Var(Graph<double>&, std::span<const Var>)>;

inline GradCheck check_gradients(std::vector<Tensor<double>> leaves, const LeafBuilder& build, double step = 1e-3) {
    auto evaluate = [&](const std::vector<Tensor<double>>& values) {
        Graph<double> g;
        std::vector<Var> vars;
        for (const auto& v : values) vars.push_back(g.input(v, false));
        return g.value(build(g, vars))[0];
    };
    Graph<double> g;
    std::vector<Var> vars;
    for (const auto& v : leaves) vars.push_back(g.input(v, true));
    const Var out = build(g, vars);
    g.backward(out);

    GradCheck result;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        const Tensor<double>& analytic = g.grad(vars[l]);
        double diff = 0, norm_a = 0, norm_n = 0;
        for (std::size_t i = 0; i < leaves[l].size(); ++i) {
            const double keep = leaves[l][i];
            leaves[l][i] = keep + step;
            const double up = evaluate(leaves);
            leaves[l][i] = keep - step;
            const double down = evaluate(leaves);
            leaves[l][i] = keep;
            const double numeric = (up - down) / (2 * step);
            diff += (analytic[i] - numeric) * (analytic[i] - numeric);
            norm_a += analytic[i] * analytic[i];
            norm_n += numeric * numeric;
        }
        const double rel = std::sqrt(diff) / std::max(std::sqrt(norm_a) + std::sqrt(norm_n), 1e-12);
        result.worst_relative_error = std::max(result.worst_relative_error, rel);
        ++result.leaves_checked;
    }
    return result;
}

/// Distance of a recorded graph from the nearest point where it is not
/// differentiable: the smallest |input| of any relu and the smallest gap
/// between the two largest entries of any maxpool window.
inline double kink_margin(const Graph<double>& g) {
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Var v{i};
        if (g.op(v) == "relu") {
            for (double x : g.value(g.inputs(v)[0]).data()) margin = std::min(margin, std::abs(x));
        } else if (g.op(v) == "maxpool2x2") {
            const Tensor<double>& x = g.value(g.inputs(v)[0]);
            for (std::size_t n = 0; n < x.dim(0); ++n)
                for (std::size_t c = 0; c < x.dim(1); ++c)
                    for (std::size_t y = 0; y + 1 < x.dim(2); y += 2)
                        for (std::size_t xx = 0; xx + 1 < x.dim(3); xx += 2) {
                            double w[4] = {x.at(n, c, y, xx), x.at(n, c, y, xx + 1), x.at(n, c, y + 1, xx),
                                           x.at(n, c, y + 1, xx + 1)};
                            std::sort(w, w + 4);
                            margin = std::min(margin, w[3] - w[2]);
                        }
        }
    }
    return margin;
}

/// Inputs for a finite-difference check of the whole network and its loss.
struct NetworkGradCase {
    ParameterSet<double> params;
    Tensor<double> image, interim, mask;
    double margin = 0;

    Var loss(Graph<double>& g, std::span<const Var> params_then_image) const {
        const Var out = forward(g, params, params_then_image.first(params.size()), params_then_image.back(),
                                g.input(interim));
        return ops::ratio_loss(g, ops::soft_dice(g, out, mask), 0.4, 1e-6);
    }
    std::vector<Tensor<double>> leaves() const {
        std::vector<Tensor<double>> out;
        for (const auto& p : params.parameters()) out.push_back(p.value);
        out.push_back(image);
        return out;
    }
};

/// Draws random biases, image and interim map until every relu input and
/// every maxpool winner clears min_margin, so a finite-difference step well
/// below the margin never crosses a kink. The search order is fixed.
inline NetworkGradCase smooth_network_case(const NetworkConfig& config, double min_margin, std::uint64_t seed) {
    for (;; ++seed) {
        std::mt19937_64 rng(seed);
        const auto initial = build<double>(config, seed);
        std::vector<Parameter<double>> values;
        for (const auto& p : initial.parameters()) {
            values.push_back({p.name, p.name.ends_with(".bias") ? random_tensor<double>(p.value.shape(), rng, -0.3, 0.3)
                                                              : p.value, {}});
        }
        const Shape frame{1, 1, config.input_height, config.input_width};
        NetworkGradCase c{ParameterSet<double>(config, std::move(values)), random_tensor<double>(frame, rng, 0, 1),
                          Tensor<double>(frame), Tensor<double>(frame)};
        for (auto& v : c.interim.data()) v = rng() % 2 ? 1.0 : 0.0;
        for (std::size_t y = config.input_height / 4; y < 3 * config.input_height / 4; ++y)
            for (std::size_t x = config.input_width / 4; x < 3 * config.input_width / 4; ++x) c.mask.at(0, 0, y, x) = 1;
        Graph<double> g;
        std::vector<Var> vars;
        for (const auto& leaf : c.leaves()) vars.push_back(g.input(leaf));
        c.loss(g, vars);
        c.margin = kink_margin(g);
        if (c.margin >= min_margin) return c;
    }
}

/// A network whose output is sigmoid(gain * (relu(z) - 0.85)) with z the
/// standardized image: channel 0 of the image stem, encoder stage 1 and
/// decoder stage 1 forwards z through its centre tap and every other weight is
/// zero. For the disk sizes synth_corpus draws (6% to 28% of the frame),
/// background pixels stay below z = 0.45 and foreground pixels above 1.25,
/// so the binarized output equals the mask.
template <typename T>
ParameterSet<T> threshold_network(const NetworkConfig& config, T gain = T(40)) {
    std::vector<Parameter<T>> params;
    for (const auto& spec : layer_specs(config)) {
        Tensor<T> w(spec.weight_shape());
        Tensor<T> b({spec.out_channels});
        const std::size_t k = w.dim(2) / 2;
        if (spec.name == "image_stem" || spec.name == "encoder1.conv1" || spec.name == "encoder1.conv2" ||
            spec.name == "decoder1.conv2") {
            w.at(0, 0, k, k) = T(1);
        } else if (spec.name == "decoder1.conv1") {
            // Input is [upsampled, skip]; read channel 0 of the skip half.
            w.at(0, spec.in_channels / 2, k, k) = T(1);
        } else if (spec.name == "head") {
            w.at(0, 0, 0, 0) = gain;
            b[0] = -gain * T(0.85);
        }
        params.push_back({spec.name + ".weight", std::move(w), {}});
        params.push_back({spec.name + ".bias", std::move(b), {}});
    }
    return ParameterSet<T>(config, std::move(params));
}

/// Zero weights and a head bias: the output is the constant sigmoid(bias).
template <typename T>
ParameterSet<T> constant_network(const NetworkConfig& config, T head_bias) {
    std::vector<Parameter<T>> params;
    for (const auto& spec : layer_specs(config)) {
        Tensor<T> b({spec.out_channels});
        if (spec.name == "head") b[0] = head_bias;
        params.push_back({spec.name + ".weight", Tensor<T>(spec.weight_shape()), {}});
        params.push_back({spec.name + ".bias", std::move(b), {}});
    }
    return ParameterSet<T>(config, std::move(params));
}

}  // namespace iterseg::testing
