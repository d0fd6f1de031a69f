#include "iterseg/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "iterseg/ops.hpp"

namespace iterseg {

void NetworkConfig::validate() const {
    if (stages < 1) throw ConfigError("stages must be >= 1");
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
    if (stages >= 8 * sizeof(std::size_t) - 1) throw ConfigError("stages too large");
    const std::size_t factor = std::size_t{1} << stages;
    if (input_height == 0 || input_width == 0 || input_height % factor || input_width % factor) {
        throw ConfigError("input size " + std::to_string(input_height) + "x" + std::to_string(input_width) +
                          " is not divisible by 2^stages = " + std::to_string(factor));
    }
    if (merge_points.empty()) throw ConfigError("merge_points must not be empty");
    for (std::size_t i = 0; i < merge_points.size(); ++i) {
        const std::size_t m = merge_points[i];
        if (m < 1 || m > stages) {
            throw ConfigError("merge point " + std::to_string(m) + " outside [1, " + std::to_string(stages) + "]");
        }
        if (i > 0 && merge_points[i - 1] >= m) throw ConfigError("merge_points must be strictly increasing");
    }
}

Shape LayerSpec::weight_shape() const {
    switch (kind) {
        case LayerKind::conv3x3: return {out_channels, in_channels, 3, 3};
        case LayerKind::conv1x1: return {out_channels, in_channels, 1, 1};
        case LayerKind::transposed3x3: return {in_channels, out_channels, 3, 3};
    }
    return {};
}

namespace {

bool merges_at(const NetworkConfig& config, std::size_t stage) {
    return std::find(config.merge_points.begin(), config.merge_points.end(), stage) != config.merge_points.end();
}

// Number of pool + conv + conv levels on the interim branch.
std::size_t interim_levels(const NetworkConfig& config) { return config.merge_points.back() - 1; }

std::size_t width_at(const NetworkConfig& config, std::size_t stage) {
    return config.base_channels << (stage - 1);
}

std::string stage_name(const char* prefix, std::size_t index) { return prefix + std::to_string(index); }

}  // namespace

std::vector<LayerSpec> layer_specs(const NetworkConfig& config) {
    config.validate();
    const std::size_t c = config.base_channels;
    std::vector<LayerSpec> specs;
    specs.push_back({"image_stem", LayerKind::conv3x3, 1, c});
    specs.push_back({"interim_stem", LayerKind::conv3x3, 1, c});
    for (std::size_t l = 1; l <= interim_levels(config); ++l) {
        const std::size_t in = l == 1 ? c : width_at(config, l - 1);
        const std::string name = stage_name("interim_branch", l);
        specs.push_back({name + ".conv1", LayerKind::conv3x3, in, width_at(config, l)});
        specs.push_back({name + ".conv2", LayerKind::conv3x3, width_at(config, l), width_at(config, l)});
    }
    for (std::size_t s = 1; s <= config.stages; ++s) {
        const std::size_t main_in = s == 1 ? c : width_at(config, s - 1);
        const std::size_t merged = merges_at(config, s) ? main_in : 0;
        const std::string name = stage_name("encoder", s);
        specs.push_back({name + ".conv1", LayerKind::conv3x3, main_in + merged, width_at(config, s)});
        specs.push_back({name + ".conv2", LayerKind::conv3x3, width_at(config, s), width_at(config, s)});
    }
    const std::size_t deepest = width_at(config, config.stages + 1);
    specs.push_back({"bottleneck.conv1", LayerKind::conv3x3, deepest / 2, deepest});
    specs.push_back({"bottleneck.conv2", LayerKind::conv3x3, deepest, deepest});
    for (std::size_t s = config.stages; s >= 1; --s) {
        const std::string name = stage_name("decoder", s);
        const std::size_t width = width_at(config, s);
        specs.push_back({name + ".up", LayerKind::transposed3x3, 2 * width, width});
        specs.push_back({name + ".conv1", LayerKind::conv3x3, 2 * width, width});
        specs.push_back({name + ".conv2", LayerKind::conv3x3, width, width});
    }
    specs.push_back({"head", LayerKind::conv1x1, c, 1});
    return specs;
}

template <typename T>
ParameterSet<T>::ParameterSet(NetworkConfig config, std::vector<Parameter<T>> params)
    : config_(std::move(config)), params_(std::move(params)) {
    const auto specs = layer_specs(config_);
    if (params_.size() != 2 * specs.size()) {
        throw ShapeError("parameter set has " + std::to_string(params_.size()) + " tensors, topology needs " +
                         std::to_string(2 * specs.size()));
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const Shape expected[2] = {specs[i].weight_shape(), Shape{specs[i].out_channels}};
        const char* suffix[2] = {".weight", ".bias"};
        for (int k = 0; k < 2; ++k) {
            const auto& p = params_[2 * i + k];
            const std::string name = specs[i].name + suffix[k];
            if (p.name != name) {
                throw ShapeError("layer mismatch at position " + std::to_string(2 * i + k) + ": expected '" + name +
                                 "', found '" + p.name + "'");
            }
            if (p.value.shape() != expected[k]) {
                throw ShapeError("shape mismatch at layer '" + name + "': have " + shape_string(p.value.shape()) +
                                 ", config expects " + shape_string(expected[k]));
            }
        }
    }
}

template <typename T>
const Parameter<T>& ParameterSet<T>::get(std::string_view name) const {
    for (const auto& p : params_) {
        if (p.name == name) return p;
    }
    throw Error("no parameter named '" + std::string(name) + "'");
}

template <typename T>
Parameter<T>& ParameterSet<T>::get(std::string_view name) {
    return const_cast<Parameter<T>&>(std::as_const(*this).get(name));
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

template <typename T>
ParameterSet<T> build(const NetworkConfig& config, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    std::vector<Parameter<T>> params;
    for (const auto& spec : layer_specs(config)) {
        const Shape shape = spec.weight_shape();
        const std::size_t taps = shape[2] * shape[3];
        const double bound = std::sqrt(6.0 / static_cast<double>(spec.in_channels * taps));
        Tensor<T> weight(shape);
        for (auto& w : weight.data()) w = static_cast<T>((2.0 * uniform() - 1.0) * bound);
        params.push_back({spec.name + ".weight", std::move(weight), {}});
        params.push_back({spec.name + ".bias", Tensor<T>({spec.out_channels}), {}});
    }
    return ParameterSet<T>(config, std::move(params));
}

template <typename T>
std::vector<Var> bind_parameters(Graph<T>& graph, const ParameterSet<T>& params, bool requires_grad) {
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const auto& p : params.parameters()) vars.push_back(graph.input(p.value, requires_grad));
    return vars;
}

template <typename T>
Var forward(Graph<T>& graph, const ParameterSet<T>& params, std::span<const Var> param_vars, Var image, Var interim) {
    const NetworkConfig& config = params.config();
    if (param_vars.size() != params.size()) {
        throw ShapeError("forward: " + std::to_string(param_vars.size()) + " parameter handles for " +
                         std::to_string(params.size()) + " parameters");
    }
    const Shape expected{1, 1, config.input_height, config.input_width};
    if (graph.value(image).shape() != expected) {
        throw ShapeError("forward: image shape " + shape_string(graph.value(image).shape()) + ", network expects " +
                         shape_string(expected));
    }
    if (graph.value(interim).shape() != expected) {
        throw ShapeError("forward: interim map shape " + shape_string(graph.value(interim).shape()) +
                         " does not match image resolution " + shape_string(expected));
    }

    std::unordered_map<std::string_view, std::size_t> index;
    const auto all = params.parameters();
    for (std::size_t i = 0; i < all.size(); i += 2) {
        std::string_view name = all[i].name;
        index.emplace(name.substr(0, name.size() - std::string_view(".weight").size()), i);
    }
    auto layer = [&](std::string_view name) {
        const std::size_t i = index.at(name);
        return std::pair{param_vars[i], param_vars[i + 1]};
    };
    auto conv_relu = [&](Var x, const std::string& name) {
        auto [w, b] = layer(name);
        return ops::relu(graph, ops::conv2d(graph, x, w, b));
    };

    // Images differ in brightness and contrast; the stem sees each one at zero
    // mean and unit variance.
    const Var image_features = conv_relu(ops::standardize(graph, image, T(1e-6)), "image_stem");
    const Var interim_features = conv_relu(interim, "interim_stem");

    std::vector<Var> interim_branch{interim_features};
    for (std::size_t l = 1; l <= interim_levels(config); ++l) {
        const std::string name = stage_name("interim_branch", l);
        Var a = ops::maxpool2x2(graph, interim_branch.back());
        a = conv_relu(a, name + ".conv1");
        interim_branch.push_back(conv_relu(a, name + ".conv2"));
    }

    Var h = image_features;
    std::vector<Var> skips(config.stages + 1);
    for (std::size_t s = 1; s <= config.stages; ++s) {
        if (merges_at(config, s)) h = ops::concat_channels(graph, h, interim_branch[s - 1]);
        const std::string name = stage_name("encoder", s);
        h = conv_relu(h, name + ".conv1");
        h = conv_relu(h, name + ".conv2");
        skips[s] = h;
        h = ops::maxpool2x2(graph, h);
    }

    h = conv_relu(h, "bottleneck.conv1");
    h = conv_relu(h, "bottleneck.conv2");

    for (std::size_t s = config.stages; s >= 1; --s) {
        const std::string name = stage_name("decoder", s);
        auto [w, b] = layer(name + ".up");
        h = ops::relu(graph, ops::conv_transpose2d(graph, h, w, b));
        h = ops::concat_channels(graph, h, skips[s]);
        h = conv_relu(h, name + ".conv1");
        h = conv_relu(h, name + ".conv2");
    }

    auto [w, b] = layer("head");
    return ops::sigmoid(graph, ops::conv2d_1x1(graph, h, w, b));
}

template <typename T>
SegmentationMap<T> forward(const ParameterSet<T>& params, const Tensor<T>& image, const SegmentationMap<T>& interim) {
    Graph<T> graph;
    const auto vars = bind_parameters(graph, params, false);
    const Var out = forward(graph, params, vars, graph.input(image), graph.input(interim.values));
    return {graph.value(out), interim.iteration + 1};
}

#define ITERSEG_INSTANTIATE_NETWORK(T)                                                                          \
    template class ParameterSet<T>;                                                                             \
    template ParameterSet<T> build(const NetworkConfig&, std::uint64_t);                                        \
    template std::vector<Var> bind_parameters(Graph<T>&, const ParameterSet<T>&, bool);                         \
    template Var forward(Graph<T>&, const ParameterSet<T>&, std::span<const Var>, Var, Var);                    \
    template SegmentationMap<T> forward(const ParameterSet<T>&, const Tensor<T>&, const SegmentationMap<T>&);

ITERSEG_INSTANTIATE_NETWORK(float)
ITERSEG_INSTANTIATE_NETWORK(double)

}  // namespace iterseg
