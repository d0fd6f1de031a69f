#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iterseg/graph.hpp"
#include "iterseg/optim.hpp"
#include "iterseg/tensor.hpp"

namespace iterseg {

/// Shape of the two-input encoder-decoder.
struct NetworkConfig {
    std::size_t input_height = 256;
    std::size_t input_width = 320;
    std::size_t stages = 4;
    std::size_t base_channels = 16;
    /// Encoder stages whose input receives interim-map features. Stage 1 is the
    /// copy connection of the two stems; later stages take the interim branch.
    std::vector<std::size_t> merge_points{1, 2};

    void validate() const;
    std::size_t pixels() const { return input_height * input_width; }
    bool operator==(const NetworkConfig&) const = default;
};

enum class LayerKind { conv3x3, conv1x1, transposed3x3 };

struct LayerSpec {
    std::string name;
    LayerKind kind;
    std::size_t in_channels;
    std::size_t out_channels;

    /// conv: C_out x C_in x K x K;  transposed: C_in x C_out x 3 x 3.
    Shape weight_shape() const;
};

/// Layers of the topology in construction order. Each layer owns a
/// "<name>.weight" and "<name>.bias" parameter.
std::vector<LayerSpec> layer_specs(const NetworkConfig& config);

/// Single-channel map in [0, 1] at input resolution, with its iteration index.
template <typename T>
struct SegmentationMap {
    Tensor<T> values;  // 1 x 1 x H x W
    int iteration = 0;
};

/// All learnable tensors of a network built from `config`, in layer order.
template <typename T>
class ParameterSet {
  public:
    /// Verifies that `params` matches layer_specs(config) name for name and
    /// shape for shape; the first offending entry is named in the error.
    ParameterSet(NetworkConfig config, std::vector<Parameter<T>> params);

    const NetworkConfig& config() const noexcept { return config_; }
    std::span<Parameter<T>> parameters() noexcept { return params_; }
    std::span<const Parameter<T>> parameters() const noexcept { return params_; }
    std::size_t size() const noexcept { return params_.size(); }

    const Parameter<T>& get(std::string_view name) const;
    Parameter<T>& get(std::string_view name);

    /// Total number of scalars.
    std::size_t scalar_count() const;

  private:
    NetworkConfig config_;
    std::vector<Parameter<T>> params_;
};

/// He-uniform kernels (bound sqrt(6 / fan_in)), zero biases.
template <typename T>
ParameterSet<T> build(const NetworkConfig& config, std::uint64_t seed);

/// Adds every parameter to `graph` as a leaf, in ParameterSet order.
template <typename T>
std::vector<Var> bind_parameters(Graph<T>& graph, const ParameterSet<T>& params, bool requires_grad);

/// Records the forward pass on `graph`; returns the 1 x 1 x H x W sigmoid output.
template <typename T>
Var forward(Graph<T>& graph, const ParameterSet<T>& params, std::span<const Var> param_vars, Var image, Var interim);

/// Graph-free convenience wrapper. The result carries interim.iteration + 1.
template <typename T>
SegmentationMap<T> forward(const ParameterSet<T>& params, const Tensor<T>& image, const SegmentationMap<T>& interim);

}  // namespace iterseg
