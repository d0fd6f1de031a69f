#include "iterseg/optim.hpp"

#include <cmath>

namespace iterseg {

void SgdConfig::validate() const {
    if (!std::isfinite(learning_rate) || learning_rate < 0) {
        throw ConfigError("learning_rate must be a finite value >= 0, got " + std::to_string(learning_rate));
    }
    if (!std::isfinite(momentum) || momentum < 0 || momentum >= 1) {
        throw ConfigError("momentum must lie in [0, 1), got " + std::to_string(momentum));
    }
}

template <typename T>
void sgd_step(std::span<Parameter<T>> params, std::span<const Tensor<T>> grads, const SgdConfig& config) {
    config.validate();
    if (params.size() != grads.size()) {
        throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i].value.require_same_shape(grads[i], params[i].name.c_str());
    }
    const T lr = static_cast<T>(config.learning_rate);
    const T momentum = static_cast<T>(config.momentum);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (p.velocity.empty()) p.velocity = Tensor<T>::zeros_like(p.value);
        auto v = p.velocity.data();
        auto w = p.value.data();
        auto g = grads[i].data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = momentum * v[j] + g[j];
            w[j] -= lr * v[j];
        }
    }
}

template void sgd_step(std::span<Parameter<float>>, std::span<const Tensor<float>>, const SgdConfig&);
template void sgd_step(std::span<Parameter<double>>, std::span<const Tensor<double>>, const SgdConfig&);

}  // namespace iterseg
