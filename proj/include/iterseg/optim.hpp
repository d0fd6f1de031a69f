#pragma once

#include <span>
#include <string>

#include "iterseg/tensor.hpp"

namespace iterseg {

/// A learnable tensor with its momentum buffer.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> velocity;  // empty until the first optimizer step
};

struct SgdConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;

    /// Rejects negative or non-finite rates and momentum outside [0, 1).
    void validate() const;
};

/// v <- momentum * v + g;  p <- p - lr * v.  grads[i] pairs with params[i].
template <typename T>
void sgd_step(std::span<Parameter<T>> params, std::span<const Tensor<T>> grads, const SgdConfig& config);

}  // namespace iterseg
