#pragma once

#include "iterseg/graph.hpp"
#include "iterseg/tensor.hpp"

// Differentiable operations recorded on a Graph.
namespace iterseg::ops {

/// 3x3 same-padded convolution; kernel C_out x C_in x 3 x 3, bias C_out.
template <typename T>
Var conv2d(Graph<T>& g, Var input, Var kernel, Var bias);

/// Per-pixel linear map over channels; kernel C_out x C_in x 1 x 1.
template <typename T>
Var conv2d_1x1(Graph<T>& g, Var input, Var kernel, Var bias);

/// Stride-2 3x3 transposed convolution doubling H and W; kernel C_in x C_out x 3 x 3.
template <typename T>
Var conv_transpose2d(Graph<T>& g, Var input, Var kernel, Var bias);

template <typename T>
Var maxpool2x2(Graph<T>& g, Var input);

template <typename T>
Var concat_channels(Graph<T>& g, Var a, Var b);

template <typename T>
Var relu(Graph<T>& g, Var x);

template <typename T>
Var sigmoid(Graph<T>& g, Var x);

/// Sum of all elements, as a one-element tensor.
template <typename T>
Var sum(Graph<T>& g, Var x);

template <typename T>
Var square(Graph<T>& g, Var x);

template <typename T>
Var scale(Graph<T>& g, Var x, T factor);

/// Per-sample zero mean, unit variance: (x - mean) / sqrt(var + epsilon).
template <typename T>
Var standardize(Graph<T>& g, Var x, T epsilon);

/// Soft dice 2*sum(p*y) / (sum(y^2) + sum(p^2)) against a constant target.
/// Both sums zero gives 1 with zero gradient.
template <typename T>
Var soft_dice(Graph<T>& g, Var prediction, const Tensor<T>& target);

/// -(d_t + epsilon) / (d_prev + epsilon), with d_prev held constant.
template <typename T>
Var ratio_loss(Graph<T>& g, Var d_t, T d_prev, T epsilon);

}  // namespace iterseg::ops
