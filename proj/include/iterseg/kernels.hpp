#pragma once

#include <cstddef>
#include <vector>

#include "iterseg/tensor.hpp"

// Graph-free forward and backward kernels. Backward kernels accumulate into the
// gradient tensors they are given; a null pointer skips that gradient.
namespace iterseg::kernels {

/// Stride-1 cross-correlation with zero "same" padding. Kernel C_out x C_in x K x K
/// with K odd; bias has C_out entries.
template <typename T>
Tensor<T> conv2d_same(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias);

template <typename T>
void conv2d_same_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                          Tensor<T>* grad_input, Tensor<T>* grad_kernel, Tensor<T>* grad_bias);

/// Stride-2 3x3 cross-correlation with padding 1 and no bias: 2H x 2W -> H x W.
template <typename T>
Tensor<T> conv2d_stride2(const Tensor<T>& input, const Tensor<T>& kernel);

/// Stride-2 3x3 transposed convolution, H x W -> 2H x 2W. Kernel C_in x C_out x 3 x 3.
/// Exactly the adjoint of conv2d_stride2 with the same kernel, plus bias.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias);

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                               Tensor<T>* grad_input, Tensor<T>* grad_kernel, Tensor<T>* grad_bias);

template <typename T>
struct PoolResult {
    Tensor<T> output;
    std::vector<std::size_t> argmax;  // flat input index per output element
};

/// Non-overlapping 2x2 max. Ties go to the first element in row-major order.
template <typename T>
PoolResult<T> maxpool2x2(const Tensor<T>& input);

template <typename T>
void maxpool2x2_backward(const Tensor<T>& grad_out, const std::vector<std::size_t>& argmax, Tensor<T>& grad_input);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Copies channels [first, first + count) of a rank-4 tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t first, std::size_t count);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

}  // namespace iterseg::kernels
