#include "iterseg/kernels.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace iterseg::kernels {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
    std::size_t channels;
    std::size_t in_h, in_w;
    std::size_t out_h, out_w;
    std::size_t k;
    std::size_t stride;
    std::ptrdiff_t pad;

    std::size_t rows() const { return channels * k * k; }
    std::size_t cols() const { return out_h * out_w; }
};

// Unfolds one image (C x H x W) into (C*K*K) x (out_h*out_w).
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* cols) {
    const std::size_t n_cols = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        const T* plane = image + c * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                T* row = cols + ((c * g.k + ky) * g.k + kx) * n_cols;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - g.pad;
                    T* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
                        std::fill(dst, dst + g.out_w, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(iy) * g.in_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - g.pad;
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) ? T(0) : src[ix];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds columns back into an image.
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* image) {
    const std::size_t n_cols = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        T* plane = image + c * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const T* row = cols + ((c * g.k + ky) * g.k + kx) * n_cols;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - g.pad;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    T* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
                    const T* src = row + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - g.pad;
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w)) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

void require_rank4(const Shape& s, const char* what) {
    if (s.size() != 4) throw ShapeError(std::string(what) + ": expected a rank-4 tensor, got " + shape_string(s));
}

template <typename T>
void require_bias(const Tensor<T>& bias, std::size_t channels, const char* what) {
    if (bias.rank() != 1 || bias.dim(0) != channels) {
        throw ShapeError(std::string(what) + ": bias shape " + shape_string(bias.shape()) + " does not match " +
                         std::to_string(channels) + " output channels");
    }
}

template <typename T>
void add_bias(Tensor<T>& out, const Tensor<T>& bias) {
    const std::size_t n = out.dim(0), c = out.dim(1), plane = out.dim(2) * out.dim(3);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            T* p = out.raw() + (i * c + ch) * plane;
            const T b = bias[ch];
            for (std::size_t j = 0; j < plane; ++j) p[j] += b;
        }
    }
}

template <typename T>
void accumulate_bias_grad(const Tensor<T>& grad_out, Tensor<T>& grad_bias) {
    const std::size_t n = grad_out.dim(0), c = grad_out.dim(1), plane = grad_out.dim(2) * grad_out.dim(3);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* p = grad_out.raw() + (i * c + ch) * plane;
            T sum = 0;
            for (std::size_t j = 0; j < plane; ++j) sum += p[j];
            grad_bias[ch] += sum;
        }
    }
}

template <typename T>
ConvGeometry same_geometry(const Tensor<T>& input, const Tensor<T>& kernel) {
    require_rank4(input.shape(), "conv2d input");
    require_rank4(kernel.shape(), "conv2d kernel");
    const std::size_t k = kernel.dim(2);
    if (k != kernel.dim(3) || k % 2 == 0) {
        throw ShapeError("conv2d: kernel must be square with odd size, got " + shape_string(kernel.shape()));
    }
    if (kernel.dim(1) != input.dim(1)) {
        throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) + " input channels, input has " +
                         std::to_string(input.dim(1)));
    }
    return {input.dim(1), input.dim(2), input.dim(3), input.dim(2), input.dim(3), k, 1,
            static_cast<std::ptrdiff_t>(k / 2)};
}

// Geometry of the stride-2 3x3 pad-1 convolution taking a (channels x in_h x in_w) image
// down to half resolution.
ConvGeometry stride2_geometry(std::size_t channels, std::size_t in_h, std::size_t in_w) {
    return {channels, in_h, in_w, in_h / 2, in_w / 2, 3, 2, 1};
}

}  // namespace

template <typename T>
Tensor<T> conv2d_same(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
    const ConvGeometry g = same_geometry(input, kernel);
    const std::size_t c_out = kernel.dim(0);
    require_bias(bias, c_out, "conv2d");
    const std::size_t n = input.dim(0);
    Tensor<T> out({n, c_out, g.out_h, g.out_w});
    std::vector<T> cols(g.rows() * g.cols());
    ConstMatrixMap<T> w(kernel.raw(), c_out, g.rows());
    for (std::size_t i = 0; i < n; ++i) {
        im2col(input.raw() + i * g.channels * g.in_h * g.in_w, g, cols.data());
        ConstMatrixMap<T> colm(cols.data(), g.rows(), g.cols());
        MatrixMap<T> outm(out.raw() + i * c_out * g.cols(), c_out, g.cols());
        outm.noalias() = w * colm;
    }
    add_bias(out, bias);
    return out;
}

template <typename T>
void conv2d_same_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                          Tensor<T>* grad_input, Tensor<T>* grad_kernel, Tensor<T>* grad_bias) {
    const ConvGeometry g = same_geometry(input, kernel);
    const std::size_t c_out = kernel.dim(0);
    const std::size_t n = input.dim(0);
    std::vector<T> cols(g.rows() * g.cols());
    ConstMatrixMap<T> w(kernel.raw(), c_out, g.rows());
    for (std::size_t i = 0; i < n; ++i) {
        ConstMatrixMap<T> gout(grad_out.raw() + i * c_out * g.cols(), c_out, g.cols());
        if (grad_kernel) {
            im2col(input.raw() + i * g.channels * g.in_h * g.in_w, g, cols.data());
            ConstMatrixMap<T> colm(cols.data(), g.rows(), g.cols());
            MatrixMap<T> gw(grad_kernel->raw(), c_out, g.rows());
            gw.noalias() += gout * colm.transpose();
        }
        if (grad_input) {
            MatrixMap<T> gcols(cols.data(), g.rows(), g.cols());
            gcols.noalias() = w.transpose() * gout;
            col2im(cols.data(), g, grad_input->raw() + i * g.channels * g.in_h * g.in_w);
        }
    }
    if (grad_bias) accumulate_bias_grad(grad_out, *grad_bias);
}

template <typename T>
Tensor<T> conv2d_stride2(const Tensor<T>& input, const Tensor<T>& kernel) {
    require_rank4(input.shape(), "conv2d_stride2 input");
    require_rank4(kernel.shape(), "conv2d_stride2 kernel");
    if (kernel.dim(2) != 3 || kernel.dim(3) != 3) {
        throw ShapeError("conv2d_stride2: kernel must be 3x3, got " + shape_string(kernel.shape()));
    }
    if (kernel.dim(1) != input.dim(1)) {
        throw ShapeError("conv2d_stride2: kernel expects " + std::to_string(kernel.dim(1)) +
                         " input channels, input has " + std::to_string(input.dim(1)));
    }
    if (input.dim(2) % 2 || input.dim(3) % 2) {
        throw ShapeError("conv2d_stride2: spatial size must be even, got " + shape_string(input.shape()));
    }
    const ConvGeometry g = stride2_geometry(input.dim(1), input.dim(2), input.dim(3));
    const std::size_t n = input.dim(0), c_out = kernel.dim(0);
    Tensor<T> out({n, c_out, g.out_h, g.out_w});
    std::vector<T> cols(g.rows() * g.cols());
    ConstMatrixMap<T> w(kernel.raw(), c_out, g.rows());
    for (std::size_t i = 0; i < n; ++i) {
        im2col(input.raw() + i * g.channels * g.in_h * g.in_w, g, cols.data());
        ConstMatrixMap<T> colm(cols.data(), g.rows(), g.cols());
        MatrixMap<T> outm(out.raw() + i * c_out * g.cols(), c_out, g.cols());
        outm.noalias() = w * colm;
    }
    return out;
}

namespace {

template <typename T>
void check_transpose_shapes(const Tensor<T>& input, const Tensor<T>& kernel) {
    require_rank4(input.shape(), "conv_transpose2d input");
    require_rank4(kernel.shape(), "conv_transpose2d kernel");
    if (kernel.dim(2) != 3 || kernel.dim(3) != 3) {
        throw ShapeError("conv_transpose2d: kernel must be 3x3, got " + shape_string(kernel.shape()));
    }
    if (kernel.dim(0) != input.dim(1)) {
        throw ShapeError("conv_transpose2d: kernel expects " + std::to_string(kernel.dim(0)) +
                         " input channels, input has " + std::to_string(input.dim(1)));
    }
}

}  // namespace

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
    check_transpose_shapes(input, kernel);
    const std::size_t n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t c_out = kernel.dim(1);
    require_bias(bias, c_out, "conv_transpose2d");
    // Output-side geometry: the stride-2 conv that maps the 2H x 2W output back to H x W.
    const ConvGeometry g = stride2_geometry(c_out, 2 * h, 2 * w);
    Tensor<T> out({n, c_out, 2 * h, 2 * w});
    std::vector<T> cols(g.rows() * g.cols());
    ConstMatrixMap<T> k(kernel.raw(), c_in, g.rows());
    for (std::size_t i = 0; i < n; ++i) {
        ConstMatrixMap<T> x(input.raw() + i * c_in * h * w, c_in, h * w);
        MatrixMap<T> colm(cols.data(), g.rows(), g.cols());
        colm.noalias() = k.transpose() * x;
        col2im(cols.data(), g, out.raw() + i * c_out * 4 * h * w);
    }
    add_bias(out, bias);
    return out;
}

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                               Tensor<T>* grad_input, Tensor<T>* grad_kernel, Tensor<T>* grad_bias) {
    check_transpose_shapes(input, kernel);
    const std::size_t n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t c_out = kernel.dim(1);
    const ConvGeometry g = stride2_geometry(c_out, 2 * h, 2 * w);
    std::vector<T> cols(g.rows() * g.cols());
    ConstMatrixMap<T> k(kernel.raw(), c_in, g.rows());
    for (std::size_t i = 0; i < n; ++i) {
        im2col(grad_out.raw() + i * c_out * 4 * h * w, g, cols.data());
        ConstMatrixMap<T> colm(cols.data(), g.rows(), g.cols());
        if (grad_input) {
            MatrixMap<T> gx(grad_input->raw() + i * c_in * h * w, c_in, h * w);
            gx.noalias() += k * colm;
        }
        if (grad_kernel) {
            ConstMatrixMap<T> x(input.raw() + i * c_in * h * w, c_in, h * w);
            MatrixMap<T> gk(grad_kernel->raw(), c_in, g.rows());
            gk.noalias() += x * colm.transpose();
        }
    }
    if (grad_bias) accumulate_bias_grad(grad_out, *grad_bias);
}

template <typename T>
PoolResult<T> maxpool2x2(const Tensor<T>& input) {
    require_rank4(input.shape(), "maxpool2x2");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h % 2 || w % 2) throw ShapeError("maxpool2x2: odd spatial size " + shape_string(input.shape()));
    PoolResult<T> result{Tensor<T>({n, c, h / 2, w / 2}), {}};
    result.argmax.resize(result.output.size());
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t y = 0; y < h; y += 2) {
            for (std::size_t x = 0; x < w; x += 2, ++o) {
                const std::size_t candidates[4] = {base + y * w + x, base + y * w + x + 1, base + (y + 1) * w + x,
                                                   base + (y + 1) * w + x + 1};
                std::size_t best = candidates[0];
                for (int j = 1; j < 4; ++j) {
                    if (input[candidates[j]] > input[best]) best = candidates[j];
                }
                result.output[o] = input[best];
                result.argmax[o] = best;
            }
        }
    }
    return result;
}

template <typename T>
void maxpool2x2_backward(const Tensor<T>& grad_out, const std::vector<std::size_t>& argmax, Tensor<T>& grad_input) {
    for (std::size_t i = 0; i < argmax.size(); ++i) grad_input[argmax[i]] += grad_out[i];
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank4(a.shape(), "concat_channels");
    require_rank4(b.shape(), "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
        throw ShapeError("concat_channels: batch/spatial mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
    const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), plane = a.dim(2) * a.dim(3);
    Tensor<T> out({n, ca + cb, a.dim(2), a.dim(3)});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(a.raw() + i * ca * plane, ca * plane, out.raw() + i * (ca + cb) * plane);
        std::copy_n(b.raw() + i * cb * plane, cb * plane, out.raw() + (i * (ca + cb) + ca) * plane);
    }
    return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t first, std::size_t count) {
    require_rank4(x.shape(), "slice_channels");
    if (count == 0 || first + count > x.dim(1)) {
        throw ShapeError("slice_channels: range [" + std::to_string(first) + ", " + std::to_string(first + count) +
                         ") outside " + std::to_string(x.dim(1)) + " channels");
    }
    const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    Tensor<T> out({n, count, x.dim(2), x.dim(3)});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(x.raw() + (i * c + first) * plane, count * plane, out.raw() + i * count * plane);
    }
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (auto& v : out.data()) v = v < T(0) ? T(0) : v;  // NaN passes through
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (auto& v : out.data()) {
        // Split by sign so exp never overflows.
        if (v >= T(0)) {
            v = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            v = e / (T(1) + e);
        }
    }
    return out;
}

#define ITERSEG_INSTANTIATE_KERNELS(T)                                                                          \
    template Tensor<T> conv2d_same(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                       \
    template void conv2d_same_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*,        \
                                       Tensor<T>*, Tensor<T>*);                                                  \
    template Tensor<T> conv2d_stride2(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
    template void conv_transpose2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*,   \
                                            Tensor<T>*, Tensor<T>*);                                             \
    template PoolResult<T> maxpool2x2(const Tensor<T>&);                                                        \
    template void maxpool2x2_backward(const Tensor<T>&, const std::vector<std::size_t>&, Tensor<T>&);          \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                                     \
    template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);                              \
    template Tensor<T> relu(const Tensor<T>&);                                                                  \
    template Tensor<T> sigmoid(const Tensor<T>&);

ITERSEG_INSTANTIATE_KERNELS(float)
ITERSEG_INSTANTIATE_KERNELS(double)

}  // namespace iterseg::kernels
