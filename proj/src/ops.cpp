#include "iterseg/ops.hpp"

#include <cmath>
#include <memory>

#include "iterseg/kernels.hpp"

namespace iterseg::ops {

template <typename T>
using Grads = std::span<Tensor<T>* const>;

namespace {

template <typename T>
Var same_conv(Graph<T>& g, const char* name, Var input, Var kernel, Var bias) {
    auto out = kernels::conv2d_same(g.value(input), g.value(kernel), g.value(bias));
    return g.record(name, {input, kernel, bias}, std::move(out),
                    [input, kernel](const Graph<T>& gr, const Tensor<T>&, const Tensor<T>& grad_out, Grads<T> grads) {
                        kernels::conv2d_same_backward(gr.value(input), gr.value(kernel), grad_out, grads[0], grads[1],
                                                      grads[2]);
                    });
}

template <typename T>
void require_kernel_size(const Tensor<T>& k, std::size_t size, const char* name) {
    if (k.rank() != 4 || k.dim(2) != size || k.dim(3) != size) {
        throw ShapeError(std::string(name) + ": kernel must be C_out x C_in x " + std::to_string(size) + " x " +
                         std::to_string(size) + ", got " + shape_string(k.shape()));
    }
}

}  // namespace

template <typename T>
Var conv2d(Graph<T>& g, Var input, Var kernel, Var bias) {
    require_kernel_size(g.value(kernel), 3, "conv2d");
    return same_conv(g, "conv2d", input, kernel, bias);
}

template <typename T>
Var conv2d_1x1(Graph<T>& g, Var input, Var kernel, Var bias) {
    require_kernel_size(g.value(kernel), 1, "conv2d_1x1");
    return same_conv(g, "conv2d_1x1", input, kernel, bias);
}

template <typename T>
Var conv_transpose2d(Graph<T>& g, Var input, Var kernel, Var bias) {
    auto out = kernels::conv_transpose2d(g.value(input), g.value(kernel), g.value(bias));
    return g.record("conv_transpose2d", {input, kernel, bias}, std::move(out),
                    [input, kernel](const Graph<T>& gr, const Tensor<T>&, const Tensor<T>& grad_out, Grads<T> grads) {
                        kernels::conv_transpose2d_backward(gr.value(input), gr.value(kernel), grad_out, grads[0],
                                                           grads[1], grads[2]);
                    });
}

template <typename T>
Var maxpool2x2(Graph<T>& g, Var input) {
    auto pooled = kernels::maxpool2x2(g.value(input));
    auto argmax = std::make_shared<const std::vector<std::size_t>>(std::move(pooled.argmax));
    return g.record("maxpool2x2", {input}, std::move(pooled.output),
                    [argmax](const Graph<T>&, const Tensor<T>&, const Tensor<T>& grad_out, Grads<T> grads) {
                        if (grads[0]) kernels::maxpool2x2_backward(grad_out, *argmax, *grads[0]);
                    });
}

template <typename T>
Var concat_channels(Graph<T>& g, Var a, Var b) {
    const std::size_t ca = g.value(a).rank() == 4 ? g.value(a).dim(1) : 0;
    auto out = kernels::concat_channels(g.value(a), g.value(b));
    const std::size_t cb = out.dim(1) - ca;
    return g.record("concat_channels", {a, b}, std::move(out),
                    [ca, cb](const Graph<T>&, const Tensor<T>&, const Tensor<T>& grad_out, Grads<T> grads) {
                        if (grads[0]) grads[0]->add_(kernels::slice_channels(grad_out, 0, ca));
                        if (grads[1]) grads[1]->add_(kernels::slice_channels(grad_out, ca, cb));
                    });
}

template <typename T>
Var relu(Graph<T>& g, Var x) {
    return g.record("relu", {x}, kernels::relu(g.value(x)),
                    [](const Graph<T>&, const Tensor<T>& out, const Tensor<T>& grad_out, Grads<T> grads) {
                        if (!grads[0]) return;
                        for (std::size_t i = 0; i < out.size(); ++i) {
                            if (out[i] > T(0)) (*grads[0])[i] += grad_out[i];
                        }
                    });
}

template <typename T>
Var sigmoid(Graph<T>& g, Var x) {
    return g.record("sigmoid", {x}, kernels::sigmoid(g.value(x)),
                    [](const Graph<T>&, const Tensor<T>& out, const Tensor<T>& grad_out, Grads<T> grads) {
                        if (!grads[0]) return;
                        for (std::size_t i = 0; i < out.size(); ++i) {
                            (*grads[0])[i] += grad_out[i] * out[i] * (T(1) - out[i]);
                        }
                    });
}

template <typename T>
Var sum(Graph<T>& g, Var x) {
    T total = 0;
    for (T v : g.value(x).data()) total += v;
    return g.record("sum", {x}, Tensor<T>({1}, total),
                    [](const Graph<T>&, const Tensor<T>&, const Tensor<T>& grad_out, Grads<T> grads) {
                        if (!grads[0]) return;
                        for (auto& v : grads[0]->data()) v += grad_out[0];
                    });
}

template <typename T>
Var square(Graph<T>& g, Var x) {
    Tensor<T> out = g.value(x);
    for (auto& v : out.data()) v *= v;
    return g.record("square", {x}, std::move(out),
                    [x](const Graph<T>& gr, const Tensor<T>&, const Tensor<T>& grad_out, Grads<T> grads) {
                        if (!grads[0]) return;
                        const auto& in = gr.value(x);
                        for (std::size_t i = 0; i < in.size(); ++i) (*grads[0])[i] += T(2) * in[i] * grad_out[i];
                    });
}

template <typename T>
Var scale(Graph<T>& g, Var x, T factor) {
    Tensor<T> out = g.value(x);
    for (auto& v : out.data()) v *= factor;
    return g.record("scale", {x}, std::move(out),
                    [factor](const Graph<T>&, const Tensor<T>&, const Tensor<T>& grad_out, Grads<T> grads) {
                        if (!grads[0]) return;
                        for (std::size_t i = 0; i < grad_out.size(); ++i) (*grads[0])[i] += factor * grad_out[i];
                    });
}

template <typename T>
Var standardize(Graph<T>& g, Var x, T epsilon) {
    const auto& in = g.value(x);
    if (in.rank() < 2) throw ShapeError("standardize: expected a batch, got " + shape_string(in.shape()));
    const std::size_t n = in.dim(0), m = in.size() / n;
    Tensor<T> out = in;
    std::vector<T> inv_std(n);
    for (std::size_t b = 0; b < n; ++b) {
        T* v = out.raw() + b * m;
        double mean = 0, var = 0;
        for (std::size_t i = 0; i < m; ++i) mean += v[i];
        mean /= static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) var += (v[i] - mean) * (v[i] - mean);
        var /= static_cast<double>(m);
        inv_std[b] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(epsilon)));
        for (std::size_t i = 0; i < m; ++i) v[i] = static_cast<T>((v[i] - mean) * inv_std[b]);
    }
    return g.record("standardize", {x}, std::move(out),
                    [n, m, inv_std](const Graph<T>&, const Tensor<T>& y, const Tensor<T>& grad_out, Grads<T> grads) {
                        if (!grads[0]) return;
                        // dx = (g - mean(g) - y * mean(g * y)) / s
                        for (std::size_t b = 0; b < n; ++b) {
                            const T* gy = grad_out.raw() + b * m;
                            const T* yv = y.raw() + b * m;
                            double mean_g = 0, mean_gy = 0;
                            for (std::size_t i = 0; i < m; ++i) {
                                mean_g += gy[i];
                                mean_gy += static_cast<double>(gy[i]) * yv[i];
                            }
                            mean_g /= static_cast<double>(m);
                            mean_gy /= static_cast<double>(m);
                            T* gx = grads[0]->raw() + b * m;
                            for (std::size_t i = 0; i < m; ++i) {
                                gx[i] += static_cast<T>((gy[i] - mean_g - yv[i] * mean_gy) * inv_std[b]);
                            }
                        }
                    });
}

template <typename T>
Var soft_dice(Graph<T>& g, Var prediction, const Tensor<T>& target) {
    const auto& p = g.value(prediction);
    if (p.size() != target.size()) {
        throw ShapeError("soft_dice: prediction " + shape_string(p.shape()) + " vs target " +
                         shape_string(target.shape()));
    }
    T overlap = 0, target_sq = 0, pred_sq = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        overlap += p[i] * target[i];
        target_sq += target[i] * target[i];
        pred_sq += p[i] * p[i];
    }
    const T denom = target_sq + pred_sq;
    const T dice = denom == T(0) ? T(1) : T(2) * overlap / denom;
    auto saved_target = std::make_shared<const Tensor<T>>(target);
    return g.record("soft_dice", {prediction}, Tensor<T>({1}, dice),
                    [prediction, saved_target, overlap, denom](const Graph<T>& gr, const Tensor<T>&,
                                                               const Tensor<T>& grad_out, Grads<T> grads) {
                        if (!grads[0] || denom <= T(0)) return;
                        const auto& pv = gr.value(prediction);
                        const auto& y = *saved_target;
                        // dD/dp_i = (2 y_i * denom - 2 overlap * 2 p_i) / denom^2
                        const T inv = T(1) / denom;
                        const T num = T(2) * overlap;
                        for (std::size_t i = 0; i < pv.size(); ++i) {
                            const T d = (T(2) * y[i] - num * inv * T(2) * pv[i]) * inv;
                            (*grads[0])[i] += grad_out[0] * d;
                        }
                    });
}

template <typename T>
Var ratio_loss(Graph<T>& g, Var d_t, T d_prev, T epsilon) {
    const auto& d = g.value(d_t);
    if (d.size() != 1) throw ShapeError("ratio_loss: d_t must be a scalar, got " + shape_string(d.shape()));
    const T denom = d_prev + epsilon;
    const T loss = -(d[0] + epsilon) / denom;
    return g.record("ratio_loss", {d_t}, Tensor<T>({1}, loss),
                    [denom](const Graph<T>&, const Tensor<T>&, const Tensor<T>& grad_out, Grads<T> grads) {
                        if (grads[0]) (*grads[0])[0] -= grad_out[0] / denom;
                    });
}

#define ITERSEG_INSTANTIATE_OPS(T)                                          \
    template Var conv2d(Graph<T>&, Var, Var, Var);                          \
    template Var conv2d_1x1(Graph<T>&, Var, Var, Var);                      \
    template Var conv_transpose2d(Graph<T>&, Var, Var, Var);                \
    template Var maxpool2x2(Graph<T>&, Var);                                \
    template Var concat_channels(Graph<T>&, Var, Var);                      \
    template Var relu(Graph<T>&, Var);                                      \
    template Var sigmoid(Graph<T>&, Var);                                   \
    template Var sum(Graph<T>&, Var);                                       \
    template Var square(Graph<T>&, Var);                                    \
    template Var scale(Graph<T>&, Var, T);                                  \
    template Var standardize(Graph<T>&, Var, T);                            \
    template Var soft_dice(Graph<T>&, Var, const Tensor<T>&);               \
    template Var ratio_loss(Graph<T>&, Var, T, T);

ITERSEG_INSTANTIATE_OPS(float)
ITERSEG_INSTANTIATE_OPS(double)

}  // namespace iterseg::ops
