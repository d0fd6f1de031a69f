#include "iterseg/metrics.hpp"

#include <cmath>

namespace iterseg {

template <typename T>
GroundTruthMask<T>::GroundTruthMask(Tensor<T> values) : values_(std::move(values)) {
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (values_[i] != T(0) && values_[i] != T(1)) {
            throw DataError("ground-truth mask is not binary: value " + std::to_string(values_[i]) + " at index " +
                            std::to_string(i));
        }
    }
}

void LossConfig::validate() const {
    if (!(epsilon > 0) || !std::isfinite(epsilon)) {
        throw ConfigError("epsilon must be a finite value > 0, got " + std::to_string(epsilon));
    }
}

namespace {

template <typename T>
void require_equal_size(std::span<const T> a, std::span<const T> b, const char* what) {
    if (a.size() != b.size()) {
        throw ShapeError(std::string(what) + ": prediction has " + std::to_string(a.size()) + " pixels, truth has " +
                         std::to_string(b.size()));
    }
}

}  // namespace

template <typename T>
double dice(std::span<const T> prediction, std::span<const T> truth) {
    require_equal_size(prediction, truth, "dice");
    double overlap = 0, truth_sq = 0, pred_sq = 0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const double p = prediction[i], y = truth[i];
        overlap += p * y;
        truth_sq += y * y;
        pred_sq += p * p;
    }
    const double denom = truth_sq + pred_sq;
    return denom == 0 ? 1.0 : 2.0 * overlap / denom;
}

template <typename T>
double jaccard(std::span<const T> prediction, std::span<const T> truth) {
    require_equal_size(prediction, truth, "jaccard");
    std::size_t both = 0, either = 0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const T p = prediction[i], y = truth[i];
        if ((p != T(0) && p != T(1)) || (y != T(0) && y != T(1))) {
            throw DataError("jaccard: non-binary value at index " + std::to_string(i));
        }
        const bool a = p == T(1), b = y == T(1);
        both += a && b;
        either += a || b;
    }
    return either == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(either);
}

double iter_loss(double d_t, double d_prev, const LossConfig& config) {
    config.validate();
    return -(d_t + config.epsilon) / (d_prev + config.epsilon);
}

template <typename T>
Tensor<T> binarize(const Tensor<T>& values, double threshold) {
    Tensor<T> out = values;
    for (auto& v : out.data()) v = static_cast<double>(v) >= threshold ? T(1) : T(0);
    return out;
}

#define ITERSEG_INSTANTIATE_METRICS(T)                                     \
    template class GroundTruthMask<T>;                                     \
    template double dice(std::span<const T>, std::span<const T>);          \
    template double jaccard(std::span<const T>, std::span<const T>);       \
    template Tensor<T> binarize(const Tensor<T>&, double);

ITERSEG_INSTANTIATE_METRICS(float)
ITERSEG_INSTANTIATE_METRICS(double)

}  // namespace iterseg
