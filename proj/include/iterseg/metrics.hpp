#pragma once

#include <span>

#include "iterseg/network.hpp"
#include "iterseg/tensor.hpp"

namespace iterseg {

/// Binary ground truth; construction rejects any value other than 0 or 1.
template <typename T>
class GroundTruthMask {
  public:
    GroundTruthMask() = default;
    explicit GroundTruthMask(Tensor<T> values);

    const Tensor<T>& values() const noexcept { return values_; }
    bool operator==(const GroundTruthMask&) const = default;

  private:
    Tensor<T> values_;
};

struct LossConfig {
    double epsilon = 1e-6;
    void validate() const;
};

/// 2 sum(y p) / (sum(y^2) + sum(p^2)) over soft predictions. Accumulated in double.
/// Both inputs identically zero gives 1.0.
template <typename T>
double dice(std::span<const T> prediction, std::span<const T> truth);

template <typename T>
double dice(const SegmentationMap<T>& prediction, const GroundTruthMask<T>& truth) {
    return dice<T>(prediction.values.data(), truth.values().data());
}

/// |A and B| / |A or B| for binary inputs; empty union gives 1.0.
template <typename T>
double jaccard(std::span<const T> prediction, std::span<const T> truth);

template <typename T>
double jaccard(const Tensor<T>& prediction, const GroundTruthMask<T>& truth) {
    return jaccard<T>(prediction.data(), truth.values().data());
}

/// -(d_t + eps) / (d_prev + eps).
double iter_loss(double d_t, double d_prev, const LossConfig& config);

/// 1 where value >= threshold, else 0.
template <typename T>
Tensor<T> binarize(const Tensor<T>& values, double threshold);

}  // namespace iterseg
