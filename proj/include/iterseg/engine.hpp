#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "iterseg/dataset.hpp"
#include "iterseg/metrics.hpp"
#include "iterseg/network.hpp"
#include "iterseg/optim.hpp"
#include "iterseg/trace.hpp"

namespace iterseg {

struct IterationConfig {
    /// Stop once sum_i |S_i^t - S_i^(t-1)| < threshold. +inf stops after one step.
    double threshold = 0;
    std::size_t max_iterations = 8;
    bool binarize_feedback = true;
    double binarize_threshold = 0.5;

    void validate() const;

    /// Defaults with threshold = 0.001 * pixel count.
    static IterationConfig for_network(const NetworkConfig& network);
};

/// Constant 0.5 map at the network resolution, iteration 0.
SegmentationMap<float> initial_map(const NetworkConfig& config);

/// sum_i |a_i - b_i|, accumulated in double.
double difference_sum(const Tensor<float>& current, const Tensor<float>& previous);

/// True iff difference_sum(current, previous) < threshold.
bool converged(const SegmentationMap<float>& current, const SegmentationMap<float>& previous,
               const IterationConfig& config);

/// Network input for the next step. The t = 0 map passes through unchanged;
/// later maps are binarized when binarize_feedback is set.
Tensor<float> feedback(const SegmentationMap<float>& previous, const IterationConfig& config);

struct InferResult {
    SegmentationMap<float> map;
    IterationTrace trace;
};

struct InferOptions {
    const GroundTruthMask<float>* truth = nullptr;  // fills dice/jaccard/loss when set
    LossConfig loss;
    bool record_timing = false;
};

/// Runs forward passes from initial_map until converged() or max_iterations.
/// Trace dice/jaccard are computed on the prediction binarized at
/// binarize_threshold; loss is the ratio of soft dice values.
InferResult infer(const ParameterSet<float>& params, const Tensor<float>& image, const IterationConfig& config,
                  const InferOptions& options = {});

/// Gradient of one sample's ratio loss (scaled by loss_scale) for a given
/// fed-back map and previous soft dice.
struct SampleGradients {
    std::vector<Tensor<float>> grads;  // aligned with ParameterSet order
    SegmentationMap<float> output;
    double soft_dice = 0;
    double loss = 0;
};

SampleGradients sample_gradients(const ParameterSet<float>& params, const Tensor<float>& image,
                                 const GroundTruthMask<float>& truth, const Tensor<float>& fed_back, double previous_dice,
                                 const LossConfig& loss, float loss_scale = 1.0f);

struct TrainConfig {
    IterationConfig iteration;
    LossConfig loss;
    SgdConfig sgd;
    std::size_t batch_size = 4;
    std::size_t epochs = 1;
    /// Stop after this many optimizer steps; 0 means no cap.
    std::size_t max_steps = 0;
    std::uint64_t shuffle_seed = 0;
    bool record_timing = false;

    void validate() const;
};

/// Per-epoch means over the samples processed at each iteration step. The
/// trace id is "epoch_<n>".
struct TrainResult {
    std::vector<IterationTrace> epochs;
    std::size_t optimizer_steps = 0;
};

/// Mini-batch training over the refinement loop. For every batch and step t,
/// each still-active sample is fed its detached previous output, the mean
/// ratio loss over active samples is minimized with one SGD step, and samples
/// whose output stopped changing (converged()) drop out of the batch.
TrainResult train(ParameterSet<float>& params, std::span<const Sample> dataset, const TrainConfig& config,
                  const std::function<void(const IterationTrace&)>& on_epoch = {});

struct CurvePoint {
    std::size_t iteration;
    double mean_dice;
    double mean_jaccard;
};

struct Evaluation {
    /// One trace per image with exactly max_iterations rows. Steps after the
    /// loop stopped repeat the final map (conv_sum 0).
    std::vector<IterationTrace> traces;
    std::vector<CurvePoint> curve;
    double mean_dice = 0;  // final step, unweighted mean over images
    double mean_jaccard = 0;
};

Evaluation evaluate(const ParameterSet<float>& params, std::span<const Sample> samples, const IterationConfig& config,
                    const LossConfig& loss = {});

}  // namespace iterseg
