#include "iterseg/engine.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "iterseg/ops.hpp"
#include "iterseg/parallel.hpp"

namespace iterseg {

void IterationConfig::validate() const {
    if (std::isnan(threshold) || threshold < 0) throw ConfigError("threshold must be >= 0");
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (!(binarize_threshold > 0 && binarize_threshold < 1)) {
        throw ConfigError("binarize_threshold must lie in (0, 1)");
    }
}

IterationConfig IterationConfig::for_network(const NetworkConfig& network) {
    IterationConfig config;
    config.threshold = 0.001 * static_cast<double>(network.pixels());
    return config;
}

SegmentationMap<float> initial_map(const NetworkConfig& config) {
    return {Tensor<float>({1, 1, config.input_height, config.input_width}, 0.5f), 0};
}

double difference_sum(const Tensor<float>& current, const Tensor<float>& previous) {
    current.require_same_shape(previous, "difference_sum");
    double sum = 0;
    for (std::size_t i = 0; i < current.size(); ++i) {
        sum += std::abs(static_cast<double>(current[i]) - static_cast<double>(previous[i]));
    }
    return sum;
}

bool converged(const SegmentationMap<float>& current, const SegmentationMap<float>& previous,
               const IterationConfig& config) {
    return difference_sum(current.values, previous.values) < config.threshold;
}

Tensor<float> feedback(const SegmentationMap<float>& previous, const IterationConfig& config) {
    if (previous.iteration == 0 || !config.binarize_feedback) return previous.values;
    return binarize(previous.values, config.binarize_threshold);
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void fill_metrics(IterationRecord& record, const SegmentationMap<float>& output, const GroundTruthMask<float>& truth,
                  double soft_dice, double previous_dice, const IterationConfig& config, const LossConfig& loss) {
    const Tensor<float> hard = binarize(output.values, config.binarize_threshold);
    record.dice = dice<float>(hard.data(), truth.values().data());
    record.jaccard = jaccard(hard, truth);
    record.loss = iter_loss(soft_dice, previous_dice, loss);
}

}  // namespace

InferResult infer(const ParameterSet<float>& params, const Tensor<float>& image, const IterationConfig& config,
                  const InferOptions& options) {
    config.validate();
    InferResult result{initial_map(params.config()), {}};
    double previous_dice = options.truth ? dice(result.map, *options.truth) : 0.0;
    for (std::size_t t = 1; t <= config.max_iterations; ++t) {
        const auto start = Clock::now();
        SegmentationMap<float> output =
            forward(params, image, SegmentationMap<float>{feedback(result.map, config), result.map.iteration});
        IterationRecord record;
        record.iteration = t;
        record.conv_sum = difference_sum(output.values, result.map.values);
        if (options.truth) {
            const double soft = dice(output, *options.truth);
            fill_metrics(record, output, *options.truth, soft, previous_dice, config, options.loss);
            previous_dice = soft;
        }
        if (options.record_timing) record.ms = elapsed_ms(start);
        result.trace.records.push_back(record);
        result.map = std::move(output);
        if (record.conv_sum < config.threshold) break;
    }
    return result;
}

SampleGradients sample_gradients(const ParameterSet<float>& params, const Tensor<float>& image,
                                 const GroundTruthMask<float>& truth, const Tensor<float>& fed_back, double previous_dice,
                                 const LossConfig& loss, float loss_scale) {
    Graph<float> graph;
    const auto vars = bind_parameters(graph, params, true);
    // Image and fed-back map enter as constants: no gradient reaches them.
    const Var out = forward(graph, params, vars, graph.input(image), graph.input(fed_back));
    const Var d = ops::soft_dice(graph, out, truth.values());
    const Var l = ops::ratio_loss(graph, d, static_cast<float>(previous_dice), static_cast<float>(loss.epsilon));
    graph.backward(ops::scale(graph, l, loss_scale));

    SampleGradients result;
    result.grads.reserve(vars.size());
    for (Var v : vars) result.grads.push_back(graph.grad(v));
    result.output = {graph.value(out), 0};
    result.soft_dice = graph.value(d)[0];
    result.loss = graph.value(l)[0];
    return result;
}

void TrainConfig::validate() const {
    iteration.validate();
    loss.validate();
    sgd.validate();
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
}

namespace {

struct StepTotals {
    double dice = 0, jaccard = 0, loss = 0, conv_sum = 0, ms = 0;
    std::size_t count = 0;
};

struct SampleState {
    SegmentationMap<float> previous;
    double previous_dice = 0;
    bool active = true;
};

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    return order;
}

}  // namespace

TrainResult train(ParameterSet<float>& params, std::span<const Sample> dataset, const TrainConfig& config,
                  const std::function<void(const IterationTrace&)>& on_epoch) {
    config.validate();
    if (dataset.empty()) throw DataError("train: empty dataset");
    const NetworkConfig& net = params.config();
    TrainResult result;
    bool step_cap_hit = false;

    for (std::size_t epoch = 1; epoch <= config.epochs && !step_cap_hit; ++epoch) {
        std::vector<StepTotals> totals(config.iteration.max_iterations);
        const auto order = shuffled_order(dataset.size(), config.shuffle_seed + 0x9e3779b97f4a7c15ULL * epoch);

        for (std::size_t first = 0; first < order.size() && !step_cap_hit; first += config.batch_size) {
            const std::size_t batch = std::min(config.batch_size, order.size() - first);
            std::vector<SampleState> states(batch);
            for (std::size_t b = 0; b < batch; ++b) {
                states[b].previous = initial_map(net);
                states[b].previous_dice = dice(states[b].previous, dataset[order[first + b]].mask);
            }

            for (std::size_t t = 1; t <= config.iteration.max_iterations; ++t) {
                std::vector<std::size_t> active;
                for (std::size_t b = 0; b < batch; ++b) {
                    if (states[b].active) active.push_back(b);
                }
                if (active.empty()) break;
                const auto start = Clock::now();
                const float scale = 1.0f / static_cast<float>(active.size());

                std::vector<SampleGradients> results(active.size());
                parallel_for(active.size(), [&](std::size_t k) {
                    const SampleState& s = states[active[k]];
                    const Sample& sample = dataset[order[first + active[k]]];
                    results[k] = sample_gradients(params, sample.image, sample.mask,
                                                  feedback(s.previous, config.iteration), s.previous_dice, config.loss,
                                                  scale);
                });

                for (std::size_t k = 0; k < active.size(); ++k) {
                    if (!std::isfinite(results[k].loss)) {
                        throw DivergenceError("non-finite loss at sample '" + dataset[order[first + active[k]]].id +
                                              "', epoch " + std::to_string(epoch) + ", iteration " +
                                              std::to_string(t));
                    }
                }
                // Fixed-order reduction keeps the update independent of thread count.
                std::vector<Tensor<float>> grads = std::move(results[0].grads);
                for (std::size_t k = 1; k < active.size(); ++k) {
                    for (std::size_t p = 0; p < grads.size(); ++p) grads[p].add_(results[k].grads[p]);
                }
                sgd_step<float>(params.parameters(), grads, config.sgd);
                ++result.optimizer_steps;
                const double ms = config.record_timing ? elapsed_ms(start) : 0.0;

                StepTotals& tot = totals[t - 1];
                for (std::size_t k = 0; k < active.size(); ++k) {
                    SampleState& s = states[active[k]];
                    const Sample& sample = dataset[order[first + active[k]]];
                    SegmentationMap<float> output{std::move(results[k].output.values), static_cast<int>(t)};
                    const double conv = difference_sum(output.values, s.previous.values);
                    const Tensor<float> hard = binarize(output.values, config.iteration.binarize_threshold);
                    tot.dice += dice<float>(hard.data(), sample.mask.values().data());
                    tot.jaccard += jaccard(hard, sample.mask);
                    tot.loss += results[k].loss;
                    tot.conv_sum += conv;
                    tot.ms += ms / static_cast<double>(active.size());
                    ++tot.count;
                    s.previous = std::move(output);
                    s.previous_dice = results[k].soft_dice;
                    if (conv < config.iteration.threshold) s.active = false;
                }
                if (config.max_steps && result.optimizer_steps >= config.max_steps) {
                    step_cap_hit = true;
                    break;
                }
            }
        }

        IterationTrace summary{"epoch_" + std::to_string(epoch), {}};
        for (std::size_t t = 0; t < totals.size(); ++t) {
            const StepTotals& tot = totals[t];
            if (tot.count == 0) continue;
            const double n = static_cast<double>(tot.count);
            summary.records.push_back({t + 1, tot.dice / n, tot.jaccard / n, tot.loss / n, tot.conv_sum / n, tot.ms});
        }
        if (on_epoch) on_epoch(summary);
        result.epochs.push_back(std::move(summary));
    }
    return result;
}

Evaluation evaluate(const ParameterSet<float>& params, std::span<const Sample> samples, const IterationConfig& config,
                    const LossConfig& loss) {
    config.validate();
    Evaluation eval;
    eval.traces.resize(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        InferOptions options;
        options.truth = &samples[i].mask;
        options.loss = loss;
        IterationTrace trace = infer(params, samples[i].image, config, options).trace;
        trace.image_id = samples[i].id;
        while (trace.records.size() < config.max_iterations) {
            IterationRecord held = trace.records.back();
            held.iteration += 1;
            held.conv_sum = 0;
            held.ms = 0;
            // Same map against itself: D_t == D_(t-1).
            held.loss = -1.0;
            trace.records.push_back(held);
        }
        eval.traces[i] = std::move(trace);
    });
    if (samples.empty()) return eval;
    const double n = static_cast<double>(samples.size());
    for (std::size_t t = 0; t < config.max_iterations; ++t) {
        CurvePoint point{t + 1, 0, 0};
        for (const auto& trace : eval.traces) {
            point.mean_dice += trace.records[t].dice.value_or(0);
            point.mean_jaccard += trace.records[t].jaccard.value_or(0);
        }
        point.mean_dice /= n;
        point.mean_jaccard /= n;
        eval.curve.push_back(point);
    }
    eval.mean_dice = eval.curve.back().mean_dice;
    eval.mean_jaccard = eval.curve.back().mean_jaccard;
    return eval;
}

}  // namespace iterseg
