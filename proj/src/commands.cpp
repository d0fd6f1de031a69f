#include "iterseg/commands.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <mutex>

#include "iterseg/augment.hpp"
#include "iterseg/checkpoint.hpp"
#include "iterseg/dataset.hpp"
#include "iterseg/engine.hpp"
#include "iterseg/parallel.hpp"
#include "iterseg/run_config.hpp"
#include "iterseg/synth.hpp"

namespace iterseg {
namespace fs = std::filesystem;

namespace {

RunConfig load_config(const CommandOptions& options) {
    if (options.config.empty()) throw ConfigError("--config is required");
    RunConfig config = RunConfig::load(options.config);
    if (options.seed) config.seed = *options.seed;
    if (options.max_iterations) config.max_iterations = *options.max_iterations;
    if (options.checkpoint) config.checkpoint = *options.checkpoint;
    if (options.image) config.image = *options.image;
    if (options.dataset) config.dataset_root = *options.dataset;
    if (options.spec) config.augment_spec = *options.spec;
    config.validate();
    return config;
}

fs::path output_dir(const CommandOptions& options, const RunConfig& config) {
    fs::path dir;
    if (options.out) {
        dir = *options.out;
    } else {
        const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        localtime_r(&now, &tm);
        char stamp[32];
        std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
        dir = fs::path("runs") / (std::string(stamp) + "-" + config.tag);
    }
    fs::create_directories(dir);
    return dir;
}

std::size_t train_count(std::size_t n, double fraction) {
    return static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
}

// Full corpus (synthetic or on disk) split into train and test.
SplitSamples load_corpus(const RunConfig& config, std::ostream& err) {
    const NetworkConfig& net = config.network;
    std::vector<Sample> samples;
    std::map<std::string, Split> split;
    if (config.dataset_root.empty()) {
        samples = synth_corpus(config.synth_count, net.input_height, net.input_width, config.synth_family, config.seed);
    } else {
        LoadOptions load;
        load.resolution = Resolution{net.input_height, net.input_width};
        load.convert_color = config.convert_color;
        LoadResult loaded = load_dataset(config.dataset_root, load);
        for (const auto& w : loaded.warnings) err << "warning: " << w << "\n";
        samples = std::move(loaded.samples);
        const fs::path manifest = config.dataset_root / "split.txt";
        if (fs::exists(manifest)) split = read_split_manifest(manifest);
    }
    if (split.empty()) {
        std::vector<std::string> ids;
        for (const auto& s : samples) ids.push_back(s.id);
        split = random_split(ids, train_count(ids.size(), config.train_fraction), config.seed);
    }
    return apply_split(std::move(samples), split);
}

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const CheckpointError& e) {
        err << "checkpoint error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const DivergenceError& e) {
        err << "numeric divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
}

GrayImage mask_image(const Tensor<float>& binary) {
    GrayImage image = to_gray8(binary);
    for (auto& p : image.pixels) p = p ? 255 : 0;
    return image;
}

}  // namespace

int cmd_train(const CommandOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunConfig config = load_config(options);
        SplitSamples corpus = load_corpus(config, err);
        std::vector<Sample> training = std::move(corpus.train);
        if (!config.augment_spec.empty()) {
            const AugmentationSpec spec = load_augmentation_spec(config.augment_spec);
            std::vector<Sample> expanded;
            for (const auto& s : training) {
                for (auto& v : augment(s, spec)) expanded.push_back(std::move(v));
            }
            training = std::move(expanded);
        }
        if (training.empty()) throw DataError("no training samples");
        const fs::path dir = output_dir(options, config);
        write_text(dir / "config.resolved", config.resolved());

        ParameterSet<float> params = build<float>(config.network, config.seed);
        const TrainResult result = train(params, training, config.training(), [&](const IterationTrace& epoch) {
            const auto& last = epoch.records.back();
            err << epoch.image_id << ": dice " << last.dice.value_or(0) << " loss " << last.loss.value_or(0) << "\n";
        });
        save_checkpoint(params, dir / "checkpoint.iseg");
        write_trace_csv(dir / "train_trace.csv", result.epochs);
        out << "checkpoint=" << (dir / "checkpoint.iseg").string() << "\n"
            << "trace=" << (dir / "train_trace.csv").string() << "\n"
            << "train_samples=" << training.size() << "\n"
            << "optimizer_steps=" << result.optimizer_steps << "\n";
        return kExitOk;
    });
}

int cmd_infer(const CommandOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunConfig config = load_config(options);
        if (config.checkpoint.empty()) throw ConfigError("no checkpoint given (--checkpoint or 'checkpoint' key)");
        if (config.image.empty()) throw ConfigError("no image given (--image or 'image' key)");
        const ParameterSet<float> params = load_checkpoint<float>(config.checkpoint, config.network);
        const Tensor<float> image = resize_bilinear(to_tensor(read_image(config.image, {config.convert_color})),
                                                    config.network.input_height, config.network.input_width);
        const IterationConfig iteration = config.iteration();
        InferOptions infer_options;
        infer_options.record_timing = config.record_timing;
        InferResult result = infer(params, image, iteration, infer_options);
        result.trace.image_id = config.image.stem().string();

        const fs::path dir = output_dir(options, config);
        write_png(dir / "mask.png", mask_image(binarize(result.map.values, iteration.binarize_threshold)));
        write_pgm(dir / "soft.pgm", to_gray16(result.map.values));
        write_trace_csv(dir / "trace.csv", {result.trace});
        const auto& last = result.trace.records.back();
        out << "iterations=" << result.trace.records.size() << "\n"
            << "converged=" << (last.conv_sum < iteration.threshold ? "true" : "false") << "\n"
            << "mask=" << (dir / "mask.png").string() << "\n";
        return kExitOk;
    });
}

int cmd_evaluate(const CommandOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunConfig config = load_config(options);
        if (config.checkpoint.empty()) throw ConfigError("no checkpoint given (--checkpoint or 'checkpoint' key)");
        const ParameterSet<float> params = load_checkpoint<float>(config.checkpoint, config.network);
        const SplitSamples corpus = load_corpus(config, err);
        if (corpus.test.empty()) throw DataError("test split is empty");
        const Evaluation eval = evaluate(params, corpus.test, config.iteration(), config.loss);

        std::vector<IterationTrace> rows = eval.traces;
        IterationRecord summary;
        summary.iteration = config.max_iterations;
        summary.dice = eval.mean_dice;
        summary.jaccard = eval.mean_jaccard;
        double loss = 0, conv = 0;
        for (const auto& t : eval.traces) {
            loss += t.records.back().loss.value_or(0);
            conv += t.records.back().conv_sum;
        }
        summary.loss = loss / static_cast<double>(eval.traces.size());
        summary.conv_sum = conv / static_cast<double>(eval.traces.size());
        rows.push_back({"mean", {summary}});

        const fs::path dir = output_dir(options, config);
        write_trace_csv(dir / "evaluate.csv", rows);
        std::ofstream curve(dir / "curve.csv", std::ios::binary | std::ios::trunc);
        if (!curve) throw DataError("cannot write curve.csv");
        curve << "iteration,mean_dice,mean_jaccard\r\n";
        for (const auto& p : eval.curve) {
            curve << p.iteration << ',' << format_double(p.mean_dice) << ',' << format_double(p.mean_jaccard) << "\r\n";
        }
        out << "images=" << corpus.test.size() << "\n"
            << "mean_dice=" << format_double(eval.mean_dice) << "\n"
            << "mean_jaccard=" << format_double(eval.mean_jaccard) << "\n";
        return kExitOk;
    });
}

int cmd_augment(const CommandOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunConfig config = load_config(options);
        if (config.dataset_root.empty()) throw ConfigError("augment needs a dataset (--dataset or 'dataset_root')");
        if (config.augment_spec.empty()) throw ConfigError("augment needs a spec (--spec or 'augment_spec')");
        const AugmentationSpec spec = load_augmentation_spec(config.augment_spec);
        LoadResult loaded = load_dataset(config.dataset_root, {std::nullopt, config.convert_color});
        for (const auto& w : loaded.warnings) err << "warning: " << w << "\n";

        std::vector<Sample> sources = std::move(loaded.samples);
        const fs::path manifest = config.dataset_root / "split.txt";
        if (fs::exists(manifest)) sources = apply_split(std::move(sources), read_split_manifest(manifest)).train;

        const fs::path dir = output_dir(options, config);
        fs::create_directories(dir / "images");
        fs::create_directories(dir / "masks");
        const auto grid = transform_grid(spec);
        parallel_for(sources.size(), [&](std::size_t i) {
            for (std::size_t g = 0; g < grid.size(); ++g) {
                const Sample v = apply_transform(sources[i], grid[g]);
                const std::string name = variant_id(sources[i].id, g) + ".png";
                write_png(dir / "images" / name, to_gray8(v.image));
                write_png(dir / "masks" / name, mask_image(v.mask.values()));
            }
        });
        std::map<std::string, Split> split;
        for (const auto& s : sources) {
            for (std::size_t g = 0; g < grid.size(); ++g) split[variant_id(s.id, g)] = Split::train;
        }
        write_split_manifest(dir / "split.txt", split);
        out << "source_images=" << sources.size() << "\n"
            << "variants_per_image=" << grid.size() << "\n"
            << "files=" << sources.size() * grid.size() << "\n";
        return kExitOk;
    });
}

int cmd_synth(const CommandOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunConfig config = load_config(options);
        const auto samples = synth_corpus(config.synth_count, config.network.input_height,
                                          config.network.input_width, config.synth_family, config.seed);
        const fs::path dir = output_dir(options, config);
        fs::create_directories(dir / "images");
        fs::create_directories(dir / "masks");
        std::vector<std::string> ids;
        for (const auto& s : samples) {
            write_png(dir / "images" / (s.id + ".png"), to_gray8(s.image));
            write_png(dir / "masks" / (s.id + ".png"), mask_image(s.mask.values()));
            ids.push_back(s.id);
        }
        write_split_manifest(dir / "split.txt", random_split(ids, train_count(ids.size(), config.train_fraction),
                                                             config.seed));
        out << "samples=" << samples.size() << "\n"
            << "dataset=" << dir.string() << "\n";
        return kExitOk;
    });
}

}  // namespace iterseg
