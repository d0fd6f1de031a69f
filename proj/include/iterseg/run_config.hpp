#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "iterseg/augment.hpp"
#include "iterseg/engine.hpp"
#include "iterseg/network.hpp"
#include "iterseg/synth.hpp"

namespace iterseg {

/// `key = value` lines; '#' starts a comment. Duplicate keys are rejected.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& source);

/// Everything a command needs, merged from one config file.
struct RunConfig {
    NetworkConfig network;
    std::optional<double> threshold;  // unset: 0.001 * pixels
    std::size_t max_iterations = 8;
    bool binarize_feedback = true;
    double binarize_threshold = 0.5;
    LossConfig loss;
    SgdConfig sgd;
    std::size_t batch_size = 4;
    std::size_t epochs = 1;
    std::size_t max_steps = 0;

    std::filesystem::path dataset_root;  // empty: synthetic corpus
    ShapeFamily synth_family = ShapeFamily::blob;
    std::size_t synth_count = 64;
    double train_fraction = 0.75;
    std::filesystem::path augment_spec;
    bool convert_color = false;

    std::filesystem::path checkpoint;
    std::filesystem::path image;
    std::uint64_t seed = 0;
    std::string tag = "run";
    bool record_timing = false;

    /// Unknown keys and invalid values raise ConfigError. Relative paths are
    /// resolved against `base_dir`.
    static RunConfig parse(const std::string& text, const std::string& source,
                           const std::filesystem::path& base_dir = {});
    static RunConfig load(const std::filesystem::path& path);

    IterationConfig iteration() const;
    TrainConfig training() const;
    void validate() const;

    /// Every key with its effective value, in a fixed order; parse(resolved())
    /// reproduces this config.
    std::string resolved() const;
};

/// Keys: preset (ph2 | drive | identity), flips, rotation_min, rotation_max,
/// rotation_step, translate_x, translate_y. Explicit keys override the preset.
AugmentationSpec parse_augmentation_spec(const std::string& text, const std::string& source);
AugmentationSpec load_augmentation_spec(const std::filesystem::path& path);

}  // namespace iterseg
