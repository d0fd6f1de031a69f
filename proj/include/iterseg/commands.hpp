#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

namespace iterseg {

/// Stable process exit codes.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitData = 3,
    kExitDivergence = 4,
};

/// Command-line overrides layered over the config file.
struct CommandOptions {
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> max_iterations;
    std::optional<std::filesystem::path> out;
    std::optional<std::filesystem::path> checkpoint;
    std::optional<std::filesystem::path> image;
    std::optional<std::filesystem::path> dataset;
    std::optional<std::filesystem::path> spec;
};

// Each command writes machine-readable `key=value` lines to `out` and
// diagnostics to `err`, and returns an ExitCode.

/// Writes checkpoint.iseg, train_trace.csv and config.resolved.
int cmd_train(const CommandOptions& options, std::ostream& out, std::ostream& err);
/// Writes mask.png (0/255), soft.pgm (16-bit) and trace.csv.
int cmd_infer(const CommandOptions& options, std::ostream& out, std::ostream& err);
/// Writes evaluate.csv (per image and step, plus a "mean" row) and curve.csv.
int cmd_evaluate(const CommandOptions& options, std::ostream& out, std::ostream& err);
/// Writes images/<id>_g<index>.png, masks/<id>_g<index>.png and split.txt.
int cmd_augment(const CommandOptions& options, std::ostream& out, std::ostream& err);
/// Writes a synthetic dataset: images/, masks/, split.txt.
int cmd_synth(const CommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace iterseg
