#include <iostream>

#include "CLI11.hpp"
#include "iterseg/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"iterseg: iterative encoder-decoder segmentation"};
    app.require_subcommand(1);

    iterseg::CommandOptions options;
    std::uint64_t seed = 0;
    std::size_t max_iter = 0;
    std::string out, checkpoint, image, dataset, spec;

    using Command = int (*)(const iterseg::CommandOptions&, std::ostream&, std::ostream&);
    const std::pair<const char*, Command> commands[] = {
        {"train", iterseg::cmd_train},       {"infer", iterseg::cmd_infer},     {"evaluate", iterseg::cmd_evaluate},
        {"augment", iterseg::cmd_augment}, {"synth", iterseg::cmd_synth},
    };
    const char* help[] = {"Train a network and write a checkpoint", "Segment one image",
                          "Per-iteration DC/JC over the test split", "Materialize an augmented training corpus",
                          "Write a synthetic dataset"};
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < std::size(commands); ++i) {
        CLI::App* sub = app.add_subcommand(commands[i].first, help[i]);
        sub->add_option("--config", options.config, "Run configuration file")->required();
        sub->add_option("--seed", seed, "Override the seed");
        sub->add_option("--max-iter", max_iter, "Override max_iterations")->check(CLI::PositiveNumber);
        sub->add_option("--out", out, "Output directory (default runs/<timestamp>-<tag>)");
        sub->add_option("--checkpoint", checkpoint, "Checkpoint file");
        sub->add_option("--image", image, "Input image");
        sub->add_option("--dataset", dataset, "Dataset root");
        sub->add_option("--spec", spec, "Augmentation spec file");
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : iterseg::kExitConfig;
    }

    for (std::size_t i = 0; i < subs.size(); ++i) {
        CLI::App* sub = subs[i];
        if (!sub->parsed()) continue;
        if (sub->count("--seed")) options.seed = seed;
        if (sub->count("--max-iter")) options.max_iterations = max_iter;
        if (sub->count("--out")) options.out = out;
        if (sub->count("--checkpoint")) options.checkpoint = checkpoint;
        if (sub->count("--image")) options.image = image;
        if (sub->count("--dataset")) options.dataset = dataset;
        if (sub->count("--spec")) options.spec = spec;
        return commands[i].second(options, std::cout, std::cerr);
    }
    return iterseg::kExitFailure;
}
