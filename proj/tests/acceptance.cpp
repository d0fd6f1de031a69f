// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "iterseg/augment.hpp"
#include "iterseg/checkpoint.hpp"
#include "iterseg/commands.hpp"
#include "iterseg/engine.hpp"
#include "iterseg/kernels.hpp"
#include "iterseg/ops.hpp"
#include "iterseg/run_config.hpp"
#include "iterseg/synth.hpp"
#include "iterseg/trace.hpp"
#include "support.hpp"

using namespace iterseg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
    std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    failures += !pass;
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), format, args...);
    return buf;
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "iterseg_acceptance" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

int run_command(int (*command)(const CommandOptions&, std::ostream&, std::ostream&), const CommandOptions& options) {
    std::ostringstream out, err;
    const int code = command(options, out, err);
    if (code != kExitOk) std::fprintf(stderr, "%s", err.str().c_str());
    return code;
}

Tensor<double> off_kink(Shape shape, std::mt19937_64& rng) {
    auto t = testing::random_tensor<double>(std::move(shape), rng, 0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (auto& v : t.data()) v = sign(rng) ? v : -v;
    return t;
}

// Every differentiable op and the full stages=1, base=2, 8x8 network in
// double precision, central differences, relative error < 1e-4, < 60 s.
void gradient_suite() {
    const auto start = Clock::now();
    std::mt19937_64 rng(101);
    using testing::check_gradients;
    auto sq = [](Graph<double>& g, Var v) { return ops::sum(g, ops::square(g, v)); };
    double worst = 0;
    std::size_t checks = 0;
    auto record = [&](const testing::GradCheck& r) {
        worst = std::max(worst, r.worst_relative_error);
        checks += r.leaves_checked;
    };

    record(check_gradients({off_kink({2, 2, 4, 6}, rng), off_kink({3, 2, 3, 3}, rng), off_kink({3}, rng)},
                           [&](Graph<double>& g, std::span<const Var> v) {
                               return sq(g, ops::conv2d(g, v[0], v[1], v[2]));
                           }));
    record(check_gradients({off_kink({1, 3, 4, 4}, rng), off_kink({2, 3, 1, 1}, rng), off_kink({2}, rng)},
                           [&](Graph<double>& g, std::span<const Var> v) {
                               return sq(g, ops::conv2d_1x1(g, v[0], v[1], v[2]));
                           }));
    record(check_gradients({off_kink({2, 3, 3, 2}, rng), off_kink({3, 2, 3, 3}, rng), off_kink({2}, rng)},
                           [&](Graph<double>& g, std::span<const Var> v) {
                               return sq(g, ops::conv_transpose2d(g, v[0], v[1], v[2]));
                           }));
    record(check_gradients({off_kink({1, 2, 4, 6}, rng)}, [&](Graph<double>& g, std::span<const Var> v) {
        return sq(g, ops::maxpool2x2(g, v[0]));
    }));
    record(check_gradients({off_kink({1, 2, 3, 3}, rng), off_kink({1, 1, 3, 3}, rng)},
                           [&](Graph<double>& g, std::span<const Var> v) {
                               return sq(g, ops::relu(g, ops::concat_channels(g, v[0], v[1])));
                           }));
    record(check_gradients({off_kink({1, 1, 3, 4}, rng)}, [&](Graph<double>& g, std::span<const Var> v) {
        return ops::sum(g, ops::scale(g, ops::sigmoid(g, v[0]), 1.3));
    }));
    record(check_gradients({off_kink({2, 1, 3, 3}, rng)}, [&](Graph<double>& g, std::span<const Var> v) {
        return sq(g, ops::sigmoid(g, ops::standardize(g, v[0], 1e-6)));
    }));
    Tensor<double> target({1, 1, 4, 4});
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = (i * 7) % 3 == 0 ? 1 : 0;
    record(check_gradients({testing::random_tensor<double>({1, 1, 4, 4}, rng, 0.05, 0.95)},
                           [&](Graph<double>& g, std::span<const Var> v) {
                               return ops::ratio_loss(g, ops::soft_dice(g, v[0], target), 0.45, 1e-6);
                           }));

    NetworkConfig net;
    net.input_height = net.input_width = 8;
    net.stages = 1;
    net.base_channels = 2;
    net.merge_points = {1};
    const auto probe = testing::smooth_network_case(net, 1e-2, 1);
    record(check_gradients(probe.leaves(), [&](Graph<double>& g, std::span<const Var> v) { return probe.loss(g, v); }));

    const double elapsed = seconds_since(start);
    report(worst < 1e-4 && elapsed < 60, "gradient suite",
           fmt("%zu tensors checked, worst relative error %.3g (< 1e-4), %.2f s (< 60 s)", checks, worst, elapsed));
}

// 200 random conv2d / transposed conv / maxpool cases against loop oracles,
// plus the transposed-conv adjointness identity.
void convolution_oracle() {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<std::size_t> small(1, 4), half(1, 6);
    double worst = 0;
    for (int c = 0; c < 200; ++c) {
        const std::size_t n = small(rng), ci = small(rng), co = small(rng), h = 2 * half(rng), w = 2 * half(rng);
        const auto x = testing::random_tensor<float>({n, ci, h, w}, rng);
        const auto b = testing::random_tensor<float>({co}, rng);
        switch (c % 3) {
            case 0: {
                const auto k = testing::random_tensor<float>({co, ci, 3, 3}, rng);
                worst = std::max(worst, testing::max_abs_diff(kernels::conv2d_same(x, k, b),
                                                              testing::naive_conv2d_same(x, k, b)));
                break;
            }
            case 1: {
                const auto k = testing::random_tensor<float>({ci, co, 3, 3}, rng);
                worst = std::max(worst, testing::max_abs_diff(kernels::conv_transpose2d(x, k, b),
                                                              testing::naive_conv_transpose2d(x, k, b)));
                break;
            }
            default:
                worst = std::max(worst, testing::max_abs_diff(kernels::maxpool2x2(x).output, testing::naive_maxpool2x2(x)));
        }
    }
    report(worst < 1e-5, "convolution oracle", fmt("200 cases, max abs deviation %.3g (< 1e-5)", worst));

    double adjoint = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = small(rng), ci = small(rng), co = small(rng), h = half(rng), w = half(rng);
        const auto x = testing::random_tensor<float>({n, ci, h, w}, rng);
        const auto y = testing::random_tensor<float>({n, co, 2 * h, 2 * w}, rng);
        const auto k = testing::random_tensor<float>({ci, co, 3, 3}, rng);
        const double lhs = testing::dot(kernels::conv_transpose2d(x, k, Tensor<float>({co})), y);
        const double rhs = testing::dot(x, kernels::conv2d_stride2(y, k));
        adjoint = std::max(adjoint, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }
    report(adjoint < 1e-5, "transposed conv adjointness",
           fmt("<T x, y> vs <x, T* y> over 20 shapes, max relative gap %.3g (< 1e-5)", adjoint));
}

// 1,000 random mask pairs against set arithmetic; JC = DC / (2 - DC); the
// iteration loss against its direct formula.
void metric_oracles() {
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<std::size_t> len(1, 500);
    std::uniform_real_distribution<double> density(0, 1);
    double dc_err = 0, jc_err = 0, identity_err = 0;
    for (int pair = 0; pair < 1000; ++pair) {
        const std::size_t n = len(rng);
        std::bernoulli_distribution pa(density(rng)), pb(density(rng));
        std::vector<float> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = pa(rng) ? 1.0f : 0.0f;
            b[i] = pb(rng) ? 1.0f : 0.0f;
        }
        const auto oracle = testing::set_scores(a, b);
        const double dc = dice<float>(a, b), jc = jaccard<float>(a, b);
        dc_err = std::max(dc_err, std::abs(dc - oracle.dice));
        jc_err = std::max(jc_err, std::abs(jc - oracle.jaccard));
        identity_err = std::max(identity_err, std::abs(jc - dc / (2 - dc)));
    }
    report(dc_err <= 1e-9 && jc_err <= 1e-9 && identity_err <= 1e-9, "metric oracles",
           fmt("1000 pairs, max |DC - set| %.3g, max |JC - set| %.3g, max |JC - DC/(2-DC)| %.3g (all <= 1e-9)", dc_err,
               jc_err, identity_err));

    const LossConfig cfg;
    double loss_err = 0;
    for (int i = 0; i < 1000; ++i) {
        const double dt = density(rng), dp = density(rng);
        loss_err = std::max(loss_err, std::abs(iter_loss(dt, dp, cfg) - (-(dt + 1e-6) / (dp + 1e-6))));
    }
    const double equal = iter_loss(0.6180339, 0.6180339, cfg);
    report(loss_err <= 1e-12 && equal == -1.0, "iteration loss",
           fmt("1000 random (D_t, D_t-1), max deviation %.3g; D_t = D_t-1 gives %.17g", loss_err, equal));
}

std::size_t count_files(const fs::path& dir) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) n += e.is_regular_file();
    return n;
}

// Materialize both presets on disk through the augment command and count.
void augmentation_arithmetic() {
    struct Case {
        const char* preset;
        std::size_t train_images;
        std::size_t per_image;
        std::size_t files;
    };
    for (const Case c : {Case{"ph2", 40, 900, 36000}, Case{"drive", 20, 1300, 26000}}) {
        const fs::path dir = scratch(std::string("augment_") + c.preset);
        std::ofstream(dir / "run.cfg") << "input_height = 8\ninput_width = 8\nstages = 1\nbase_channels = 1\n"
                                          "merge_points = 1\nsynth_family = disk\nsynth_count = "
                                       << 2 * c.train_images << "\ntrain_fraction = 0.5\nseed = 3\n";
        std::ofstream(dir / "spec.txt") << "preset = " << c.preset << "\n";
        CommandOptions options;
        options.config = dir / "run.cfg";
        options.out = dir / "data";
        const bool synth_ok = run_command(cmd_synth, options) == kExitOk;
        options.dataset = dir / "data";
        options.spec = dir / "spec.txt";
        options.out = dir / "augmented";
        const bool augment_ok = synth_ok && run_command(cmd_augment, options) == kExitOk;
        const std::size_t grid = load_augmentation_spec(dir / "spec.txt").variant_count();
        const std::size_t images = augment_ok ? count_files(dir / "augmented" / "images") : 0;
        const std::size_t masks = augment_ok ? count_files(dir / "augmented" / "masks") : 0;
        report(grid == c.per_image && images == c.files && masks == c.files,
               std::string("augmentation arithmetic (") + c.preset + ")",
               fmt("%zu variants/image (expected %zu); %zu train images -> %zu image files, %zu mask files (expected "
                   "%zu)",
                   grid, c.per_image, c.train_images, images, masks, c.files));
        fs::remove_all(dir);
    }
}

// Train on 48 of 64 low-contrast blobs at 64x80 and evaluate the other 16.
void iterative_improvement() {
    const fs::path dir = scratch("improvement");
    std::ofstream(dir / "run.cfg") << "input_height = 64\ninput_width = 80\nstages = 2\nbase_channels = 8\n"
                                      "merge_points = 1,2\nsynth_family = blob\nsynth_count = 64\n"
                                      "train_fraction = 0.75\nlearning_rate = 0.01\nmomentum = 0.9\n"
                                      "batch_size = 4\nepochs = 15\nmax_iterations = 8\nseed = 2024\n";
    CommandOptions options;
    options.config = dir / "run.cfg";
    options.out = dir / "train";
    const auto start = Clock::now();
    const bool trained = run_command(cmd_train, options) == kExitOk;
    const double train_seconds = seconds_since(start);
    options.checkpoint = dir / "train" / "checkpoint.iseg";
    options.out = dir / "evaluate";
    const bool evaluated = trained && run_command(cmd_evaluate, options) == kExitOk;
    if (!evaluated) {
        report(false, "iterative improvement", "train or evaluate command failed");
        return;
    }
    std::ifstream in(dir / "evaluate" / "curve.csv", std::ios::binary);
    const auto rows = parse_csv(in);
    fs::copy_file(dir / "evaluate" / "curve.csv", "iterative_improvement_curve.csv",
                  fs::copy_options::overwrite_existing);
    if (rows.size() < 4) {
        report(false, "iterative improvement", "curve has fewer than 3 iterations");
        return;
    }
    std::string curve;
    for (std::size_t i = 1; i < rows.size(); ++i) curve += (i > 1 ? " " : "") + rows[i][1].substr(0, 6);
    const double dc1 = std::stod(rows[1][1]), dc3 = std::stod(rows[3][1]);
    report(dc3 >= dc1 - 0.005 && dc1 >= 0.85 && train_seconds <= 900, "iterative improvement",
           fmt("16 test blobs: DC@1 %.4f (>= 0.85), DC@3 %.4f (>= DC@1 - 0.005); training %.0f s (<= 900 s); "
               "curve [%s] in iterative_improvement_curve.csv",
               dc1, dc3, train_seconds, curve.c_str()));
}

// The stopping rule: identical maps always stop, the loop stops at the first
// step whose difference sum is below Th, and never runs past the cap.
void convergence_rule() {
    std::mt19937_64 rng(404);
    bool identical_ok = true;
    for (int trial = 0; trial < 200; ++trial) {
        const auto values = testing::random_tensor<float>({1, 1, 8, 10}, rng, 0, 1);
        const SegmentationMap<float> a{values, 1}, b{values, 2};
        IterationConfig cfg;
        cfg.threshold = std::pow(10.0, std::uniform_real_distribution<double>(-12, 6)(rng));
        identical_ok = identical_ok && converged(b, a, cfg);
    }

    NetworkConfig net;
    net.input_height = 16;
    net.input_width = 20;
    net.stages = 2;
    net.base_channels = 4;
    const auto constant = testing::constant_network<float>(net, 0.7f);
    const auto image = synth_corpus(1, 16, 20, ShapeFamily::blob, 1)[0].image;
    IterationConfig tiny;
    tiny.threshold = 1e-9;
    const auto fixed = infer(constant, image, tiny);
    const bool fixed_ok = fixed.trace.records.size() == 2 && fixed.trace.records[1].conv_sum == 0.0;

    bool rule_ok = true, cap_ok = true;
    std::size_t runs = 0;
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const auto params = build<float>(net, seed);
        for (double th : {0.0, 1.0, 20.0, 1e9}) {
            for (std::size_t cap : {1, 3, 8}) {
                IterationConfig cfg;
                cfg.threshold = th;
                cfg.max_iterations = cap;
                const auto trace = infer(params, image, cfg).trace;
                ++runs;
                cap_ok = cap_ok && !trace.records.empty() && trace.records.size() <= cap;
                for (std::size_t t = 0; t + 1 < trace.records.size(); ++t) {
                    rule_ok = rule_ok && trace.records[t].conv_sum >= th;
                }
                const auto& last = trace.records.back();
                rule_ok = rule_ok && (last.conv_sum < th || trace.records.size() == cap);
            }
        }
    }
    report(identical_ok && fixed_ok && rule_ok && cap_ok, "convergence rule",
           fmt("identical maps stop for 200 thresholds in [1e-12, 1e6]: %s; constant network stops at t=2 with sum 0: "
               "%s; %zu inference runs stop at the first sum < Th: %s, never exceed max_iterations: %s",
               identical_ok ? "yes" : "no", fixed_ok ? "yes" : "no", runs, rule_ok ? "yes" : "no",
               cap_ok ? "yes" : "no"));
}

// A single 64x80 disk: final-iteration DC >= 0.95 within 200 optimizer steps.
void overfit() {
    NetworkConfig net;
    net.input_height = 64;
    net.input_width = 80;
    net.stages = 2;
    net.base_channels = 8;
    const auto data = synth_corpus(1, 64, 80, ShapeFamily::disk, 77);
    auto params = build<float>(net, 77);
    TrainConfig cfg;
    cfg.iteration = IterationConfig::for_network(net);
    cfg.batch_size = 1;
    cfg.max_steps = 200;
    // A single sample gives no batch averaging; at the default 0.01 the 1/D_(t-1)
    // factor in the loss can blow the first epoch up into a constant output.
    cfg.sgd.learning_rate = 0.002;
    std::size_t steps = 0;
    double best = 0;
    std::size_t reached_at = 0;
    while (steps < 200) {
        TrainConfig round = cfg;
        round.max_steps = 200 - steps;
        steps += train(params, data, round).optimizer_steps;
        const auto r = infer(params, data[0].image, cfg.iteration);
        const double dc = dice<float>(binarize(r.map.values, 0.5).data(), data[0].mask.values().data());
        best = std::max(best, dc);
        if (dc >= 0.95) {
            reached_at = steps;
            break;
        }
    }
    report(reached_at > 0, "overfit sanity",
           reached_at ? fmt("DC %.4f >= 0.95 after %zu optimizer steps (<= 200)", best, reached_at)
                      : fmt("best DC %.4f after %zu steps", best, steps));
}

// Two identical train/infer/evaluate runs give byte-identical artifacts.
void determinism() {
    const fs::path dir = scratch("determinism");
    std::ofstream(dir / "run.cfg") << "input_height = 32\ninput_width = 40\nstages = 2\nbase_channels = 4\n"
                                      "synth_family = blob\nsynth_count = 12\ntrain_fraction = 0.75\n"
                                      "epochs = 2\nbatch_size = 3\nmax_iterations = 4\nseed = 99\n";
    bool ok = true;
    for (const char* run : {"a", "b"}) {
        CommandOptions options;
        options.config = dir / "run.cfg";
        options.out = dir / run / "train";
        ok = ok && run_command(cmd_train, options) == kExitOk;
        options.checkpoint = dir / run / "train" / "checkpoint.iseg";
        options.out = dir / run / "evaluate";
        ok = ok && run_command(cmd_evaluate, options) == kExitOk;
    }
    std::size_t compared = 0, identical = 0;
    for (const char* file : {"train/checkpoint.iseg", "train/train_trace.csv", "train/config.resolved",
                             "evaluate/evaluate.csv", "evaluate/curve.csv"}) {
        ++compared;
        identical += ok && slurp(dir / "a" / file) == slurp(dir / "b" / file) && !slurp(dir / "a" / file).empty();
    }
    report(ok && identical == compared, "determinism",
           fmt("%zu/%zu artifacts byte-identical across two runs (checkpoint, train trace, resolved config, evaluate "
               "and curve CSVs)",
               identical, compared));
}

}  // namespace

int main() {
    const auto start = Clock::now();
    gradient_suite();
    convolution_oracle();
    metric_oracles();
    augmentation_arithmetic();
    iterative_improvement();
    convergence_rule();
    overfit();
    determinism();
    std::printf("%s: %d failing criteria, %.0f s total\n", failures ? "FAIL" : "PASS", failures, seconds_since(start));
    return failures ? 1 : 0;
}
