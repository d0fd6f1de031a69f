#include "iterseg/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <vector>

namespace iterseg {
namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename U>
U parse_number(const std::string& key, const std::string& value) {
    U out{};
    const char* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError("key '" + key + "': invalid number '" + value + "'");
    if constexpr (std::is_floating_point_v<U>) {
        if (std::isnan(out)) throw ConfigError("key '" + key + "': NaN is not allowed");
    }
    return out;
}

double parse_real(const std::string& key, const std::string& value) {
    if (value == "inf" || value == "+inf") return std::numeric_limits<double>::infinity();
    return parse_number<double>(key, value);
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + value + "'");
}

std::string join(const std::vector<std::size_t>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
    return out;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path resolve(const fs::path& base, const std::string& value) {
    fs::path p(value);
    return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& source) {
    std::map<std::string, std::string> entries;
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = source + ":" + std::to_string(line_no);
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (!entries.emplace(key, value).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    }
    return entries;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& source, const fs::path& base_dir) {
    RunConfig c;
    using Setter = std::function<void(const std::string& key, const std::string& value)>;
    auto size = [](std::size_t& field) -> Setter {
        return [&field](const std::string& k, const std::string& v) { field = parse_number<std::size_t>(k, v); };
    };
    auto real = [](double& field) -> Setter {
        return [&field](const std::string& k, const std::string& v) { field = parse_real(k, v); };
    };
    auto flag = [](bool& field) -> Setter {
        return [&field](const std::string& k, const std::string& v) { field = parse_bool(k, v); };
    };
    auto path = [&base_dir](fs::path& field) -> Setter {
        return [&field, &base_dir](const std::string&, const std::string& v) {
            field = v.empty() ? fs::path() : resolve(base_dir, v);
        };
    };
    const std::map<std::string, Setter> schema{
        {"input_height", size(c.network.input_height)},
        {"input_width", size(c.network.input_width)},
        {"stages", size(c.network.stages)},
        {"base_channels", size(c.network.base_channels)},
        {"merge_points",
         [&c](const std::string& k, const std::string& v) {
             c.network.merge_points.clear();
             for (const auto& item : split_list(v)) c.network.merge_points.push_back(parse_number<std::size_t>(k, item));
         }},
        {"threshold", [&c](const std::string& k, const std::string& v) { c.threshold = parse_real(k, v); }},
        {"max_iterations", size(c.max_iterations)},
        {"binarize_feedback", flag(c.binarize_feedback)},
        {"binarize_threshold", real(c.binarize_threshold)},
        {"epsilon", real(c.loss.epsilon)},
        {"learning_rate", real(c.sgd.learning_rate)},
        {"momentum", real(c.sgd.momentum)},
        {"batch_size", size(c.batch_size)},
        {"epochs", size(c.epochs)},
        {"max_steps", size(c.max_steps)},
        {"dataset_root", path(c.dataset_root)},
        {"synth_family", [&c](const std::string&, const std::string& v) { c.synth_family = parse_shape_family(v); }},
        {"synth_count", size(c.synth_count)},
        {"train_fraction", real(c.train_fraction)},
        {"augment_spec", path(c.augment_spec)},
        {"convert_color", flag(c.convert_color)},
        {"checkpoint", path(c.checkpoint)},
        {"image", path(c.image)},
        {"seed", [&c](const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
        {"tag", [&c](const std::string&, const std::string& v) { c.tag = v; }},
        {"record_timing", flag(c.record_timing)},
    };
    for (const auto& [key, value] : parse_key_values(text, source)) {
        auto it = schema.find(key);
        if (it == schema.end()) throw ConfigError(source + ": unknown key '" + key + "'");
        it->second(key, value);
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const fs::path& path) {
    return parse(read_file(path), path.string(), path.parent_path());
}

IterationConfig RunConfig::iteration() const {
    IterationConfig it = IterationConfig::for_network(network);
    if (threshold) it.threshold = *threshold;
    it.max_iterations = max_iterations;
    it.binarize_feedback = binarize_feedback;
    it.binarize_threshold = binarize_threshold;
    return it;
}

TrainConfig RunConfig::training() const {
    TrainConfig t;
    t.iteration = iteration();
    t.loss = loss;
    t.sgd = sgd;
    t.batch_size = batch_size;
    t.epochs = epochs;
    t.max_steps = max_steps;
    t.shuffle_seed = seed;
    t.record_timing = record_timing;
    return t;
}

void RunConfig::validate() const {
    network.validate();
    training().validate();
    if (!(train_fraction >= 0 && train_fraction <= 1)) throw ConfigError("train_fraction must lie in [0, 1]");
    if (tag.empty() || tag.find('/') != std::string::npos) throw ConfigError("tag must be a non-empty file name");
}

std::string RunConfig::resolved() const {
    const IterationConfig it = iteration();
    std::ostringstream out;
    out << "input_height = " << network.input_height << "\n"
        << "input_width = " << network.input_width << "\n"
        << "stages = " << network.stages << "\n"
        << "base_channels = " << network.base_channels << "\n"
        << "merge_points = " << join(network.merge_points) << "\n"
        << "threshold = " << (std::isinf(it.threshold) ? std::string("inf") : format_double(it.threshold)) << "\n"
        << "max_iterations = " << max_iterations << "\n"
        << "binarize_feedback = " << (binarize_feedback ? "true" : "false") << "\n"
        << "binarize_threshold = " << format_double(binarize_threshold) << "\n"
        << "epsilon = " << format_double(loss.epsilon) << "\n"
        << "learning_rate = " << format_double(sgd.learning_rate) << "\n"
        << "momentum = " << format_double(sgd.momentum) << "\n"
        << "batch_size = " << batch_size << "\n"
        << "epochs = " << epochs << "\n"
        << "max_steps = " << max_steps << "\n"
        << "dataset_root = " << dataset_root.string() << "\n"
        << "synth_family = " << to_string(synth_family) << "\n"
        << "synth_count = " << synth_count << "\n"
        << "train_fraction = " << format_double(train_fraction) << "\n"
        << "augment_spec = " << augment_spec.string() << "\n"
        << "convert_color = " << (convert_color ? "true" : "false") << "\n"
        << "checkpoint = " << checkpoint.string() << "\n"
        << "image = " << image.string() << "\n"
        << "seed = " << seed << "\n"
        << "tag = " << tag << "\n"
        << "record_timing = " << (record_timing ? "true" : "false") << "\n";
    return out.str();
}

AugmentationSpec parse_augmentation_spec(const std::string& text, const std::string& source) {
    auto entries = parse_key_values(text, source);
    AugmentationSpec spec;
    if (auto it = entries.find("preset"); it != entries.end()) {
        if (it->second == "ph2") spec = AugmentationSpec::ph2();
        else if (it->second == "drive") spec = AugmentationSpec::drive();
        else if (it->second == "identity") spec = AugmentationSpec::identity();
        else throw ConfigError(source + ": unknown preset '" + it->second + "'");
        entries.erase(it);
    }
    auto ints = [](const std::string& k, const std::string& v) {
        std::vector<int> out;
        for (const auto& item : split_list(v)) out.push_back(parse_number<int>(k, item));
        return out;
    };
    for (const auto& [key, value] : entries) {
        if (key == "flips") {
            spec.flips.clear();
            for (const auto& item : split_list(value)) spec.flips.push_back(parse_flip(item));
        } else if (key == "rotation_min") {
            spec.rotation_min = parse_real(key, value);
        } else if (key == "rotation_max") {
            spec.rotation_max = parse_real(key, value);
        } else if (key == "rotation_step") {
            spec.rotation_step = parse_real(key, value);
        } else if (key == "translate_x") {
            spec.translate_x = ints(key, value);
        } else if (key == "translate_y") {
            spec.translate_y = ints(key, value);
        } else {
            throw ConfigError(source + ": unknown augmentation key '" + key + "'");
        }
    }
    spec.validate();
    return spec;
}

AugmentationSpec load_augmentation_spec(const fs::path& path) {
    return parse_augmentation_spec(read_file(path), path.string());
}

}  // namespace iterseg
