#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace iterseg {

/// One refinement step. Metric fields are empty when no ground truth exists.
struct IterationRecord {
    std::size_t iteration = 0;
    std::optional<double> dice;
    std::optional<double> jaccard;
    std::optional<double> loss;
    double conv_sum = 0;  // sum_i |S_i^t - S_i^(t-1)|
    double ms = 0;

    bool operator==(const IterationRecord&) const = default;
};

struct IterationTrace {
    std::string image_id;
    std::vector<IterationRecord> records;

    bool operator==(const IterationTrace&) const = default;
};

inline constexpr const char* kTraceHeader = "image_id,iteration,dice,jaccard,loss,conv_sum,ms";

/// RFC 4180 CSV with header kTraceHeader; doubles in shortest round-trip form.
void write_trace_csv(std::ostream& out, const std::vector<IterationTrace>& traces);
void write_trace_csv(const std::filesystem::path& path, const std::vector<IterationTrace>& traces);

/// Parses what write_trace_csv emits. Consecutive rows sharing an image_id
/// form one trace.
std::vector<IterationTrace> read_trace_csv(std::istream& in);
std::vector<IterationTrace> read_trace_csv(const std::filesystem::path& path);

/// Parses RFC 4180 records (quoted fields, doubled quotes, embedded newlines).
std::vector<std::vector<std::string>> parse_csv(std::istream& in);
std::string csv_field(const std::string& text);
std::string format_double(double value);

}  // namespace iterseg
