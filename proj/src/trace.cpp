#include "iterseg/trace.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "iterseg/error.hpp"

namespace iterseg {

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw Error("cannot format number");
    return std::string(buf, end);
}

std::string csv_field(const std::string& text) {
    if (text.find_first_of(",\"\r\n") == std::string::npos) return text;
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

namespace {

std::string optional_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::optional<double> parse_optional(const std::string& field, std::size_t row) {
    if (field.empty()) return std::nullopt;
    double v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw DataError("trace row " + std::to_string(row) + ": bad number '" + field + "'");
    }
    return v;
}

}  // namespace

void write_trace_csv(std::ostream& out, const std::vector<IterationTrace>& traces) {
    out << kTraceHeader << "\r\n";
    for (const auto& trace : traces) {
        for (const auto& r : trace.records) {
            out << csv_field(trace.image_id) << ',' << r.iteration << ',' << optional_field(r.dice) << ','
                << optional_field(r.jaccard) << ',' << optional_field(r.loss) << ',' << format_double(r.conv_sum)
                << ',' << format_double(r.ms) << "\r\n";
        }
    }
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<IterationTrace>& traces) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write trace '" + path.string() + "'");
    write_trace_csv(out, traces);
}

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, field_started = false;
    char c;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    while (in.get(c)) {
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"' && !field_started && field.empty()) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && in.peek() == '\n') in.get(c);
            end_field();
            rows.push_back(std::move(row));
            row.clear();
        } else {
            field += c;
            field_started = true;
        }
    }
    if (quoted) throw DataError("csv: unterminated quoted field");
    if (field_started || !field.empty() || !row.empty()) {
        end_field();
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<IterationTrace> read_trace_csv(std::istream& in) {
    const auto rows = parse_csv(in);
    if (rows.empty()) throw DataError("trace csv is empty");
    std::string header;
    for (std::size_t i = 0; i < rows[0].size(); ++i) header += (i ? "," : "") + rows[0][i];
    if (header != kTraceHeader) throw DataError("trace csv header mismatch: '" + header + "'");
    std::vector<IterationTrace> traces;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i];
        if (f.size() != 7) {
            throw DataError("trace row " + std::to_string(i) + ": expected 7 fields, got " + std::to_string(f.size()));
        }
        IterationRecord r;
        const auto it = parse_optional(f[1], i);
        if (!it) throw DataError("trace row " + std::to_string(i) + ": missing iteration");
        r.iteration = static_cast<std::size_t>(*it);
        r.dice = parse_optional(f[2], i);
        r.jaccard = parse_optional(f[3], i);
        r.loss = parse_optional(f[4], i);
        r.conv_sum = parse_optional(f[5], i).value_or(0);
        r.ms = parse_optional(f[6], i).value_or(0);
        if (traces.empty() || traces.back().image_id != f[0]) traces.push_back({f[0], {}});
        traces.back().records.push_back(r);
    }
    return traces;
}

std::vector<IterationTrace> read_trace_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open trace '" + path.string() + "'");
    return read_trace_csv(in);
}

}  // namespace iterseg
