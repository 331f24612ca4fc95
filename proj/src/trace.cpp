#include "hydra/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hydra/error.hpp"

namespace hydra {

namespace {

constexpr std::array<std::string_view, 15> kCsvColumns = {
    "timestamp",        "cpu_freq_mhz",         "user_time_pct",       "cpu_util_pct",
    "interrupts_per_s", "soft_interrupts_per_s", "process_count",      "cache_miss_ratio",
    "virtual_mem_pct",  "syscalls_per_s",       "instructions_per_s", "shared_mem_bytes",
    "measured_power_watts", "rapl_watts",        "workload_tag",
};

constexpr std::size_t kRequiredColumns = 12;  // timestamp + 11 statistics
constexpr double kJitterTolerance = 0.10;
constexpr std::size_t kMaxTagLength = 64;

std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
}

double parse_double(std::string_view text, std::size_t line, std::string_view field) {
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw ParseError(line, std::string(field), "not a number: '" + std::string(text) + "'");
    if (!std::isfinite(v))
        throw ParseError(line, std::string(field), "value is not finite");
    return v;
}

std::int64_t parse_integer(std::string_view text, std::size_t line, std::string_view field) {
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw ParseError(line, std::string(field), "not an integer: '" + std::string(text) + "'");
    return v;
}

void check_range(double v, double lo, double hi, std::size_t line, std::string_view field) {
    if (!(v >= lo && v <= hi)) {
        std::ostringstream msg;
        msg << "value " << v << " outside [" << lo << "," << hi << "]";
        throw ParseError(line, std::string(field), msg.str());
    }
}

void check_nonnegative(double v, std::size_t line, std::string_view field) {
    if (!(v >= 0.0) || !std::isfinite(v))
        throw ParseError(line, std::string(field), "value " + format_double(v) + " must be finite and >= 0");
}

void check_tag(const std::string& tag, std::size_t line) {
    if (tag.size() > kMaxTagLength)
        throw ParseError(line, "workload_tag", "longer than 64 characters");
    if (tag.find_first_of(",\"\n\r") != std::string::npos)
        throw ParseError(line, "workload_tag", "contains a comma, quote or newline");
}

double median_gap(const std::vector<StatSample>& samples) {
    if (samples.size() < 2) return 1.0;
    std::vector<double> gaps;
    gaps.reserve(samples.size() - 1);
    for (std::size_t i = 1; i < samples.size(); ++i)
        gaps.push_back(samples[i].timestamp - samples[i - 1].timestamp);
    auto mid = gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2);
    std::nth_element(gaps.begin(), mid, gaps.end());
    return *mid;
}

// Order- and gap-checks with file line numbers; line_of maps sample index to
// the line it came from.
template <typename LineOf>
void check_sequence(const std::vector<StatSample>& samples, double interval, LineOf line_of) {
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const double gap = samples[i].timestamp - samples[i - 1].timestamp;
        if (!(gap > 0.0))
            throw ParseError(line_of(i), "timestamp", "timestamps must be strictly increasing");
        if (std::abs(gap - interval) > kJitterTolerance * interval)
            throw ParseError(line_of(i), "timestamp",
                             "gap " + format_double(gap) + " s deviates more than 10% from the sample interval " +
                                 format_double(interval) + " s");
    }
}

void set_stat(StatSample& s, std::size_t col, std::string_view cell, std::size_t line) {
    const std::string_view name = kCsvColumns[col];
    switch (col) {
    case 0: s.timestamp = parse_double(cell, line, name); break;
    case 1: s.cpu_freq_mhz = parse_double(cell, line, name); break;
    case 2: s.user_time_pct = parse_double(cell, line, name); break;
    case 3: s.cpu_util_pct = parse_double(cell, line, name); break;
    case 4: s.interrupts_per_s = parse_double(cell, line, name); break;
    case 5: s.soft_interrupts_per_s = parse_double(cell, line, name); break;
    case 6: s.process_count = parse_integer(cell, line, name); break;
    case 7: s.cache_miss_ratio = parse_double(cell, line, name); break;
    case 8: s.virtual_mem_pct = parse_double(cell, line, name); break;
    case 9: s.syscalls_per_s = parse_double(cell, line, name); break;
    case 10: s.instructions_per_s = parse_double(cell, line, name); break;
    case 11: s.shared_mem_bytes = parse_double(cell, line, name); break;
    case 12: s.measured_power_watts = parse_double(cell, line, name); break;
    case 13: s.rapl_watts = parse_double(cell, line, name); break;
    case 14: s.workload_tag = std::string(cell); break;
    default: break;
    }
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cells;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

Trace parse_csv(std::istream& in, std::string server_id) {
    std::string line;
    std::size_t line_no = 0;
    // column index in file -> schema column (or npos for ignored columns)
    std::vector<std::size_t> mapping;
    bool have_header = false;
    std::vector<StatSample> samples;
    std::vector<std::size_t> sample_lines;

    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view view = trim(line);
        if (view.empty()) continue;
        const auto cells = split_csv(view);
        if (!have_header) {
            std::array<bool, kCsvColumns.size()> seen{};
            for (auto cell : cells) {
                const auto name = trim(cell);
                const auto it = std::find(kCsvColumns.begin(), kCsvColumns.end(), name);
                if (it == kCsvColumns.end()) {
                    mapping.push_back(std::string_view::npos);
                    continue;
                }
                const auto idx = static_cast<std::size_t>(it - kCsvColumns.begin());
                if (seen[idx]) throw ParseError(line_no, std::string(name), "duplicate column");
                seen[idx] = true;
                mapping.push_back(idx);
            }
            for (std::size_t c = 0; c < kRequiredColumns; ++c)
                if (!seen[c]) throw ParseError(line_no, std::string(kCsvColumns[c]), "required column missing from header");
            have_header = true;
            continue;
        }
        if (cells.size() != mapping.size())
            throw ParseError(line_no, "", "expected " + std::to_string(mapping.size()) + " cells, found " +
                                              std::to_string(cells.size()));
        StatSample s;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto col = mapping[c];
            if (col == std::string_view::npos) continue;
            const auto cell = trim(cells[c]);
            if (cell.empty()) {
                if (col < kRequiredColumns)
                    throw ParseError(line_no, std::string(kCsvColumns[col]), "required value is empty");
                continue;
            }
            set_stat(s, col, cell, line_no);
        }
        validate_sample(s, line_no);
        samples.push_back(std::move(s));
        sample_lines.push_back(line_no);
    }
    if (!have_header) throw ParseError(0, "", "empty input: no header");
    if (samples.empty()) throw ParseError(0, "", "empty input: no samples");

    const double interval = median_gap(samples);
    check_sequence(samples, interval, [&](std::size_t i) { return sample_lines[i]; });
    return Trace{std::move(server_id), interval, std::move(samples)};
}

template <typename T>
T json_get(const nlohmann::json& obj, std::string_view key, std::size_t line) {
    try {
        return obj.at(std::string(key)).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(line, std::string(key), e.what());
    }
}

std::optional<double> json_optional(const nlohmann::json& obj, std::string_view key, std::size_t line) {
    const auto it = obj.find(std::string(key));
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw ParseError(line, std::string(key), "expected a number");
    return it->get<double>();
}

Trace parse_jsonl(std::istream& in, std::string server_id) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<StatSample> samples;
    std::vector<std::size_t> sample_lines;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line_no, "", std::string("invalid JSON: ") + e.what());
        }
        if (!obj.is_object()) throw ParseError(line_no, "", "expected a JSON object");
        StatSample s;
        s.timestamp = json_get<double>(obj, "timestamp", line_no);
        s.cpu_freq_mhz = json_get<double>(obj, "cpu_freq_mhz", line_no);
        s.user_time_pct = json_get<double>(obj, "user_time_pct", line_no);
        s.cpu_util_pct = json_get<double>(obj, "cpu_util_pct", line_no);
        s.interrupts_per_s = json_get<double>(obj, "interrupts_per_s", line_no);
        s.soft_interrupts_per_s = json_get<double>(obj, "soft_interrupts_per_s", line_no);
        {
            const auto it = obj.find("process_count");
            if (it == obj.end() || !it->is_number_integer())
                throw ParseError(line_no, "process_count", "expected an integer");
            s.process_count = it->get<std::int64_t>();
        }
        s.cache_miss_ratio = json_get<double>(obj, "cache_miss_ratio", line_no);
        s.virtual_mem_pct = json_get<double>(obj, "virtual_mem_pct", line_no);
        s.syscalls_per_s = json_get<double>(obj, "syscalls_per_s", line_no);
        s.instructions_per_s = json_get<double>(obj, "instructions_per_s", line_no);
        s.shared_mem_bytes = json_get<double>(obj, "shared_mem_bytes", line_no);
        s.measured_power_watts = json_optional(obj, "measured_power_watts", line_no);
        s.rapl_watts = json_optional(obj, "rapl_watts", line_no);
        if (const auto it = obj.find("workload_tag"); it != obj.end() && !it->is_null()) {
            if (!it->is_string()) throw ParseError(line_no, "workload_tag", "expected a string");
            s.workload_tag = it->get<std::string>();
        }
        validate_sample(s, line_no);
        samples.push_back(std::move(s));
        sample_lines.push_back(line_no);
    }
    if (samples.empty()) throw ParseError(0, "", "empty input: no samples");
    const double interval = median_gap(samples);
    check_sequence(samples, interval, [&](std::size_t i) { return sample_lines[i]; });
    return Trace{std::move(server_id), interval, std::move(samples)};
}

void write_csv(std::ostream& out, const Trace& trace) {
    for (std::size_t c = 0; c < kCsvColumns.size(); ++c) out << (c ? "," : "") << kCsvColumns[c];
    out << '\n';
    for (const auto& s : trace.samples) {
        const auto f = s.features();
        out << format_double(s.timestamp);
        for (std::size_t i = 0; i < kNumFeatures; ++i) {
            out << ',';
            if (i == 5)
                out << s.process_count;
            else
                out << format_double(f[i]);
        }
        out << ',' << (s.measured_power_watts ? format_double(*s.measured_power_watts) : "");
        out << ',' << (s.rapl_watts ? format_double(*s.rapl_watts) : "");
        out << ',' << s.workload_tag.value_or("") << '\n';
    }
}

void write_jsonl(std::ostream& out, const Trace& trace) {
    for (const auto& s : trace.samples) {
        nlohmann::ordered_json obj;
        obj["timestamp"] = s.timestamp;
        obj["cpu_freq_mhz"] = s.cpu_freq_mhz;
        obj["user_time_pct"] = s.user_time_pct;
        obj["cpu_util_pct"] = s.cpu_util_pct;
        obj["interrupts_per_s"] = s.interrupts_per_s;
        obj["soft_interrupts_per_s"] = s.soft_interrupts_per_s;
        obj["process_count"] = s.process_count;
        obj["cache_miss_ratio"] = s.cache_miss_ratio;
        obj["virtual_mem_pct"] = s.virtual_mem_pct;
        obj["syscalls_per_s"] = s.syscalls_per_s;
        obj["instructions_per_s"] = s.instructions_per_s;
        obj["shared_mem_bytes"] = s.shared_mem_bytes;
        if (s.measured_power_watts) obj["measured_power_watts"] = *s.measured_power_watts;
        if (s.rapl_watts) obj["rapl_watts"] = *s.rapl_watts;
        if (s.workload_tag) obj["workload_tag"] = *s.workload_tag;
        out << obj.dump() << '\n';
    }
}

}  // namespace

std::array<double, kNumFeatures> StatSample::features() const noexcept {
    return {cpu_freq_mhz,     user_time_pct,    cpu_util_pct,     interrupts_per_s,
            soft_interrupts_per_s, static_cast<double>(process_count), cache_miss_ratio,
            virtual_mem_pct,  syscalls_per_s,   instructions_per_s, shared_mem_bytes};
}

void validate_sample(const StatSample& s, std::size_t line) {
    if (!std::isfinite(s.timestamp)) throw ParseError(line, "timestamp", "value is not finite");
    check_nonnegative(s.cpu_freq_mhz, line, "cpu_freq_mhz");
    check_range(s.user_time_pct, 0.0, 100.0, line, "user_time_pct");
    check_range(s.cpu_util_pct, 0.0, 100.0, line, "cpu_util_pct");
    check_nonnegative(s.interrupts_per_s, line, "interrupts_per_s");
    check_nonnegative(s.soft_interrupts_per_s, line, "soft_interrupts_per_s");
    if (s.process_count < 0) throw ParseError(line, "process_count", "must be >= 0");
    check_range(s.cache_miss_ratio, 0.0, 1.0, line, "cache_miss_ratio");
    check_range(s.virtual_mem_pct, 0.0, 100.0, line, "virtual_mem_pct");
    check_nonnegative(s.syscalls_per_s, line, "syscalls_per_s");
    check_nonnegative(s.instructions_per_s, line, "instructions_per_s");
    check_nonnegative(s.shared_mem_bytes, line, "shared_mem_bytes");
    if (s.measured_power_watts && !(std::isfinite(*s.measured_power_watts) && *s.measured_power_watts > 0.0))
        throw ParseError(line, "measured_power_watts", "must be finite and > 0");
    if (s.rapl_watts && !(std::isfinite(*s.rapl_watts) && *s.rapl_watts > 0.0))
        throw ParseError(line, "rapl_watts", "must be finite and > 0");
    if (s.workload_tag) check_tag(*s.workload_tag, line);
}

bool Trace::has_measured_power() const noexcept {
    return !samples.empty() &&
           std::all_of(samples.begin(), samples.end(), [](const StatSample& s) { return s.measured_power_watts.has_value(); });
}

bool Trace::has_rapl() const noexcept {
    return !samples.empty() &&
           std::all_of(samples.begin(), samples.end(), [](const StatSample& s) { return s.rapl_watts.has_value(); });
}

void validate_trace(const Trace& trace) {
    if (trace.samples.empty()) throw ParseError(0, "", "trace is empty");
    if (!(trace.sample_interval_s > 0.0) || !std::isfinite(trace.sample_interval_s))
        throw ParseError(0, "sample_interval_s", "must be finite and > 0");
    for (std::size_t i = 0; i < trace.samples.size(); ++i) validate_sample(trace.samples[i], 0);
    check_sequence(trace.samples, trace.sample_interval_s, [](std::size_t) { return std::size_t{0}; });
}

void validate_profile(const ServerProfile& p) {
    if (!(std::isfinite(p.idle_power_watts) && p.idle_power_watts > 0.0))
        throw ConfigError("server profile: idle_power_watts must be finite and > 0");
    if (!(std::isfinite(p.max_power_watts) && p.max_power_watts > p.idle_power_watts))
        throw ConfigError("server profile: max_power_watts must exceed idle_power_watts");
}

Trace parse_trace(std::istream& in, TraceFormat format, std::string server_id) {
    return format == TraceFormat::csv ? parse_csv(in, std::move(server_id)) : parse_jsonl(in, std::move(server_id));
}

Trace parse_trace(std::string_view text, TraceFormat format, std::string server_id) {
    std::istringstream in{std::string(text)};
    return parse_trace(in, format, std::move(server_id));
}

void write_trace(std::ostream& out, const Trace& trace, TraceFormat format) {
    if (format == TraceFormat::csv)
        write_csv(out, trace);
    else
        write_jsonl(out, trace);
}

std::string write_trace(const Trace& trace, TraceFormat format) {
    std::ostringstream out;
    write_trace(out, trace, format);
    return out.str();
}

TraceFormat format_for_path(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    return (ext == ".jsonl" || ext == ".ndjson") ? TraceFormat::jsonl : TraceFormat::csv;
}

Trace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open trace file " + path.string());
    return parse_trace(in, format_for_path(path), path.stem().string());
}

void save_trace(const std::filesystem::path& path, const Trace& trace, TraceFormat format) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write trace file " + path.string());
    write_trace(out, trace, format);
    if (!out) throw Error("write failed for " + path.string());
}

std::string_view to_string(Regime regime) noexcept {
    switch (regime) {
    case Regime::compute: return "compute";
    case Regime::noncompute: return "noncompute";
    case Regime::mixed: return "mixed";
    }
    return "unknown";
}

Regime regime_from_string(std::string_view name) {
    if (name == "compute") return Regime::compute;
    if (name == "noncompute") return Regime::noncompute;
    if (name == "mixed") return Regime::mixed;
    throw ConfigError("unknown regime '" + std::string(name) + "' (expected compute, noncompute or mixed)");
}

}  // namespace hydra
