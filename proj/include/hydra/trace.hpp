#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hydra {

/// Number of system statistics fed to the models.
inline constexpr std::size_t kNumFeatures = 11;

/// Canonical feature order. Every FeatureVector, NormalizationStats entry and
/// selector split index follows this order.
inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "cpu_freq_mhz",     "user_time_pct",   "cpu_util_pct",       "interrupts_per_s",
    "soft_interrupts_per_s", "process_count", "cache_miss_ratio", "virtual_mem_pct",
    "syscalls_per_s",   "instructions_per_s", "shared_mem_bytes",
};

/// One timestamped observation of the system statistics.
struct StatSample {
    double timestamp = 0.0;  // seconds since trace start
    double cpu_freq_mhz = 0.0;
    double user_time_pct = 0.0;
    double cpu_util_pct = 0.0;
    double interrupts_per_s = 0.0;
    double soft_interrupts_per_s = 0.0;
    std::int64_t process_count = 0;
    double cache_miss_ratio = 0.0;
    double virtual_mem_pct = 0.0;
    double syscalls_per_s = 0.0;
    double instructions_per_s = 0.0;
    double shared_mem_bytes = 0.0;
    std::optional<double> measured_power_watts;
    std::optional<double> rapl_watts;
    std::optional<std::string> workload_tag;

    /// The 11 statistics in canonical order, unnormalized.
    std::array<double, kNumFeatures> features() const noexcept;

    bool operator==(const StatSample&) const = default;
};

/// Throws ParseError naming the first field that violates its range.
/// `line` is attached to the error (0 when not parsing a file).
void validate_sample(const StatSample& s, std::size_t line = 0);

struct Trace {
    std::string server_id;
    double sample_interval_s = 1.0;
    std::vector<StatSample> samples;

    std::size_t size() const noexcept { return samples.size(); }
    bool has_measured_power() const noexcept;
    bool has_rapl() const noexcept;

    bool operator==(const Trace&) const = default;
};

/// Checks non-emptiness, per-sample ranges, strictly increasing timestamps and
/// that every gap is within 10% of sample_interval_s.
void validate_trace(const Trace& trace);

struct ServerProfile {
    std::string server_id;
    double idle_power_watts = 0.0;
    double max_power_watts = 0.0;
    std::string description;

    bool operator==(const ServerProfile&) const = default;
};

/// Throws ConfigError unless max > idle > 0.
void validate_profile(const ServerProfile& profile);

enum class TraceFormat { csv, jsonl };

/// Parses a trace. server_id is not part of the file schema and is supplied by
/// the caller; the sample interval is the median timestamp gap (1 s for a
/// single-sample trace).
Trace parse_trace(std::istream& in, TraceFormat format, std::string server_id = {});
Trace parse_trace(std::string_view text, TraceFormat format, std::string server_id = {});

void write_trace(std::ostream& out, const Trace& trace, TraceFormat format);
std::string write_trace(const Trace& trace, TraceFormat format);

/// Chooses csv or jsonl from the file extension (".jsonl"/".ndjson" → jsonl).
TraceFormat format_for_path(const std::filesystem::path& path);
Trace load_trace(const std::filesystem::path& path);
void save_trace(const std::filesystem::path& path, const Trace& trace, TraceFormat format);

enum class Regime { compute, noncompute, mixed };

std::string_view to_string(Regime regime) noexcept;
Regime regime_from_string(std::string_view name);

struct SyntheticConfig {
    Regime regime = Regime::compute;
    std::int64_t duration_samples = 1000;
    double noise_sigma_watts = 0.0;
    double container_noise = 0.0;
    std::uint64_t seed = 0;
    ServerProfile profile{"synthetic", 237.58, 350.0, "synthetic reference server"};
    std::int64_t mix_period = 120;
    double sample_interval_s = 1.0;
};

/// Normalized-frequency power law used in the noncompute regime: x^5 on [0,1].
double noncompute_power_curve(double normalized_freq) noexcept;

/// Deterministic synthetic trace.
///
/// compute: power tracks utilization linearly; frequency is affine in
/// utilization; shared memory is drawn independently of power.
/// noncompute: power follows noncompute_power_curve of normalized frequency,
/// utilization wanders independently, cache-miss ratio is high and shared
/// memory is affine in power.
/// mixed: alternates compute/noncompute every mix_period samples and tags each
/// sample with its regime.
Trace generate_synthetic(const SyntheticConfig& config);

/// Reads Linux OS counters and produces StatSamples with rates computed over
/// the interval since the previous call (or since construction).
///
/// Cache-miss ratio and instruction rate come from perf events when the kernel
/// allows system-wide counting; otherwise they read 0 and
/// hardware_counters() is false. syscalls_per_s is always 0. When the
/// HYDRA_METER_FILE environment variable names a file, its last line
/// "<epoch_s> <watts>" fills measured_power_watts. Not thread-safe.
class LiveSampler {
public:
    LiveSampler();
    ~LiveSampler();
    LiveSampler(const LiveSampler&) = delete;
    LiveSampler& operator=(const LiveSampler&) = delete;

    StatSample sample();
    bool hardware_counters() const noexcept;

private:
    struct State;
    std::unique_ptr<State> state_;
};

/// Convenience wrapper: one sample from a process-wide sampler.
StatSample live_sample();

}  // namespace hydra
