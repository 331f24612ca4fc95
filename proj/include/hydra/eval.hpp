#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hydra/hydra.hpp"
#include "hydra/trace.hpp"

namespace hydra {

enum class IntensityBin { low, mid, high };

std::string_view to_string(IntensityBin bin) noexcept;

/// CPU-utilization cut points (percent). util < low_upper → low,
/// util < mid_upper → mid, else high.
struct IntensityThresholds {
    double low_upper = 33.0;
    double mid_upper = 66.0;
};

IntensityBin intensity_bin(const StatSample& sample, const IntensityThresholds& thresholds = {});

struct BinReport {
    std::string bin_name;
    std::size_t sample_count = 0;
    double rmse_watts = 0.0;
    double mean_abs_error_watts = 0.0;
};

struct EvalReport {
    double overall_rmse_watts = 0.0;
    double overall_mean_abs_error_watts = 0.0;
    std::size_t sample_count = 0;
    std::vector<BinReport> per_bin;                  // low, mid, high; empty bins report zeros
    std::map<std::string, double> per_model_share;   // fraction of samples per chosen model
};

/// Throws Error on length mismatch or missing ground truth.
EvalReport evaluate(std::span<const PowerPrediction> predictions, const Trace& trace,
                    const IntensityThresholds& thresholds = {});

void write_eval_table(std::ostream& out, const EvalReport& report);
void write_eval_csv(std::ostream& out, const EvalReport& report);
nlohmann::json eval_to_json(const EvalReport& report);

/// A named prediction routine under test. Stateful subjects (Hydra's
/// selection cadence) keep their state in the closure.
struct BenchSubject {
    std::string model_id;
    std::function<double(const StatSample&)> predict;
};

struct LatencyStats {
    std::string model_id;
    double mean_ns = 0.0;
    double p50_ns = 0.0;
    double p99_ns = 0.0;
    std::size_t iterations = 0;
};

struct LatencyReport {
    std::vector<LatencyStats> models;
    const LatencyStats* find(std::string_view model_id) const;
};

inline constexpr std::size_t kMinBenchIterations = 1000;

/// Per-call wall-clock timing over inputs cycled in order, after one warm-up
/// pass. Iterations below kMinBenchIterations throw Error. Single-threaded.
LatencyReport latency_bench(std::span<const BenchSubject> subjects, std::span<const StatSample> inputs,
                            std::size_t iterations);

void write_latency_table(std::ostream& out, const LatencyReport& report);
nlohmann::json latency_to_json(const LatencyReport& report);

struct RaplReport {
    std::vector<double> timestamps;
    std::vector<double> wall_watts;
    std::vector<double> rapl_watts;
    std::vector<double> ratio;  // wall / rapl
    double pearson_wall_rapl = 0.0;
};

/// Throws Error when either power column is missing or any RAPL value is <= 0.
RaplReport rapl_ratio_report(const Trace& trace);

/// CSV `timestamp,wall_watts,rapl_watts,ratio`.
void write_rapl_csv(std::ostream& out, const RaplReport& report);

}  // namespace hydra
