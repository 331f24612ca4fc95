#include "hydra/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "hydra/error.hpp"
#include "hydra/stats.hpp"

namespace hydra {

namespace {

constexpr std::array<IntensityBin, 3> kBins = {IntensityBin::low, IntensityBin::mid, IntensityBin::high};

double percentile(std::vector<double>& values, double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size()))) - 1;
    const auto pos = values.begin() + static_cast<std::ptrdiff_t>(std::min(k, values.size() - 1));
    std::nth_element(values.begin(), pos, values.end());
    return *pos;
}

}  // namespace

std::string_view to_string(IntensityBin bin) noexcept {
    switch (bin) {
    case IntensityBin::low: return "low";
    case IntensityBin::mid: return "mid";
    case IntensityBin::high: return "high";
    }
    return "unknown";
}

IntensityBin intensity_bin(const StatSample& s, const IntensityThresholds& t) {
    if (s.cpu_util_pct < t.low_upper) return IntensityBin::low;
    if (s.cpu_util_pct < t.mid_upper) return IntensityBin::mid;
    return IntensityBin::high;
}

EvalReport evaluate(std::span<const PowerPrediction> predictions, const Trace& trace, const IntensityThresholds& t) {
    if (predictions.size() != trace.size())
        throw Error("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                    std::to_string(trace.size()) + " samples");
    if (!trace.has_measured_power()) throw Error("evaluate: trace lacks measured_power_watts (ground truth)");

    EvalReport report;
    report.sample_count = trace.size();
    std::array<double, 3> sq{}, abs{};
    std::array<std::size_t, 3> count{};
    double total_sq = 0.0, total_abs = 0.0;
    std::map<std::string, std::size_t> chosen;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const double err = predictions[i].predicted_watts - *trace.samples[i].measured_power_watts;
        const auto b = static_cast<std::size_t>(intensity_bin(trace.samples[i], t));
        sq[b] += err * err;
        abs[b] += std::abs(err);
        ++count[b];
        total_sq += err * err;
        total_abs += std::abs(err);
        ++chosen[predictions[i].chosen_model];
    }
    const double n = static_cast<double>(trace.size());
    report.overall_rmse_watts = std::sqrt(total_sq / n);
    report.overall_mean_abs_error_watts = total_abs / n;
    for (std::size_t b = 0; b < kBins.size(); ++b) {
        BinReport br{std::string(to_string(kBins[b])), count[b], 0.0, 0.0};
        if (count[b] > 0) {
            br.rmse_watts = std::sqrt(sq[b] / static_cast<double>(count[b]));
            br.mean_abs_error_watts = abs[b] / static_cast<double>(count[b]);
        }
        report.per_bin.push_back(std::move(br));
    }
    for (const auto& [id, c] : chosen) report.per_model_share[id] = static_cast<double>(c) / n;
    return report;
}

void write_eval_table(std::ostream& out, const EvalReport& r) {
    const auto flags = out.flags();
    out << std::fixed << std::setprecision(3);
    out << "samples: " << r.sample_count << "\n";
    out << "overall RMSE (W): " << r.overall_rmse_watts << "\n";
    out << "overall MAE  (W): " << r.overall_mean_abs_error_watts << "\n\n";
    out << std::left << std::setw(8) << "bin" << std::right << std::setw(10) << "samples" << std::setw(14) << "rmse_w"
        << std::setw(14) << "mae_w" << "\n";
    for (const auto& b : r.per_bin)
        out << std::left << std::setw(8) << b.bin_name << std::right << std::setw(10) << b.sample_count << std::setw(14)
            << b.rmse_watts << std::setw(14) << b.mean_abs_error_watts << "\n";
    out << "\nmodel share:\n";
    for (const auto& [id, share] : r.per_model_share) out << "  " << std::left << std::setw(16) << id << share << "\n";
    out.flags(flags);
}

void write_eval_csv(std::ostream& out, const EvalReport& r) {
    const auto prec = out.precision(std::numeric_limits<double>::max_digits10);
    out << "bin,sample_count,rmse_watts,mean_abs_error_watts\n";
    out << "overall," << r.sample_count << ',' << r.overall_rmse_watts << ',' << r.overall_mean_abs_error_watts << '\n';
    for (const auto& b : r.per_bin)
        out << b.bin_name << ',' << b.sample_count << ',' << b.rmse_watts << ',' << b.mean_abs_error_watts << '\n';
    out.precision(prec);
}

nlohmann::json eval_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["sample_count"] = r.sample_count;
    j["overall_rmse_watts"] = r.overall_rmse_watts;
    j["overall_mean_abs_error_watts"] = r.overall_mean_abs_error_watts;
    j["per_bin"] = nlohmann::json::array();
    for (const auto& b : r.per_bin)
        j["per_bin"].push_back({{"bin", b.bin_name},
                                {"sample_count", b.sample_count},
                                {"rmse_watts", b.rmse_watts},
                                {"mean_abs_error_watts", b.mean_abs_error_watts}});
    j["per_model_share"] = r.per_model_share;
    return j;
}

const LatencyStats* LatencyReport::find(std::string_view id) const {
    for (const auto& m : models)
        if (m.model_id == id) return &m;
    return nullptr;
}

LatencyReport latency_bench(std::span<const BenchSubject> subjects, std::span<const StatSample> inputs,
                            std::size_t iterations) {
    if (iterations < kMinBenchIterations)
        throw Error("latency_bench: iterations must be >= " + std::to_string(kMinBenchIterations));
    if (inputs.empty()) throw Error("latency_bench: no inputs");

    using Clock = std::chrono::steady_clock;
    volatile double sink = 0.0;
    LatencyReport report;
    std::vector<double> samples(iterations);
    for (const auto& subject : subjects) {
        const std::size_t warmup = std::min(inputs.size(), iterations);
        for (std::size_t i = 0; i < warmup; ++i) sink = sink + subject.predict(inputs[i]);

        double total = 0.0;
        for (std::size_t i = 0; i < iterations; ++i) {
            const auto& in = inputs[i % inputs.size()];
            const auto t0 = Clock::now();
            const double v = subject.predict(in);
            const auto t1 = Clock::now();
            sink = sink + v;
            samples[i] = std::chrono::duration<double, std::nano>(t1 - t0).count();
            total += samples[i];
        }
        LatencyStats st;
        st.model_id = subject.model_id;
        st.iterations = iterations;
        st.mean_ns = total / static_cast<double>(iterations);
        st.p50_ns = percentile(samples, 0.50);
        st.p99_ns = percentile(samples, 0.99);
        report.models.push_back(std::move(st));
    }
    return report;
}

void write_latency_table(std::ostream& out, const LatencyReport& r) {
    const auto flags = out.flags();
    out << std::fixed << std::setprecision(1);
    out << std::left << std::setw(16) << "model" << std::right << std::setw(12) << "mean_ns" << std::setw(12) << "p50_ns"
        << std::setw(12) << "p99_ns" << std::setw(12) << "iterations" << "\n";
    for (const auto& m : r.models)
        out << std::left << std::setw(16) << m.model_id << std::right << std::setw(12) << m.mean_ns << std::setw(12)
            << m.p50_ns << std::setw(12) << m.p99_ns << std::setw(12) << m.iterations << "\n";
    out.flags(flags);
}

nlohmann::json latency_to_json(const LatencyReport& r) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : r.models)
        arr.push_back({{"model_id", m.model_id},
                       {"mean_ns", m.mean_ns},
                       {"p50_ns", m.p50_ns},
                       {"p99_ns", m.p99_ns},
                       {"iterations", m.iterations}});
    return nlohmann::json{{"models", arr}};
}

RaplReport rapl_ratio_report(const Trace& trace) {
    if (trace.samples.empty()) throw Error("rapl_ratio_report: empty trace");
    RaplReport r;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& s = trace.samples[i];
        if (!s.measured_power_watts) throw Error("rapl_ratio_report: sample " + std::to_string(i) + " lacks measured_power_watts");
        if (!s.rapl_watts) throw Error("rapl_ratio_report: sample " + std::to_string(i) + " lacks rapl_watts");
        if (!(*s.rapl_watts > 0.0)) throw Error("rapl_ratio_report: sample " + std::to_string(i) + " has rapl_watts <= 0");
        r.timestamps.push_back(s.timestamp);
        r.wall_watts.push_back(*s.measured_power_watts);
        r.rapl_watts.push_back(*s.rapl_watts);
        r.ratio.push_back(*s.measured_power_watts / *s.rapl_watts);
    }
    r.pearson_wall_rapl = pearson(r.wall_watts, r.rapl_watts);
    return r;
}

void write_rapl_csv(std::ostream& out, const RaplReport& r) {
    const auto prec = out.precision(std::numeric_limits<double>::max_digits10);
    out << "timestamp,wall_watts,rapl_watts,ratio\n";
    for (std::size_t i = 0; i < r.ratio.size(); ++i)
        out << r.timestamps[i] << ',' << r.wall_watts[i] << ',' << r.rapl_watts[i] << ',' << r.ratio[i] << '\n';
    out.precision(prec);
}

}  // namespace hydra
