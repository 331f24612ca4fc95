#include <algorithm>
#include <cmath>

#include "hydra/error.hpp"
#include "hydra/random.hpp"
#include "hydra/trace.hpp"

namespace hydra {

namespace {

constexpr double kMinFreqMhz = 1200.0;
constexpr double kMaxFreqMhz = 3600.0;
constexpr double kCores = 32.0;
constexpr double kWalkLo = 5.0;
constexpr double kWalkHi = 95.0;
constexpr double kWalkStep = 5.0;

// Percentage-point walk reflected at [5, 95].
class BoundedWalk {
public:
    explicit BoundedWalk(double start) : value_(start) {}

    double step(Rng& rng) {
        value_ += uniform(rng, -kWalkStep, kWalkStep);
        if (value_ > kWalkHi) value_ = 2.0 * kWalkHi - value_;
        if (value_ < kWalkLo) value_ = 2.0 * kWalkLo - value_;
        return value_;
    }

private:
    double value_;
};

double clamp_pct(double v) { return std::clamp(v, 0.0, 100.0); }

// Independent draws consumed every sample regardless of regime, so that the
// stream layout does not depend on which regime is active.
struct Draws {
    double n_user, n_vmem, n_power, n_shared, n_rapl;
    double n_irq, n_cache;  // container jitter
    double u_cache, u_shared, u_proc;
};

Draws draw(Rng& rng) {
    Draws d{};
    d.n_user = standard_normal(rng);
    d.n_vmem = standard_normal(rng);
    d.n_power = standard_normal(rng);
    d.n_shared = standard_normal(rng);
    d.n_rapl = standard_normal(rng);
    d.n_irq = standard_normal(rng);
    d.n_cache = standard_normal(rng);
    d.u_cache = uniform01(rng);
    d.u_shared = uniform01(rng);
    d.u_proc = uniform01(rng);
    return d;
}

void validate_config(const SyntheticConfig& c) {
    if (c.duration_samples <= 0) throw ConfigError("synthetic: duration_samples must be > 0");
    if (!(c.noise_sigma_watts >= 0.0) || !std::isfinite(c.noise_sigma_watts))
        throw ConfigError("synthetic: noise_sigma_watts must be >= 0");
    if (!(c.container_noise >= 0.0) || !std::isfinite(c.container_noise))
        throw ConfigError("synthetic: container_noise must be >= 0");
    if (c.mix_period <= 0) throw ConfigError("synthetic: mix_period must be > 0");
    if (!(c.sample_interval_s > 0.0) || !std::isfinite(c.sample_interval_s))
        throw ConfigError("synthetic: sample_interval_s must be > 0");
    validate_profile(c.profile);
}

}  // namespace

double noncompute_power_curve(double x) noexcept {
    x = std::clamp(x, 0.0, 1.0);
    const double x2 = x * x;
    return std::clamp(x2 * x2 * x, 0.0, 1.0);
}

Trace generate_synthetic(const SyntheticConfig& config) {
    validate_config(config);
    Rng rng(config.seed);
    BoundedWalk util_walk(50.0);
    BoundedWalk freq_walk(50.0);
    BoundedWalk mem_util_walk(50.0);

    const double idle = config.profile.idle_power_watts;
    const double range = config.profile.max_power_watts - idle;

    Trace trace;
    trace.server_id = config.profile.server_id;
    trace.sample_interval_s = config.sample_interval_s;
    trace.samples.reserve(static_cast<std::size_t>(config.duration_samples));

    for (std::int64_t i = 0; i < config.duration_samples; ++i) {
        const double util_pct = util_walk.step(rng);
        const double freq_pct = freq_walk.step(rng);
        const double mem_util_pct = mem_util_walk.step(rng);
        const Draws d = draw(rng);

        bool compute = config.regime == Regime::compute;
        if (config.regime == Regime::mixed) compute = (i / config.mix_period) % 2 == 0;

        StatSample s;
        s.timestamp = static_cast<double>(i) * config.sample_interval_s;
        double scale = 0.0;
        if (compute) {
            const double u = util_pct / 100.0;
            scale = u;
            s.cpu_util_pct = util_pct;
            s.cpu_freq_mhz = kMinFreqMhz + (kMaxFreqMhz - kMinFreqMhz) * u;
            s.user_time_pct = clamp_pct(0.9 * util_pct + 0.5 * d.n_user);
            s.interrupts_per_s = 2000.0 + 30000.0 * u;
            s.soft_interrupts_per_s = 1000.0 + 12000.0 * u;
            s.process_count = 180 + static_cast<std::int64_t>(std::lround(60.0 * u + 4.0 * d.u_proc));
            s.cache_miss_ratio = 0.02 + 0.03 * d.u_cache;
            s.virtual_mem_pct = clamp_pct(30.0 + 10.0 * u + 0.5 * d.n_vmem);
            s.syscalls_per_s = 5000.0 + 40000.0 * u;
            s.instructions_per_s = kCores * s.cpu_freq_mhz * 1e6 * 1.6 * u;
            s.shared_mem_bytes = 1e8 + 3.9e9 * d.u_shared;
            s.workload_tag = "compute";
        } else {
            const double x = (freq_pct - kWalkLo) / (kWalkHi - kWalkLo);
            const double u = mem_util_pct / 100.0;
            scale = noncompute_power_curve(x);
            s.cpu_util_pct = mem_util_pct;
            s.cpu_freq_mhz = kMinFreqMhz + (kMaxFreqMhz - kMinFreqMhz) * x;
            s.user_time_pct = clamp_pct(0.6 * mem_util_pct + 0.5 * d.n_user);
            s.interrupts_per_s = 4000.0 + 20000.0 * u;
            s.soft_interrupts_per_s = 3000.0 + 8000.0 * u;
            s.process_count = 220 + static_cast<std::int64_t>(std::lround(40.0 * u + 4.0 * d.u_proc));
            s.cache_miss_ratio = 0.30 + 0.25 * x + 0.02 * d.u_cache;
            s.virtual_mem_pct = clamp_pct(45.0 + 20.0 * scale + 0.5 * d.n_vmem);
            s.syscalls_per_s = 8000.0 + 25000.0 * u;
            s.instructions_per_s = kCores * s.cpu_freq_mhz * 1e6 * 0.4 * u;
            s.shared_mem_bytes = 5e8 + 6e9 * scale + 2e7 * std::abs(d.n_shared);
            s.workload_tag = "noncompute";
        }

        if (config.container_noise > 0.0) {
            s.interrupts_per_s *= std::exp(config.container_noise * d.n_irq);
            s.cache_miss_ratio = std::min(1.0, s.cache_miss_ratio * std::exp(config.container_noise * d.n_cache));
        }

        const double power = idle + range * scale + config.noise_sigma_watts * d.n_power;
        s.measured_power_watts = std::max(power, 1e-3);
        s.rapl_watts = std::max(1.0, 0.15 * idle + 0.45 * range * scale + 2.0 * d.n_rapl);
        trace.samples.push_back(std::move(s));
    }
    return trace;
}

}  // namespace hydra
