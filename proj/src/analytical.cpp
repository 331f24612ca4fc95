#include <algorithm>
#include <cmath>
#include <numeric>

#include "hydra/error.hpp"
#include "hydra/models.hpp"

namespace hydra {

AnalyticalModel make_analytical(double alpha) {
    if (std::find(kAlphaFamily.begin(), kAlphaFamily.end(), alpha) == kAlphaFamily.end())
        throw ConfigError("analytical model: alpha must be 1, 2 or 0.5");
    return AnalyticalModel{alpha};
}

double analytical_predict(const AnalyticalModel& model, const ServerProfile& profile, double cpu_util) {
    if (!(cpu_util >= 0.0 && cpu_util <= 1.0)) throw Error("analytical_predict: cpu_util must be in [0,1]");
    double u = cpu_util;
    if (model.alpha == 2.0)
        u = cpu_util * cpu_util;
    else if (model.alpha == 0.5)
        u = std::sqrt(cpu_util);
    else if (model.alpha != 1.0)
        u = std::pow(cpu_util, model.alpha);
    return profile.idle_power_watts + (profile.max_power_watts - profile.idle_power_watts) * u;
}

AnalyticalModel fit_alpha(const Trace& trace, const ServerProfile& profile) {
    validate_profile(profile);
    if (!trace.has_measured_power()) throw Error("fit_alpha: trace lacks measured_power_watts");

    std::vector<double> actual;
    actual.reserve(trace.size());
    for (const auto& s : trace.samples) actual.push_back(*s.measured_power_watts);

    AnalyticalModel best{kAlphaFamily[0]};
    double best_rmse = INFINITY;
    std::vector<double> predicted(trace.size());
    for (double alpha : kAlphaFamily) {
        const AnalyticalModel m{alpha};
        for (std::size_t i = 0; i < trace.size(); ++i)
            predicted[i] = analytical_predict(m, profile, std::clamp(trace.samples[i].cpu_util_pct / 100.0, 0.0, 1.0));
        const double e = rmse(predicted, actual);
        if (e < best_rmse) {
            best_rmse = e;
            best = m;
        }
    }
    return best;
}

double moving_average_baseline(std::span<const double> history, std::size_t window) {
    if (history.empty()) throw Error("moving_average_baseline: empty power history");
    if (window == 0) throw Error("moving_average_baseline: window must be >= 1");
    const auto n = std::min(window, history.size());
    const auto tail = history.last(n);
    return std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(n);
}

}  // namespace hydra
