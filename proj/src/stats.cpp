#include "hydra/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "hydra/error.hpp"

namespace hydra {

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error("pearson: series lengths differ");
    if (x.size() < 2) throw Error("pearson: need at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("pearson: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double rmse(std::span<const double> predicted, std::span<const double> actual) {
    if (predicted.size() != actual.size()) throw Error("rmse: series lengths differ");
    if (predicted.empty()) throw Error("rmse: empty series");
    double sum = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double d = predicted[i] - actual[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(predicted.size()));
}

std::vector<std::string> CorrelationReport::selected() const {
    std::vector<std::string> out;
    for (const auto& f : features)
        if (f.selected) out.push_back(f.feature);
    return out;
}

bool CorrelationReport::is_selected(std::string_view feature) const {
    return std::any_of(features.begin(), features.end(),
                       [&](const FeatureCorrelation& f) { return f.selected && f.feature == feature; });
}

CorrelationReport select_features(const Trace& trace, double threshold) {
    if (!trace.has_measured_power()) throw Error("select_features: trace lacks measured_power_watts on some sample");
    if (trace.size() < 2) throw Error("select_features: need at least two samples");

    std::vector<double> power;
    std::array<std::vector<double>, kNumFeatures> columns;
    power.reserve(trace.size());
    for (const auto& s : trace.samples) {
        power.push_back(*s.measured_power_watts);
        const auto f = s.features();
        for (std::size_t k = 0; k < kNumFeatures; ++k) columns[k].push_back(f[k]);
    }

    CorrelationReport report;
    report.threshold = threshold;
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
        FeatureCorrelation fc{std::string(kFeatureNames[k]), std::nullopt, false};
        try {
            fc.r = pearson(columns[k], power);
            fc.selected = std::abs(*fc.r) >= threshold;
        } catch (const UndefinedCorrelation&) {
        }
        report.features.push_back(std::move(fc));
    }
    return report;
}

void write_correlation_csv(std::ostream& out, const CorrelationReport& report) {
    const auto prec = out.precision(std::numeric_limits<double>::max_digits10);
    out << "feature,r,selected\n";
    for (const auto& f : report.features) {
        out << f.feature << ',';
        if (f.r) out << *f.r;
        out << ',' << (f.selected ? "true" : "false") << '\n';
    }
    out.precision(prec);
}

NormalizationStats fit_normalization(std::span<const Trace> traces) {
    NormalizationStats stats;
    bool any = false;
    for (const auto& t : traces) {
        for (const auto& s : t.samples) {
            const auto f = s.features();
            for (std::size_t k = 0; k < kNumFeatures; ++k) {
                auto& r = stats.ranges[k];
                if (!any) {
                    r.min = r.max = f[k];
                } else {
                    r.min = std::min(r.min, f[k]);
                    r.max = std::max(r.max, f[k]);
                }
            }
            any = true;
        }
    }
    if (!any) throw Error("fit_normalization: no samples");
    return stats;
}

NormalizationStats fit_normalization(const Trace& trace) {
    return fit_normalization(std::span<const Trace>(&trace, 1));
}

FeatureVector normalize(const std::array<double, kNumFeatures>& raw, const NormalizationStats& stats) {
    FeatureVector fv;
    fv.normalized = true;
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
        const auto& r = stats.ranges[k];
        fv.values[k] = r.constant() ? 0.5 : std::clamp((raw[k] - r.min) / (r.max - r.min), 0.0, 1.0);
    }
    return fv;
}

FeatureVector normalize(const StatSample& sample, const NormalizationStats& stats) {
    return normalize(sample.features(), stats);
}

std::array<double, kNumFeatures> denormalize(const FeatureVector& fv, const NormalizationStats& stats) {
    std::array<double, kNumFeatures> raw{};
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
        const auto& r = stats.ranges[k];
        raw[k] = r.constant() ? r.min : r.min + fv.values[k] * (r.max - r.min);
    }
    return raw;
}

}  // namespace hydra
