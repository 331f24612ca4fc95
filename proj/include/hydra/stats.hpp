#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hydra/trace.hpp"

namespace hydra {

/// The 11 statistics in canonical order. `normalized` is set only by
/// normalize(); models that expect [0,1] inputs reject anything else.
struct FeatureVector {
    std::array<double, kNumFeatures> values{};
    bool normalized = false;

    bool operator==(const FeatureVector&) const = default;
};

struct FeatureRange {
    double min = 0.0;
    double max = 0.0;

    bool constant() const noexcept { return max == min; }
    bool operator==(const FeatureRange&) const = default;
};

/// Per-feature min/max observed over training data.
struct NormalizationStats {
    std::array<FeatureRange, kNumFeatures> ranges{};

    bool operator==(const NormalizationStats&) const = default;
};

/// Sample Pearson correlation. Throws Error on length mismatch or fewer than
/// two points, UndefinedCorrelation when either series has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Root mean square error. Throws Error on length mismatch or empty input.
double rmse(std::span<const double> predicted, std::span<const double> actual);

struct FeatureCorrelation {
    std::string feature;
    std::optional<double> r;  // nullopt when undefined (constant series)
    bool selected = false;
};

struct CorrelationReport {
    std::vector<FeatureCorrelation> features;
    double threshold = 0.7;

    std::vector<std::string> selected() const;
    bool is_selected(std::string_view feature) const;
};

/// Pearson correlation of each statistic against measured power; a feature is
/// selected when |r| >= threshold. Undefined correlations are never selected.
CorrelationReport select_features(const Trace& trace, double threshold = 0.70);

/// CSV with header `feature,r,selected`; undefined r is written empty.
void write_correlation_csv(std::ostream& out, const CorrelationReport& report);

NormalizationStats fit_normalization(std::span<const Trace> traces);
NormalizationStats fit_normalization(const Trace& trace);

/// Min-max scaling clamped to [0,1]; constant features map to 0.5.
FeatureVector normalize(const StatSample& sample, const NormalizationStats& stats);
FeatureVector normalize(const std::array<double, kNumFeatures>& raw, const NormalizationStats& stats);

/// Inverse of normalize for in-range values (constant features return min).
std::array<double, kNumFeatures> denormalize(const FeatureVector& fv, const NormalizationStats& stats);

}  // namespace hydra
