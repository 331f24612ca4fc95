#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hydra/models.hpp"
#include "hydra/selector.hpp"
#include "hydra/stats.hpp"
#include "hydra/trace.hpp"

namespace hydra {

/// (p - idle) / (max - idle). Deliberately unclamped.
double watts_to_scale(double watts, const ServerProfile& profile);

/// idle + sf * (max - idle).
double scale_to_watts(double scale_factor, const ServerProfile& profile);

using CandidateModel = std::variant<AnalyticalModel, MlpModel>;

std::string_view kind_name(const CandidateModel& model) noexcept;

/// Default overhead rank per model kind: analytical 0, mlp 1.
int default_overhead_rank(const CandidateModel& model) noexcept;

/// Direct prediction of one candidate, in watts. The analytical model reads
/// raw cpu_util_pct / 100 (clamped); the MLP normalizes with its embedded
/// statistics and converts its scale factor through the profile.
double candidate_predict_watts(const CandidateModel& model, const ServerProfile& profile, const StatSample& sample);

struct Candidate {
    CandidateSpec spec;
    CandidateModel model;
};

struct HydraModel {
    std::vector<Candidate> candidates;
    SelectorForest forest;
    NormalizationStats norm_stats;  // selector input scaling
    ServerProfile profile;
    std::size_t selection_interval = 1;
};

/// Throws ConfigError when the forest names a candidate that does not exist,
/// ids/ranks collide, or any embedded model is malformed.
void validate_hydra(const HydraModel& model);

struct PowerPrediction {
    double timestamp = 0.0;
    double predicted_watts = 0.0;
    double scale_factor = 0.0;
    std::string chosen_model;
    bool selector_invoked = false;
    std::optional<double> measured_power_watts;

    bool operator==(const PowerPrediction&) const = default;
};

/// Per-stream selection state owned by one caller.
struct SelectionState {
    std::size_t sample_index = 0;
    std::size_t cached_candidate = 0;
};

/// Runs the selector on every selection_interval-th sample (starting with the
/// first), otherwise reuses the cached choice, then dispatches to the chosen
/// candidate.
PowerPrediction hydra_predict(const HydraModel& model, const StatSample& sample, SelectionState& state);

/// Batch form of hydra_predict. Selector invocations and candidate dispatch
/// run in parallel (OpenMP); output equals the sequential loop exactly.
std::vector<PowerPrediction> run_over_trace(const HydraModel& model, const Trace& trace);

namespace detail {
std::vector<PowerPrediction> run_over_trace_serial(const HydraModel& model, const Trace& trace);
}

/// Predictions from a single candidate over a trace (no selector).
std::vector<PowerPrediction> run_single_over_trace(const CandidateModel& model, const std::string& candidate_id,
                                                   const ServerProfile& profile, const Trace& trace);

/// A trace-level model that wraps a fixed candidate into a single-candidate
/// HydraModel whose forest always picks it.
HydraModel make_single_candidate_hydra(Candidate candidate, const ServerProfile& profile,
                                       const NormalizationStats& norm);

/// CSV `timestamp,predicted_watts,scale_factor,chosen_model,selector_invoked`,
/// plus `measured_power_watts` when every prediction carries ground truth.
/// Doubles use the shortest round-trip form; selector_invoked is 0 or 1.
void write_predictions_csv(std::ostream& out, std::span<const PowerPrediction> predictions);

/// Inverse of write_predictions_csv. Throws ParseError naming line and field.
std::vector<PowerPrediction> parse_predictions_csv(std::istream& in);

}  // namespace hydra
