#pragma once

// Glue between traces and the trainable pieces: building MLP datasets,
// labeling selector windows, and assembling a HydraModel.

#include <map>
#include <string>
#include <vector>

#include "hydra/hydra.hpp"
#include "hydra/selector.hpp"

namespace hydra {

/// One example per sample: normalized statistics → measured power as a scale
/// factor of `profile`. Throws Error when ground truth is missing.
std::vector<LabeledExample> make_mlp_examples(const Trace& trace, const NormalizationStats& norm,
                                              const ServerProfile& profile);

struct SelectorTrainingConfig {
    LabelingConfig labeling;
    ForestConfig forest;
    double holdout_fraction = 0.2;  // trailing share of windows kept out of training
    std::size_t selection_interval = 1;
};

struct SelectorTrainingResult {
    HydraModel model;
    std::vector<SelectorExample> train;
    std::vector<SelectorExample> heldout;
    std::map<std::string, std::size_t> label_counts;  // over all windows
    std::optional<double> heldout_accuracy;           // absent when nothing was held out
};

/// Labels the trace with label_windows, trains the forest on the leading
/// windows and scores it on the trailing holdout. Selector inputs are scaled
/// with statistics fitted on this trace.
SelectorTrainingResult build_hydra(const Trace& trace, std::vector<Candidate> candidates, const ServerProfile& profile,
                                   const SelectorTrainingConfig& config);

/// Assigns ids ("analytical", "mlp", or "<kind>_<n>" on repeats) and unique
/// overhead ranks ordered by kind cost, then by position.
std::vector<Candidate> make_candidates(std::vector<CandidateModel> models);

}  // namespace hydra
