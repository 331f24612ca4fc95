#include "hydra/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hydra/error.hpp"

namespace hydra {

std::vector<LabeledExample> make_mlp_examples(const Trace& trace, const NormalizationStats& norm,
                                              const ServerProfile& profile) {
    validate_profile(profile);
    if (!trace.has_measured_power()) throw Error("training trace lacks measured_power_watts");
    std::vector<LabeledExample> out;
    out.reserve(trace.size());
    for (const auto& s : trace.samples) out.push_back({normalize(s, norm), watts_to_scale(*s.measured_power_watts, profile)});
    return out;
}

std::vector<Candidate> make_candidates(std::vector<CandidateModel> models) {
    std::vector<std::size_t> order(models.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return default_overhead_rank(models[a]) < default_overhead_rank(models[b]);
    });
    std::vector<int> rank(models.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int>(r);

    std::map<std::string, int> seen;
    std::vector<Candidate> out;
    for (std::size_t i = 0; i < models.size(); ++i) {
        const std::string kind(kind_name(models[i]));
        const int n = ++seen[kind];
        std::string id = n == 1 ? kind : kind + "_" + std::to_string(n);
        out.push_back({{std::move(id), rank[i]}, std::move(models[i])});
    }
    return out;
}

SelectorTrainingResult build_hydra(const Trace& trace, std::vector<Candidate> candidates, const ServerProfile& profile,
                                   const SelectorTrainingConfig& config) {
    if (!(config.holdout_fraction >= 0.0 && config.holdout_fraction < 1.0))
        throw ConfigError("holdout_fraction must be in [0,1)");
    validate_profile(profile);

    SelectorTrainingResult result;
    const NormalizationStats norm = fit_normalization(trace);

    std::vector<LabelingCandidate> labelers;
    std::vector<CandidateSpec> specs;
    for (const auto& c : candidates) {
        labelers.push_back({c.spec, [&model = c.model, &profile](const StatSample& s) {
                                return candidate_predict_watts(model, profile, s);
                            }});
        specs.push_back(c.spec);
    }
    auto examples = label_windows(trace, labelers, norm, config.labeling);
    for (const auto& e : examples) ++result.label_counts[e.label];

    const auto n_holdout = static_cast<std::size_t>(std::floor(config.holdout_fraction * static_cast<double>(examples.size())));
    const auto split = examples.begin() + static_cast<std::ptrdiff_t>(examples.size() - n_holdout);
    result.train.assign(examples.begin(), split);
    result.heldout.assign(split, examples.end());
    if (result.train.empty()) throw Error("no selector windows left for training; use a longer trace");

    result.model.forest = train_forest(result.train, specs, config.forest);
    if (!result.heldout.empty()) {
        std::size_t correct = 0;
        for (const auto& e : result.heldout)
            if (forest_predict(result.model.forest, e.features).candidate_id == e.label) ++correct;
        result.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(result.heldout.size());
    }
    result.model.candidates = std::move(candidates);
    result.model.norm_stats = norm;
    result.model.profile = profile;
    result.model.selection_interval = config.selection_interval;
    validate_hydra(result.model);
    return result;
}

}  // namespace hydra
