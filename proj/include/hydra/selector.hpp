#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hydra/stats.hpp"
#include "hydra/trace.hpp"

namespace hydra {

struct CandidateSpec {
    std::string candidate_id;
    int overhead_rank = 0;  // lower is cheaper

    bool operator==(const CandidateSpec&) const = default;
};

/// Throws ConfigError on duplicate ids or duplicate ranks.
void validate_candidates(std::span<const CandidateSpec> candidates);

struct SelectorExample {
    FeatureVector features;
    std::string label;
};

/// Gini impurity 1 - sum p_i^2. Throws Error when all counts are zero.
double gini(std::span<const std::size_t> class_counts);

/// Flattened binary tree. Internal nodes have feature >= 0 and send
/// x[feature] <= threshold to `left`; leaves have feature == -1 and carry class
/// counts from the training data that reached them.
struct DecisionTree {
    struct Node {
        int feature = -1;
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        std::vector<std::size_t> class_counts;
        std::size_t majority = 0;  // argmax of class_counts, lowest index on ties

        bool is_leaf() const noexcept { return feature < 0; }
        bool operator==(const Node&) const = default;
    };

    std::vector<Node> nodes;  // nodes[0] is the root
    int depth = 0;

    /// Index of the majority class at the leaf reached by fv (ties → lowest index).
    std::size_t predict(const FeatureVector& fv) const;

    bool operator==(const DecisionTree&) const = default;
};

struct ForestConfig {
    std::size_t n_trees = 100;
    std::size_t max_depth = 12;
    std::size_t min_samples_split = 2;
    std::size_t feature_subsample_k = 4;
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

/// Random forest over the canonical 11 statistics. candidate_ids is ordered by
/// overhead rank, so class index 0 is the cheapest candidate and every tie
/// resolves toward the lower index.
struct SelectorForest {
    std::vector<DecisionTree> trees;
    std::size_t feature_subsample_k = 4;
    std::vector<std::string> candidate_ids;
    std::uint64_t seed = 0;

    std::size_t n_trees() const noexcept { return trees.size(); }
    bool operator==(const SelectorForest&) const = default;
};

void validate_forest(const SelectorForest& forest);

struct ForestVote {
    std::string candidate_id;
    std::size_t class_index = 0;
    std::vector<std::size_t> vote_counts;  // parallel to candidate_ids
};

/// Grows one tree with CART/Gini on the given rows. `rng` supplies the feature
/// subsample at each split; with feature_subsample_k = 11 it is unused.
DecisionTree train_tree(std::span<const FeatureVector> features, std::span<const std::size_t> labels,
                        std::size_t n_classes, const ForestConfig& config, std::uint64_t tree_seed);

/// Trees are grown in parallel (OpenMP); tree i draws from a stream seeded by
/// mix_seed(config.seed, i), so results match the serial reference exactly.
SelectorForest train_forest(std::span<const SelectorExample> data, std::span<const CandidateSpec> candidates,
                            const ForestConfig& config);

namespace detail {
SelectorForest train_forest_serial(std::span<const SelectorExample> data, std::span<const CandidateSpec> candidates,
                                   const ForestConfig& config);
std::vector<std::size_t> forest_predict_batch_serial(const SelectorForest& forest, std::span<const FeatureVector> inputs);
}  // namespace detail

/// Majority vote; ties go to the cheaper candidate.
ForestVote forest_predict(const SelectorForest& forest, const FeatureVector& fv);

/// Class index only, without allocating.
std::size_t forest_predict_index(const SelectorForest& forest, const FeatureVector& fv);

/// Class index per input; OpenMP across inputs.
std::vector<std::size_t> forest_predict_batch(const SelectorForest& forest, std::span<const FeatureVector> inputs);

// ---------------------------------------------------------------------------
// Label construction

/// Index of the cheapest candidate whose RMSE is within (1 + epsilon_rel) of
/// the best. rmses and overhead ranks are parallel arrays.
std::size_t lightest_adequate(std::span<const double> rmses, std::span<const int> overhead_ranks, double epsilon_rel);

/// A candidate as seen by the labeler: maps a sample to predicted watts.
struct LabelingCandidate {
    CandidateSpec spec;
    std::function<double(const StatSample&)> predict_watts;
};

struct LabelingConfig {
    std::size_t window = 30;
    double epsilon_rel = 0.05;
};

/// Disjoint windows (stride = window, trailing partial window dropped). Each
/// window's label is lightest_adequate over per-candidate RMSE in watts; its
/// features are the normalized statistics of the window's midpoint sample.
std::vector<SelectorExample> label_windows(const Trace& trace, std::span<const LabelingCandidate> candidates,
                                           const NormalizationStats& norm, const LabelingConfig& config = {});

/// CSV `f0,...,f10,label`.
void write_selector_examples_csv(std::ostream& out, std::span<const SelectorExample> examples);

}  // namespace hydra
