#include "hydra/selector.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <unordered_map>

#include "hydra/error.hpp"
#include "hydra/random.hpp"

namespace hydra {

namespace {

std::size_t argmax_lowest(std::span<const std::size_t> counts) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < counts.size(); ++i)
        if (counts[i] > counts[best]) best = i;
    return best;
}

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = std::numeric_limits<double>::infinity();
};

// n * weighted Gini of a child given its class counts: n - sum(c^2)/n.
double scaled_gini(const std::vector<std::size_t>& counts, std::size_t n) {
    if (n == 0) return 0.0;
    double sq = 0.0;
    for (auto c : counts) sq += static_cast<double>(c) * static_cast<double>(c);
    return static_cast<double>(n) - sq / static_cast<double>(n);
}

class TreeBuilder {
public:
    TreeBuilder(std::span<const FeatureVector> x, std::span<const std::size_t> y, std::size_t n_classes,
                const ForestConfig& cfg, std::uint64_t seed)
        : x_(x), y_(y), n_classes_(n_classes), cfg_(cfg), rng_(seed) {}

    DecisionTree build(std::vector<std::size_t> rows) {
        grow(std::move(rows), 0);
        return std::move(tree_);
    }

private:
    std::vector<std::size_t> counts_of(const std::vector<std::size_t>& rows) const {
        std::vector<std::size_t> c(n_classes_, 0);
        for (auto r : rows) ++c[y_[r]];
        return c;
    }

    std::vector<int> draw_features() {
        std::array<int, kNumFeatures> all{};
        std::iota(all.begin(), all.end(), 0);
        const std::size_t k = std::min(cfg_.feature_subsample_k, kNumFeatures);
        if (k == kNumFeatures) return {all.begin(), all.end()};
        for (std::size_t i = 0; i < k; ++i) {
            const auto j = i + uniform_index(rng_, kNumFeatures - i);
            std::swap(all[i], all[j]);
        }
        std::vector<int> chosen(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
        std::sort(chosen.begin(), chosen.end());
        return chosen;
    }

    Split best_split(const std::vector<std::size_t>& rows, const std::vector<std::size_t>& parent_counts) {
        Split best;
        const std::size_t n = rows.size();
        std::vector<std::pair<double, std::size_t>> sorted(n);
        std::vector<std::size_t> left(n_classes_), right(n_classes_);
        for (int f : draw_features()) {
            for (std::size_t i = 0; i < n; ++i) sorted[i] = {x_[rows[i]].values[static_cast<std::size_t>(f)], y_[rows[i]]};
            std::sort(sorted.begin(), sorted.end());
            std::fill(left.begin(), left.end(), 0);
            right = parent_counts;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                ++left[sorted[i].second];
                --right[sorted[i].second];
                const double lo = sorted[i].first, hi = sorted[i + 1].first;
                if (!(lo < hi)) continue;
                const double impurity = scaled_gini(left, i + 1) + scaled_gini(right, n - i - 1);
                if (impurity < best.impurity) {
                    double threshold = lo + (hi - lo) / 2.0;
                    if (!(threshold < hi)) threshold = lo;
                    best = Split{f, threshold, impurity};
                }
            }
        }
        return best;
    }

    int make_leaf(int id, std::vector<std::size_t> counts) {
        auto& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.majority = argmax_lowest(counts);
        node.class_counts = std::move(counts);
        return id;
    }

    int grow(std::vector<std::size_t> rows, int depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        tree_.depth = std::max(tree_.depth, depth);
        auto counts = counts_of(rows);
        const bool pure = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) <= 1;
        if (pure || static_cast<std::size_t>(depth) >= cfg_.max_depth || rows.size() < cfg_.min_samples_split)
            return make_leaf(id, std::move(counts));
        const Split split = best_split(rows, counts);
        if (split.feature < 0) return make_leaf(id, std::move(counts));
        std::vector<std::size_t> left_rows, right_rows;
        for (auto r : rows)
            (x_[r].values[static_cast<std::size_t>(split.feature)] <= split.threshold ? left_rows : right_rows).push_back(r);
        rows.clear();
        rows.shrink_to_fit();
        const int l = grow(std::move(left_rows), depth + 1);
        const int r = grow(std::move(right_rows), depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = l;
        node.right = r;
        return id;
    }

    std::span<const FeatureVector> x_;
    std::span<const std::size_t> y_;
    std::size_t n_classes_;
    const ForestConfig& cfg_;
    Rng rng_;
    DecisionTree tree_;
};

void validate_config(const ForestConfig& c) {
    if (c.n_trees < 1) throw ConfigError("forest: n_trees must be >= 1");
    if (c.max_depth < 1) throw ConfigError("forest: max_depth must be >= 1");
    if (c.min_samples_split < 1) throw ConfigError("forest: min_samples_split must be >= 1");
    if (c.feature_subsample_k < 1 || c.feature_subsample_k > kNumFeatures)
        throw ConfigError("forest: feature_subsample_k must be in [1, 11]");
}

// Candidate ids sorted by overhead rank; labels mapped to those indices.
struct Encoded {
    std::vector<std::string> ids;
    std::vector<FeatureVector> x;
    std::vector<std::size_t> y;
};

Encoded encode(std::span<const SelectorExample> data, std::span<const CandidateSpec> candidates) {
    validate_candidates(candidates);
    if (data.empty()) throw Error("train_forest: no training examples");
    std::vector<CandidateSpec> sorted(candidates.begin(), candidates.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const CandidateSpec& a, const CandidateSpec& b) { return a.overhead_rank < b.overhead_rank; });
    Encoded e;
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& c : sorted) {
        index.emplace(c.candidate_id, e.ids.size());
        e.ids.push_back(c.candidate_id);
    }
    e.x.reserve(data.size());
    e.y.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto it = index.find(data[i].label);
        if (it == index.end())
            throw Error("train_forest: example " + std::to_string(i) + " has unknown label '" + data[i].label + "'");
        if (!data[i].features.normalized)
            throw Error("train_forest: example " + std::to_string(i) + " is not normalized");
        e.x.push_back(data[i].features);
        e.y.push_back(it->second);
    }
    return e;
}

DecisionTree grow_forest_tree(const Encoded& e, const ForestConfig& cfg, std::size_t tree_index) {
    const std::uint64_t tree_seed = mix_seed(cfg.seed, tree_index);
    std::vector<std::size_t> rows(e.x.size());
    if (cfg.bootstrap) {
        Rng boot(mix_seed(tree_seed, 0xB007));
        for (auto& r : rows) r = uniform_index(boot, rows.size());
    } else {
        std::iota(rows.begin(), rows.end(), 0);
    }
    return TreeBuilder(e.x, e.y, e.ids.size(), cfg, tree_seed).build(std::move(rows));
}

std::size_t vote(const SelectorForest& forest, const FeatureVector& fv, std::vector<std::size_t>& votes) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& t : forest.trees) ++votes[t.predict(fv)];
    return argmax_lowest(votes);
}

constexpr std::size_t kInlineClasses = 16;

// Allocation-free vote for the common small-class case.
std::size_t vote_index(const SelectorForest& forest, const FeatureVector& fv) {
    const std::size_t k = forest.candidate_ids.size();
    if (k > kInlineClasses) {
        std::vector<std::size_t> votes(k);
        return vote(forest, fv, votes);
    }
    std::array<std::size_t, kInlineClasses> votes{};
    for (const auto& t : forest.trees) ++votes[t.predict(fv)];
    return argmax_lowest(std::span<const std::size_t>(votes.data(), k));
}

}  // namespace

void validate_candidates(std::span<const CandidateSpec> candidates) {
    if (candidates.empty()) throw ConfigError("no candidate models");
    std::set<std::string> ids;
    std::set<int> ranks;
    for (const auto& c : candidates) {
        if (c.candidate_id.empty()) throw ConfigError("candidate id must not be empty");
        if (c.overhead_rank < 0) throw ConfigError("candidate '" + c.candidate_id + "': overhead_rank must be >= 0");
        if (!ids.insert(c.candidate_id).second) throw ConfigError("duplicate candidate id '" + c.candidate_id + "'");
        if (!ranks.insert(c.overhead_rank).second)
            throw ConfigError("duplicate overhead_rank " + std::to_string(c.overhead_rank));
    }
}

double gini(std::span<const std::size_t> counts) {
    double total = 0.0;
    for (auto c : counts) total += static_cast<double>(c);
    if (total == 0.0) throw Error("gini: all class counts are zero");
    double sq = 0.0;
    for (auto c : counts) {
        const double p = static_cast<double>(c) / total;
        sq += p * p;
    }
    return 1.0 - sq;
}

std::size_t DecisionTree::predict(const FeatureVector& fv) const {
    const Node* n = nodes.data();
    while (n->feature >= 0) {
        const int next = fv.values[static_cast<std::size_t>(n->feature)] <= n->threshold ? n->left : n->right;
        n = nodes.data() + next;
    }
    return n->majority;
}

DecisionTree train_tree(std::span<const FeatureVector> features, std::span<const std::size_t> labels,
                        std::size_t n_classes, const ForestConfig& config, std::uint64_t tree_seed) {
    if (features.size() != labels.size()) throw Error("train_tree: features and labels differ in length");
    if (features.empty()) throw Error("train_tree: no rows");
    std::vector<std::size_t> rows(features.size());
    std::iota(rows.begin(), rows.end(), 0);
    return TreeBuilder(features, labels, n_classes, config, tree_seed).build(std::move(rows));
}

void validate_forest(const SelectorForest& f) {
    if (f.trees.empty()) throw ConfigError("forest: no trees");
    if (f.feature_subsample_k < 1 || f.feature_subsample_k > kNumFeatures)
        throw ConfigError("forest: feature_subsample_k must be in [1, 11]");
    if (f.candidate_ids.empty()) throw ConfigError("forest: no candidate ids");
    const std::size_t k = f.candidate_ids.size();
    for (std::size_t t = 0; t < f.trees.size(); ++t) {
        const auto& nodes = f.trees[t].nodes;
        const std::string where = "forest tree " + std::to_string(t) + ": ";
        if (nodes.empty()) throw ConfigError(where + "no nodes");
        std::vector<int> seen(nodes.size(), 0);
        std::vector<std::size_t> stack{0};
        while (!stack.empty()) {
            const auto i = stack.back();
            stack.pop_back();
            if (seen[i]++) throw ConfigError(where + "node reached twice");
            const auto& n = nodes[i];
            if (n.is_leaf()) {
                if (n.class_counts.size() != k) throw ConfigError(where + "leaf class count size mismatch");
                if (std::all_of(n.class_counts.begin(), n.class_counts.end(), [](std::size_t c) { return c == 0; }))
                    throw ConfigError(where + "leaf with all-zero class counts");
                if (n.majority != argmax_lowest(n.class_counts)) throw ConfigError(where + "leaf majority disagrees with counts");
                continue;
            }
            if (n.feature >= static_cast<int>(kNumFeatures)) throw ConfigError(where + "feature index out of range");
            for (int child : {n.left, n.right}) {
                if (child <= 0 || static_cast<std::size_t>(child) >= nodes.size())
                    throw ConfigError(where + "child index out of range");
                stack.push_back(static_cast<std::size_t>(child));
            }
        }
        if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw ConfigError(where + "unreachable node");
    }
}

SelectorForest detail::train_forest_serial(std::span<const SelectorExample> data,
                                           std::span<const CandidateSpec> candidates, const ForestConfig& config) {
    validate_config(config);
    const Encoded e = encode(data, candidates);
    SelectorForest forest{{}, config.feature_subsample_k, e.ids, config.seed};
    forest.trees.reserve(config.n_trees);
    for (std::size_t t = 0; t < config.n_trees; ++t) forest.trees.push_back(grow_forest_tree(e, config, t));
    return forest;
}

SelectorForest train_forest(std::span<const SelectorExample> data, std::span<const CandidateSpec> candidates,
                            const ForestConfig& config) {
    validate_config(config);
    const Encoded e = encode(data, candidates);
    SelectorForest forest{std::vector<DecisionTree>(config.n_trees), config.feature_subsample_k, e.ids, config.seed};
    const auto n = static_cast<std::ptrdiff_t>(config.n_trees);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t t = 0; t < n; ++t)
        forest.trees[static_cast<std::size_t>(t)] = grow_forest_tree(e, config, static_cast<std::size_t>(t));
    return forest;
}

ForestVote forest_predict(const SelectorForest& forest, const FeatureVector& fv) {
    if (!fv.normalized) throw Error("forest_predict: feature vector is not normalized");
    ForestVote v;
    v.vote_counts.assign(forest.candidate_ids.size(), 0);
    v.class_index = vote(forest, fv, v.vote_counts);
    v.candidate_id = forest.candidate_ids[v.class_index];
    return v;
}

std::size_t forest_predict_index(const SelectorForest& forest, const FeatureVector& fv) {
    if (!fv.normalized) throw Error("forest_predict: feature vector is not normalized");
    return vote_index(forest, fv);
}

std::vector<std::size_t> detail::forest_predict_batch_serial(const SelectorForest& forest,
                                                             std::span<const FeatureVector> inputs) {
    std::vector<std::size_t> out(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) out[i] = vote_index(forest, inputs[i]);
    return out;
}

std::vector<std::size_t> forest_predict_batch(const SelectorForest& forest, std::span<const FeatureVector> inputs) {
    std::vector<std::size_t> out(inputs.size());
    const auto n = static_cast<std::ptrdiff_t>(inputs.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = vote_index(forest, inputs[static_cast<std::size_t>(i)]);
    return out;
}

std::size_t lightest_adequate(std::span<const double> rmses, std::span<const int> ranks, double epsilon_rel) {
    if (rmses.empty() || rmses.size() != ranks.size()) throw Error("lightest_adequate: bad candidate arrays");
    const double best = *std::min_element(rmses.begin(), rmses.end());
    const double bound = (1.0 + epsilon_rel) * best;
    std::size_t choice = rmses.size();
    for (std::size_t i = 0; i < rmses.size(); ++i) {
        if (!(rmses[i] <= bound)) continue;
        if (choice == rmses.size() || ranks[i] < ranks[choice]) choice = i;
    }
    return choice;
}

std::vector<SelectorExample> label_windows(const Trace& trace, std::span<const LabelingCandidate> candidates,
                                           const NormalizationStats& norm, const LabelingConfig& config) {
    if (!trace.has_measured_power()) throw Error("label_windows: trace lacks measured_power_watts");
    if (candidates.empty()) throw ConfigError("label_windows: no candidates");
    if (config.window < 1) throw ConfigError("label_windows: window must be >= 1");
    if (!(config.epsilon_rel >= 0.0)) throw ConfigError("label_windows: epsilon must be >= 0");
    if (trace.size() < config.window) throw Error("label_windows: trace shorter than one window");
    {
        std::vector<CandidateSpec> specs;
        for (const auto& c : candidates) specs.push_back(c.spec);
        validate_candidates(specs);
    }

    std::vector<int> ranks;
    for (const auto& c : candidates) ranks.push_back(c.spec.overhead_rank);

    std::vector<SelectorExample> out;
    const std::size_t n_windows = trace.size() / config.window;
    std::vector<double> actual(config.window), predicted(config.window), rmses(candidates.size());
    for (std::size_t w = 0; w < n_windows; ++w) {
        const std::size_t start = w * config.window;
        for (std::size_t i = 0; i < config.window; ++i) actual[i] = *trace.samples[start + i].measured_power_watts;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            for (std::size_t i = 0; i < config.window; ++i)
                predicted[i] = candidates[c].predict_watts(trace.samples[start + i]);
            rmses[c] = rmse(predicted, actual);
        }
        const auto choice = lightest_adequate(rmses, ranks, config.epsilon_rel);
        out.push_back({normalize(trace.samples[start + config.window / 2], norm), candidates[choice].spec.candidate_id});
    }
    return out;
}

void write_selector_examples_csv(std::ostream& out, std::span<const SelectorExample> examples) {
    const auto prec = out.precision(std::numeric_limits<double>::max_digits10);
    for (std::size_t k = 0; k < kNumFeatures; ++k) out << 'f' << k << ',';
    out << "label\n";
    for (const auto& e : examples) {
        for (double v : e.features.values) out << v << ',';
        out << e.label << '\n';
    }
    out.precision(prec);
}

}  // namespace hydra
