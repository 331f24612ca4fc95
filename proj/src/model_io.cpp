#include "hydra/model_io.hpp"

#include <algorithm>

#include <fstream>

#include "hydra/error.hpp"

namespace hydra {

using nlohmann::json;

namespace {

// Wraps nlohmann accessors so type/key problems surface as ConfigError with
// the key name.
template <typename T>
T get(const json& doc, const char* key) {
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model file: key '") + key + "': " + e.what());
    }
}

const json& child(const json& doc, const char* key) {
    if (!doc.is_object() || !doc.contains(key)) throw ConfigError(std::string("model file: missing key '") + key + "'");
    return doc.at(key);
}

void check_version(const json& doc) {
    if (!doc.is_object()) throw ConfigError("model file: expected a JSON object");
    const auto v = get<int>(doc, "format_version");
    if (v != kModelFormatVersion)
        throw ConfigError("model file: unsupported format_version " + std::to_string(v) + " (expected " +
                          std::to_string(kModelFormatVersion) + ")");
}

json mlp_to_json(const MlpModel& m) {
    json weights = json::array(), biases = json::array();
    for (const auto& layer : m.layers) {
        json rows = json::array();
        for (std::size_t o = 0; o < layer.outputs; ++o)
            rows.push_back(std::vector<double>(layer.weights.begin() + static_cast<std::ptrdiff_t>(o * layer.inputs),
                                               layer.weights.begin() + static_cast<std::ptrdiff_t>((o + 1) * layer.inputs)));
        weights.push_back(std::move(rows));
        biases.push_back(layer.biases);
    }
    return json{{"layer_sizes", kMlpLayerSizes}, {"weights", weights}, {"biases", biases},
                {"norm_stats", norm_stats_to_json(m.norm_stats)}, {"output_clamp", {m.clamp_lo, m.clamp_hi}}};
}

MlpModel mlp_from_json(const json& doc) {
    const auto sizes = get<std::vector<std::size_t>>(doc, "layer_sizes");
    if (sizes.size() != kMlpLayerSizes.size() || !std::equal(sizes.begin(), sizes.end(), kMlpLayerSizes.begin()))
        throw ConfigError("mlp: layer_sizes must be [11,16,32,64,32,16,8,1]");
    const auto& weights = child(doc, "weights");
    const auto& biases = child(doc, "biases");
    if (!weights.is_array() || weights.size() != kMlpWeightLayers || !biases.is_array() ||
        biases.size() != kMlpWeightLayers)
        throw ConfigError("mlp: weights/biases must have one entry per layer");

    MlpModel m;
    for (std::size_t l = 0; l < kMlpWeightLayers; ++l) {
        auto& layer = m.layers[l];
        layer.inputs = kMlpLayerSizes[l];
        layer.outputs = kMlpLayerSizes[l + 1];
        const auto& rows = weights[l];
        if (!rows.is_array() || rows.size() != layer.outputs)
            throw ConfigError("mlp layer " + std::to_string(l) + ": expected " + std::to_string(layer.outputs) + " weight rows");
        for (const auto& row : rows) {
            if (!row.is_array() || row.size() != layer.inputs)
                throw ConfigError("mlp layer " + std::to_string(l) + ": weight row must have " +
                                  std::to_string(layer.inputs) + " entries");
            for (const auto& v : row) {
                if (!v.is_number()) throw ConfigError("mlp layer " + std::to_string(l) + ": non-numeric weight");
                layer.weights.push_back(v.get<double>());
            }
        }
        if (!biases[l].is_array() || biases[l].size() != layer.outputs)
            throw ConfigError("mlp layer " + std::to_string(l) + ": expected " + std::to_string(layer.outputs) + " biases");
        for (const auto& v : biases[l]) {
            if (!v.is_number()) throw ConfigError("mlp layer " + std::to_string(l) + ": non-numeric bias");
            layer.biases.push_back(v.get<double>());
        }
    }
    m.norm_stats = norm_stats_from_json(child(doc, "norm_stats"));
    const auto clamp = get<std::vector<double>>(doc, "output_clamp");
    if (clamp.size() != 2) throw ConfigError("mlp: output_clamp must be [lo, hi]");
    m.clamp_lo = clamp[0];
    m.clamp_hi = clamp[1];
    validate_mlp(m);
    return m;
}

json candidate_body(const CandidateModel& model) {
    if (const auto* a = std::get_if<AnalyticalModel>(&model)) return json{{"alpha", a->alpha}};
    return mlp_to_json(std::get<MlpModel>(model));
}

CandidateModel candidate_from_body(const std::string& kind, const json& doc) {
    if (kind == "analytical") return make_analytical(get<double>(doc, "alpha"));
    if (kind == "mlp") return mlp_from_json(doc);
    throw ConfigError("model file: unknown kind '" + kind + "'");
}

}  // namespace

json profile_to_json(const ServerProfile& p) {
    return json{{"server_id", p.server_id},
                {"idle_power_watts", p.idle_power_watts},
                {"max_power_watts", p.max_power_watts},
                {"description", p.description}};
}

ServerProfile profile_from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("profile: expected a JSON object");
    ServerProfile p;
    p.server_id = doc.value("server_id", std::string{});
    p.idle_power_watts = get<double>(doc, "idle_power_watts");
    p.max_power_watts = get<double>(doc, "max_power_watts");
    p.description = doc.value("description", std::string{});
    validate_profile(p);
    return p;
}

ServerProfile load_profile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open profile file " + path.string());
    try {
        return profile_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ConfigError("profile " + path.string() + ": " + e.what());
    }
}

void save_profile(const std::filesystem::path& path, const ServerProfile& profile) {
    save_json(path, profile_to_json(profile));
}

json norm_stats_to_json(const NormalizationStats& stats) {
    json arr = json::array();
    for (std::size_t k = 0; k < kNumFeatures; ++k)
        arr.push_back({{"feature", kFeatureNames[k]}, {"min", stats.ranges[k].min}, {"max", stats.ranges[k].max}});
    return arr;
}

NormalizationStats norm_stats_from_json(const json& doc) {
    if (!doc.is_array() || doc.size() != kNumFeatures) throw ConfigError("norm_stats: expected 11 feature entries");
    NormalizationStats stats;
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
        const auto& e = doc[k];
        if (get<std::string>(e, "feature") != kFeatureNames[k])
            throw ConfigError("norm_stats: entry " + std::to_string(k) + " must be '" + std::string(kFeatureNames[k]) + "'");
        stats.ranges[k] = {get<double>(e, "min"), get<double>(e, "max")};
        if (!(stats.ranges[k].max >= stats.ranges[k].min))
            throw ConfigError("norm_stats: max < min for " + std::string(kFeatureNames[k]));
    }
    return stats;
}

json forest_to_json(const SelectorForest& f) {
    json trees = json::array();
    for (const auto& t : f.trees) {
        json feature = json::array(), threshold = json::array(), left = json::array(), right = json::array(),
             counts = json::array();
        for (const auto& n : t.nodes) {
            feature.push_back(n.feature);
            threshold.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            counts.push_back(n.class_counts);
        }
        trees.push_back({{"depth", t.depth}, {"feature", feature}, {"threshold", threshold}, {"left", left},
                         {"right", right}, {"class_counts", counts}});
    }
    return json{{"n_trees", f.trees.size()}, {"feature_subsample_k", f.feature_subsample_k},
                {"candidate_ids", f.candidate_ids}, {"seed", f.seed}, {"trees", trees}};
}

SelectorForest forest_from_json(const json& doc) {
    SelectorForest f;
    f.feature_subsample_k = get<std::size_t>(doc, "feature_subsample_k");
    f.candidate_ids = get<std::vector<std::string>>(doc, "candidate_ids");
    f.seed = get<std::uint64_t>(doc, "seed");
    const auto& trees = child(doc, "trees");
    if (!trees.is_array() || trees.size() != get<std::size_t>(doc, "n_trees"))
        throw ConfigError("forest: n_trees does not match the number of trees");
    for (const auto& t : trees) {
        const auto feature = get<std::vector<int>>(t, "feature");
        const auto threshold = get<std::vector<double>>(t, "threshold");
        const auto left = get<std::vector<int>>(t, "left");
        const auto right = get<std::vector<int>>(t, "right");
        const auto counts = get<std::vector<std::vector<std::size_t>>>(t, "class_counts");
        const auto n = feature.size();
        if (threshold.size() != n || left.size() != n || right.size() != n || counts.size() != n)
            throw ConfigError("forest: node arrays differ in length");
        DecisionTree tree;
        tree.depth = get<int>(t, "depth");
        for (std::size_t i = 0; i < n; ++i) {
            DecisionTree::Node node{feature[i], threshold[i], left[i], right[i], counts[i]};
            if (node.is_leaf() && !node.class_counts.empty())
                node.majority = static_cast<std::size_t>(
                    std::max_element(node.class_counts.begin(), node.class_counts.end()) - node.class_counts.begin());
            tree.nodes.push_back(std::move(node));
        }
        f.trees.push_back(std::move(tree));
    }
    validate_forest(f);
    return f;
}

json model_to_json(const CandidateModel& model, const std::optional<ServerProfile>& profile) {
    json doc = candidate_body(model);
    doc["format_version"] = kModelFormatVersion;
    doc["kind"] = std::string(kind_name(model));
    if (profile) doc["profile"] = profile_to_json(*profile);
    return doc;
}

CandidateModelDoc model_from_json(const json& doc) {
    check_version(doc);
    const auto kind = get<std::string>(doc, "kind");
    if (kind == "hydra") throw ConfigError("model file: expected a single candidate model, found a hydra model");
    CandidateModelDoc out{candidate_from_body(kind, doc), std::nullopt};
    if (doc.contains("profile")) out.profile = profile_from_json(doc.at("profile"));
    return out;
}

json hydra_to_json(const HydraModel& m) {
    json candidates = json::array();
    for (const auto& c : m.candidates)
        candidates.push_back({{"id", c.spec.candidate_id},
                              {"overhead_rank", c.spec.overhead_rank},
                              {"model", model_to_json(c.model)}});
    return json{{"format_version", kModelFormatVersion},
                {"kind", "hydra"},
                {"profile", profile_to_json(m.profile)},
                {"norm_stats", norm_stats_to_json(m.norm_stats)},
                {"selection_interval", m.selection_interval},
                {"candidates", candidates},
                {"forest", forest_to_json(m.forest)}};
}

HydraModel hydra_from_json(const json& doc) {
    check_version(doc);
    if (get<std::string>(doc, "kind") != "hydra") throw ConfigError("model file: kind must be 'hydra'");
    HydraModel m;
    m.profile = profile_from_json(child(doc, "profile"));
    m.norm_stats = norm_stats_from_json(child(doc, "norm_stats"));
    m.selection_interval = get<std::size_t>(doc, "selection_interval");
    const auto& candidates = child(doc, "candidates");
    if (!candidates.is_array()) throw ConfigError("hydra: candidates must be an array");
    for (const auto& c : candidates)
        m.candidates.push_back({{get<std::string>(c, "id"), get<int>(c, "overhead_rank")},
                                model_from_json(child(c, "model")).model});
    m.forest = forest_from_json(child(doc, "forest"));
    validate_hydra(m);
    return m;
}

ModelFile load_model_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open model file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("model file " + path.string() + ": " + e.what());
    }
    check_version(doc);
    if (get<std::string>(doc, "kind") == "hydra") return hydra_from_json(doc);
    return model_from_json(doc);
}

void save_json(const std::filesystem::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << doc.dump(1) << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

}  // namespace hydra
