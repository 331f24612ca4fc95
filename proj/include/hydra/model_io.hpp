#pragma once

// Versioned JSON documents for profiles, candidate models and composed Hydra
// models. Every loader rejects unknown format versions and inconsistent shapes
// with ConfigError.

#include <filesystem>
#include <optional>
#include <variant>

#include <json.hpp>

#include "hydra/hydra.hpp"

namespace hydra {

inline constexpr int kModelFormatVersion = 1;

nlohmann::json profile_to_json(const ServerProfile& profile);
ServerProfile profile_from_json(const nlohmann::json& doc);
ServerProfile load_profile(const std::filesystem::path& path);
void save_profile(const std::filesystem::path& path, const ServerProfile& profile);

nlohmann::json norm_stats_to_json(const NormalizationStats& stats);
NormalizationStats norm_stats_from_json(const nlohmann::json& doc);

nlohmann::json forest_to_json(const SelectorForest& forest);
SelectorForest forest_from_json(const nlohmann::json& doc);

/// `{format_version, kind: "analytical"|"mlp", ...}`, optionally carrying the
/// profile the model was trained against.
nlohmann::json model_to_json(const CandidateModel& model, const std::optional<ServerProfile>& profile = std::nullopt);

struct CandidateModelDoc {
    CandidateModel model;
    std::optional<ServerProfile> profile;
};

CandidateModelDoc model_from_json(const nlohmann::json& doc);

nlohmann::json hydra_to_json(const HydraModel& model);
HydraModel hydra_from_json(const nlohmann::json& doc);

/// Either a single candidate model or a composed Hydra model.
using ModelFile = std::variant<CandidateModelDoc, HydraModel>;

ModelFile load_model_file(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace hydra
