#include <doctest.h>

#include <fstream>

#include "hydra/error.hpp"
#include "hydra/model_io.hpp"
#include "hydra/pipeline.hpp"
#include "test_support.hpp"

using namespace hydra;

namespace {

HydraModel small_hydra() {
    SyntheticConfig cfg;
    cfg.regime = Regime::mixed;
    cfg.duration_samples = 600;
    cfg.seed = 2;
    const Trace tr = generate_synthetic(cfg);
    MlpModel mlp = mlp_init(5);
    mlp.norm_stats = fit_normalization(tr);
    SelectorTrainingConfig sc;
    sc.forest.n_trees = 7;
    sc.selection_interval = 3;
    return build_hydra(tr, make_candidates({make_analytical(2.0), mlp}), test::kProfile, sc).model;
}

}  // namespace

TEST_CASE("profile round trip") {
    test::TempDir dir;
    save_profile(dir.file("p.json"), test::kProfile);
    CHECK(load_profile(dir.file("p.json")) == test::kProfile);
    auto j = profile_to_json(test::kProfile);
    j["max_power_watts"] = 50.0;
    CHECK_THROWS(profile_from_json(j));
    CHECK_THROWS_AS(load_profile(dir.file("missing.json")), Error);
}

TEST_CASE("candidate model round trips are exact") {
    const MlpModel mlp = [] {
        MlpModel m = mlp_init(3);
        m.norm_stats = fit_normalization(test::random_trace(4));
        return m;
    }();
    for (const CandidateModel& model : {CandidateModel{make_analytical(0.5)}, CandidateModel{mlp}}) {
        const auto doc = model_from_json(model_to_json(model, test::kProfile));
        CHECK(doc.model == model);
        REQUIRE(doc.profile.has_value());
        CHECK(*doc.profile == test::kProfile);
        // through text as well
        const auto reparsed = model_from_json(nlohmann::json::parse(model_to_json(model).dump()));
        CHECK(reparsed.model == model);
        CHECK_FALSE(reparsed.profile.has_value());
    }
}

TEST_CASE("hydra round trip preserves predictions") {
    const HydraModel m = small_hydra();
    test::TempDir dir;
    save_json(dir.file("h.json"), hydra_to_json(m));
    const auto loaded = load_model_file(dir.file("h.json"));
    REQUIRE(std::holds_alternative<HydraModel>(loaded));
    const auto& back = std::get<HydraModel>(loaded);
    CHECK(back.forest == m.forest);
    CHECK(back.norm_stats == m.norm_stats);
    CHECK(back.profile == m.profile);
    CHECK(back.selection_interval == 3);
    REQUIRE(back.candidates.size() == m.candidates.size());
    for (std::size_t i = 0; i < m.candidates.size(); ++i) {
        CHECK(back.candidates[i].spec == m.candidates[i].spec);
        CHECK(back.candidates[i].model == m.candidates[i].model);
    }
    const Trace tr = test::random_trace(7);
    CHECK(run_over_trace(back, tr) == run_over_trace(m, tr));
}

TEST_CASE("single model files load as candidates") {
    test::TempDir dir;
    save_json(dir.file("a.json"), model_to_json(make_analytical(2.0)));
    const auto loaded = load_model_file(dir.file("a.json"));
    REQUIRE(std::holds_alternative<CandidateModelDoc>(loaded));
    CHECK(std::get<CandidateModelDoc>(loaded).model == CandidateModel{make_analytical(2.0)});
}

TEST_CASE("malformed documents are rejected") {
    SUBCASE("format version") {
        auto j = model_to_json(make_analytical(1.0));
        j["format_version"] = 99;
        CHECK_THROWS_AS(model_from_json(j), ConfigError);
    }
    SUBCASE("unknown kind") {
        auto j = model_to_json(make_analytical(1.0));
        j["kind"] = "rnn";
        CHECK_THROWS_AS(model_from_json(j), ConfigError);
    }
    SUBCASE("alpha outside the family") {
        auto j = model_to_json(make_analytical(1.0));
        j["alpha"] = 3.0;
        CHECK_THROWS_AS(model_from_json(j), ConfigError);
    }
    SUBCASE("mlp layer shape") {
        auto j = model_to_json(mlp_init(0));
        j["weights"][2].erase(0);
        CHECK_THROWS_AS(model_from_json(j), ConfigError);
    }
    SUBCASE("missing key") {
        auto j = model_to_json(mlp_init(0));
        j.erase("biases");
        CHECK_THROWS_AS(model_from_json(j), ConfigError);
    }
    SUBCASE("forest tree count") {
        auto j = hydra_to_json(small_hydra());
        j["forest"]["n_trees"] = 99;
        CHECK_THROWS_AS(hydra_from_json(j), ConfigError);
    }
    SUBCASE("forest refers to an absent candidate") {
        auto j = hydra_to_json(small_hydra());
        j["forest"]["candidate_ids"][0] = "ghost";
        CHECK_THROWS_AS(hydra_from_json(j), ConfigError);
    }
    SUBCASE("hydra file where a candidate is expected") {
        CHECK_THROWS_AS(model_from_json(hydra_to_json(small_hydra())), ConfigError);
    }
    SUBCASE("not json") {
        test::TempDir dir;
        {
            std::ofstream out(dir.file("bad.json"));
            out << "{not json";
        }
        CHECK_THROWS_AS(load_model_file(dir.file("bad.json")), ConfigError);
    }
}
