#include <doctest.h>

#include <sstream>

#include "hydra/error.hpp"
#include "hydra/hydra.hpp"
#include "hydra/pipeline.hpp"
#include "test_support.hpp"

using namespace hydra;

namespace {

const ServerProfile kServer{"srv", 237.58, 350.0, ""};

// Two candidates; the forest picks "mlp" when cpu utilization is high.
HydraModel two_candidate_model(const Trace& tr) {
    HydraModel m;
    m.profile = test::kProfile;
    m.norm_stats = fit_normalization(tr);
    MlpModel mlp = mlp_init(1);
    mlp.norm_stats = m.norm_stats;
    m.candidates = make_candidates({make_analytical(1.0), mlp});
    m.forest.candidate_ids = {"analytical", "mlp"};
    m.forest.feature_subsample_k = kNumFeatures;
    DecisionTree t;
    t.nodes.push_back({2, 0.5, 1, 2, {5, 5}, 0});
    t.nodes.push_back({-1, 0.0, -1, -1, {5, 0}, 0});
    t.nodes.push_back({-1, 0.0, -1, -1, {0, 5}, 1});
    m.forest.trees.push_back(t);
    return m;
}

Trace sweep(std::size_t n) {
    Trace tr;
    tr.server_id = "sweep";
    for (std::size_t i = 0; i < n; ++i) {
        const double util = static_cast<double>((i * 37) % 101);
        tr.samples.push_back(test::sample_at(static_cast<double>(i), util, 100.0 + util));
    }
    return tr;
}

}  // namespace

TEST_CASE("scale factor conversion") {
    CHECK(watts_to_scale(294.0, kServer) == doctest::Approx(56.42 / 112.42).epsilon(1e-12));
    CHECK(watts_to_scale(237.58, kServer) == 0.0);
    CHECK(watts_to_scale(350.0, kServer) == 1.0);
    // no clamping on either side
    CHECK(watts_to_scale(200.0, kServer) < 0.0);
    CHECK(watts_to_scale(400.0, kServer) > 1.0);
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double w = uniform(rng, 100.0, 500.0);
        CHECK(scale_to_watts(watts_to_scale(w, kServer), kServer) == doctest::Approx(w).epsilon(1e-9));
    }
}

TEST_CASE("single analytical candidate") {
    const Trace tr = sweep(20);
    const auto c = make_candidates({make_analytical(2.0)});
    const auto m = make_single_candidate_hydra(c[0], test::kProfile, fit_normalization(tr));
    CHECK_NOTHROW(validate_hydra(m));
    SelectionState state;
    const auto p0 = hydra_predict(m, test::sample_at(0, 0.0), state);
    CHECK(p0.predicted_watts == test::kProfile.idle_power_watts);
    CHECK(p0.scale_factor == 0.0);
    CHECK(p0.chosen_model == "analytical");
    const auto p1 = hydra_predict(m, test::sample_at(1, 50.0), state);
    CHECK(p1.predicted_watts == doctest::Approx(125.0));
    CHECK(p1.scale_factor == doctest::Approx(0.25));
}

TEST_CASE("candidate predictions") {
    const auto a = make_analytical(1.0);
    CHECK(candidate_predict_watts(a, test::kProfile, test::sample_at(0, 40.0)) == doctest::Approx(140.0));
    // utilization outside [0, 100] is clamped
    auto s = test::sample_at(0, 100.0);
    s.cpu_util_pct = 100.4;
    CHECK(candidate_predict_watts(a, test::kProfile, s) == 200.0);
    CHECK(kind_name(a) == "analytical");
    CHECK(kind_name(mlp_init(0)) == "mlp");
}

TEST_CASE("selection cadence") {
    const Trace tr = sweep(23);
    auto m = two_candidate_model(tr);
    CHECK_NOTHROW(validate_hydra(m));
    for (std::size_t interval : {1u, 5u, 7u, 23u, 40u}) {
        CAPTURE(interval);
        m.selection_interval = interval;
        const auto preds = run_over_trace(m, tr);
        REQUIRE(preds.size() == tr.size());
        std::size_t invoked = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            CHECK(preds[i].selector_invoked == (i % interval == 0));
            invoked += preds[i].selector_invoked;
            // the choice is the one made at the latest invocation
            const auto& anchor = tr.samples[i - i % interval];
            const bool high = normalize(anchor, m.norm_stats).values[2] > 0.5;
            CHECK(preds[i].chosen_model == (high ? "mlp" : "analytical"));
            CHECK(preds[i].measured_power_watts == tr.samples[i].measured_power_watts);
            CHECK(preds[i].timestamp == tr.samples[i].timestamp);
        }
        CHECK(invoked == (tr.size() + interval - 1) / interval);
        CHECK(preds == detail::run_over_trace_serial(m, tr));
    }
}

TEST_CASE("predictions carry the chosen candidate's output") {
    const Trace tr = sweep(40);
    const auto m = two_candidate_model(tr);
    for (const auto& p : run_over_trace(m, tr)) {
        const auto& s = tr.samples[static_cast<std::size_t>(p.timestamp)];
        const auto& c = m.candidates[p.chosen_model == "analytical" ? 0 : 1];
        CHECK(p.predicted_watts == candidate_predict_watts(c.model, m.profile, s));
        CHECK(p.scale_factor == doctest::Approx(watts_to_scale(p.predicted_watts, m.profile)).epsilon(1e-12));
    }
}

TEST_CASE("model consistency checks") {
    const Trace tr = sweep(10);
    auto m = two_candidate_model(tr);
    SUBCASE("forest names an unknown candidate") {
        m.forest.candidate_ids[1] = "rnn";
        CHECK_THROWS_AS(validate_hydra(m), ConfigError);
        SelectionState state;
        CHECK_THROWS_AS(hydra_predict(m, test::sample_at(0, 100.0), state), ConfigError);
    }
    SUBCASE("zero interval") {
        m.selection_interval = 0;
        CHECK_THROWS_AS(validate_hydra(m), ConfigError);
        CHECK_THROWS_AS(run_over_trace(m, tr), ConfigError);
    }
    SUBCASE("colliding ranks") {
        m.candidates[1].spec.overhead_rank = 0;
        CHECK_THROWS_AS(validate_hydra(m), ConfigError);
    }
}

TEST_CASE("make_candidates assigns ids and ranks") {
    const auto c = make_candidates({mlp_init(0), make_analytical(1.0), mlp_init(1), make_analytical(2.0)});
    REQUIRE(c.size() == 4);
    CHECK(c[0].spec.candidate_id == "mlp");
    CHECK(c[1].spec.candidate_id == "analytical");
    CHECK(c[2].spec.candidate_id == "mlp_2");
    CHECK(c[3].spec.candidate_id == "analytical_2");
    // analytical cheaper than mlp, then by position
    CHECK(c[1].spec.overhead_rank == 0);
    CHECK(c[3].spec.overhead_rank == 1);
    CHECK(c[0].spec.overhead_rank == 2);
    CHECK(c[2].spec.overhead_rank == 3);
}

TEST_CASE("predictions CSV round trip") {
    const Trace tr = sweep(30);
    auto m = two_candidate_model(tr);
    m.selection_interval = 4;
    const auto preds = run_over_trace(m, tr);
    std::stringstream buf;
    write_predictions_csv(buf, preds);
    CHECK(buf.str().rfind("timestamp,predicted_watts,scale_factor,chosen_model,selector_invoked,measured_power_watts\n", 0) == 0);
    CHECK(parse_predictions_csv(buf) == preds);

    SUBCASE("ground truth column only when every row has it") {
        auto partial = preds;
        partial[3].measured_power_watts.reset();
        std::stringstream b2;
        write_predictions_csv(b2, partial);
        CHECK(b2.str().rfind("timestamp,predicted_watts,scale_factor,chosen_model,selector_invoked\n", 0) == 0);
        const auto back = parse_predictions_csv(b2);
        for (const auto& p : back) CHECK_FALSE(p.measured_power_watts.has_value());
    }
}

TEST_CASE("predictions CSV errors name line and field") {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_predictions_csv(in);
    };
    const std::string header = "timestamp,predicted_watts,scale_factor,chosen_model,selector_invoked\n";
    CHECK_THROWS_AS(parse(""), ParseError);
    CHECK_THROWS_AS(parse("a,b,c\n"), ParseError);
    try {
        parse(header + "0,150,0.5,mlp,1\n1,abc,0.5,mlp,0\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
        CHECK(e.field() == "predicted_watts");
    }
    CHECK_THROWS_AS(parse(header + "0,150,0.5,,1\n"), ParseError);
    CHECK_THROWS_AS(parse(header + "0,150,0.5,mlp,2\n"), ParseError);
    CHECK_THROWS_AS(parse(header + "0,150,0.5,mlp\n"), ParseError);
    CHECK(parse(header).empty());
}
