// OpenMP kernels against their serial references. Equality is exact: the
// parallel paths only partition independent work.

#include <doctest.h>

#include <omp.h>

#include "hydra/hydra.hpp"
#include "hydra/pipeline.hpp"
#include "test_support.hpp"

using namespace hydra;

namespace {

std::vector<SelectorExample> noisy_examples(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SelectorExample> out(n);
    for (auto& e : out) {
        e.features.normalized = true;
        for (auto& v : e.features.values) v = uniform01(rng);
        e.label = e.features.values[2] + 0.3 * uniform01(rng) > 0.6 ? "mlp" : "analytical";
    }
    return out;
}

const std::vector<CandidateSpec> kSpecs{{"analytical", 0}, {"mlp", 1}};

struct ThreadCount {
    int saved = omp_get_max_threads();
    explicit ThreadCount(int n) { omp_set_num_threads(n); }
    ~ThreadCount() { omp_set_num_threads(saved); }
};

}  // namespace

TEST_CASE("parallel forest training equals the serial reference") {
    const auto data = noisy_examples(400, 1);
    ForestConfig cfg;
    cfg.n_trees = 16;
    cfg.seed = 9;
    const auto serial = detail::train_forest_serial(data, kSpecs, cfg);
    for (int threads : {1, 2, 4}) {
        ThreadCount tc(threads);
        CHECK(train_forest(data, kSpecs, cfg) == serial);
    }
}

TEST_CASE("parallel batch kernels equal their serial references") {
    const auto data = noisy_examples(300, 2);
    ForestConfig cfg;
    cfg.n_trees = 12;
    const auto forest = train_forest(data, kSpecs, cfg);
    std::vector<FeatureVector> x;
    for (const auto& e : noisy_examples(500, 3)) x.push_back(e.features);

    const auto votes_serial = detail::forest_predict_batch_serial(forest, x);
    const auto model = mlp_init(4);
    std::vector<double> mlp_serial(x.size()), mlp_par(x.size());
    detail::mlp_forward_batch_serial(model, x, mlp_serial);
    for (int threads : {1, 3}) {
        ThreadCount tc(threads);
        CHECK(forest_predict_batch(forest, x) == votes_serial);
        mlp_forward_batch(model, x, mlp_par);
        CHECK(mlp_par == mlp_serial);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(forest_predict(forest, x[i]).class_index == votes_serial[i]);
        CHECK(mlp_serial[i] == mlp_forward(model, x[i]));
    }
}

TEST_CASE("run_over_trace equals sequential hydra_predict at every cadence") {
    SyntheticConfig sc;
    sc.regime = Regime::mixed;
    sc.duration_samples = 900;
    sc.seed = 5;
    const Trace tr = generate_synthetic(sc);
    MlpModel mlp = mlp_init(1);
    mlp.norm_stats = fit_normalization(tr);
    SelectorTrainingConfig cfg;
    cfg.forest.n_trees = 10;
    auto model = build_hydra(tr, make_candidates({AnalyticalModel{1.0}, mlp}), sc.profile, cfg).model;
    for (std::size_t interval : {1u, 4u, 7u}) {
        model.selection_interval = interval;
        const auto serial = detail::run_over_trace_serial(model, tr);
        for (int threads : {1, 2}) {
            ThreadCount tc(threads);
            CHECK(run_over_trace(model, tr) == serial);
        }
    }
}
