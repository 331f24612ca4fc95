#include <doctest.h>

#include <cmath>
#include <sstream>

#include "hydra/error.hpp"
#include "hydra/stats.hpp"
#include "test_support.hpp"

using namespace hydra;

TEST_CASE("pearson on exact linear series") {
    const std::vector<double> x{1, 2, 3};
    CHECK(pearson(x, std::vector<double>{2, 4, 6}) == doctest::Approx(1.0));
    CHECK(pearson(x, std::vector<double>{6, 4, 2}) == doctest::Approx(-1.0));
}

TEST_CASE("pearson matches the textbook formula") {
    // sum dx*dy = 5.5, sum dx^2 = 5, sum dy^2 = 8.75 (tests/oracles/compute_oracles.py)
    const double expected = 0.8315218406202999;
    CHECK(pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 5}) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("pearson symmetry and affine invariance") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(30), y(30);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = uniform(rng, -10, 10);
            y[i] = 0.3 * x[i] + uniform(rng, -5, 5);
        }
        const double r = pearson(x, y);
        CHECK(r >= -1.0);
        CHECK(r <= 1.0);
        CHECK(pearson(y, x) == doctest::Approx(r).epsilon(1e-12));
        const double a = uniform(rng, -4, 4), b = uniform(rng, -100, 100);
        if (std::abs(a) < 1e-3) continue;
        std::vector<double> ax(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) ax[i] = a * x[i] + b;
        CHECK(pearson(ax, y) == doctest::Approx((a > 0 ? 1 : -1) * r).epsilon(1e-9));
    }
}

TEST_CASE("pearson errors") {
    CHECK_THROWS_AS(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), UndefinedCorrelation);
    CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{1}), Error);
    CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), Error);
}

TEST_CASE("rmse basics") {
    const std::vector<double> a{1, 5, 9};
    CHECK(rmse(a, a) == 0.0);
    CHECK(rmse(std::vector<double>{1, 2}, std::vector<double>{2, 4}) == doctest::Approx(std::sqrt(2.5)).epsilon(1e-15));
    CHECK(rmse(std::vector<double>{4, 8, 12}, a) == doctest::Approx(3.0));
    CHECK(rmse(std::vector<double>{2, 3}, std::vector<double>{7, 1}) ==
          rmse(std::vector<double>{7, 1}, std::vector<double>{2, 3}));
    CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), Error);
    CHECK_THROWS_AS(rmse(std::vector<double>{1}, std::vector<double>{1, 2}), Error);
}

TEST_CASE("feature selection on the compute regime") {
    SyntheticConfig cfg;
    cfg.regime = Regime::compute;
    cfg.duration_samples = 1000;
    cfg.seed = 8;
    const Trace tr = generate_synthetic(cfg);
    const auto report = select_features(tr, 0.7);
    CHECK(report.features.size() == kNumFeatures);
    CHECK(report.is_selected("cpu_util_pct"));
    CHECK_FALSE(report.is_selected("shared_mem_bytes"));

    // selected is exactly |r| >= threshold
    for (const auto& f : report.features) CHECK(f.selected == (f.r.has_value() && std::abs(*f.r) >= 0.7));

    SUBCASE("constant columns are undefined and never selected") {
        const auto& sys = select_features(test::law_trace(100, 1.0, 3), 0.7).features[8];
        CHECK(sys.feature == "syscalls_per_s");
        CHECK_FALSE(sys.r.has_value());
        CHECK_FALSE(sys.selected);
    }
    SUBCASE("threshold 0 selects every defined feature") {
        const auto all = select_features(tr, 0.0);
        for (const auto& f : all.features) CHECK(f.selected == f.r.has_value());
    }
    SUBCASE("raising the threshold never adds features") {
        std::size_t prev = kNumFeatures + 1;
        for (double t = 0.0; t <= 1.0; t += 0.05) {
            const auto n = select_features(tr, t).selected().size();
            CHECK(n <= prev);
            prev = n;
        }
    }
}

TEST_CASE("feature selection requires measured power") {
    Trace tr{"x", 1.0, {test::sample_at(0, 10), test::sample_at(1, 20)}};
    CHECK_THROWS_AS(select_features(tr), Error);
}

TEST_CASE("correlation CSV layout") {
    const Trace tr = test::law_trace(50, 1.0, 2);
    std::ostringstream out;
    write_correlation_csv(out, select_features(tr));
    const std::string text = out.str();
    CHECK(text.rfind("feature,r,selected\n", 0) == 0);
    const auto util = text.find("\ncpu_util_pct,");
    REQUIRE(util != std::string::npos);
    CHECK(text.substr(util, text.find('\n', util + 1) - util).ends_with(",true"));
    CHECK(text.find("syscalls_per_s,,false") != std::string::npos);
}

TEST_CASE("normalization maps the training range to [0,1]") {
    Trace tr{"x", 1.0, {test::sample_at(0, 10), test::sample_at(1, 60), test::sample_at(2, 90)}};
    const auto stats = fit_normalization(tr);
    CHECK(stats.ranges[2].min == 10.0);
    CHECK(stats.ranges[2].max == 90.0);
    CHECK(stats.ranges[8].constant());

    const auto lo = normalize(test::sample_at(0, 10), stats);
    const auto hi = normalize(test::sample_at(0, 90), stats);
    CHECK(lo.normalized);
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
        if (stats.ranges[k].constant()) {
            CHECK(lo.values[k] == 0.5);
            CHECK(hi.values[k] == 0.5);
        } else {
            CHECK(lo.values[k] == 0.0);
            CHECK(hi.values[k] == 1.0);
        }
    }
    CHECK(normalize(test::sample_at(0, 100), stats).values[2] == 1.0);
    CHECK(normalize(test::sample_at(0, 0), stats).values[2] == 0.0);
    CHECK(normalize(test::sample_at(0, 50), stats).values[2] == doctest::Approx(0.5));
}

TEST_CASE("denormalize inverts normalize inside the range") {
    const auto tr = test::random_trace(3);
    const auto stats = fit_normalization(tr);
    for (const auto& s : tr.samples) {
        const auto raw = s.features();
        const auto back = denormalize(normalize(s, stats), stats);
        for (std::size_t k = 0; k < kNumFeatures; ++k) {
            if (stats.ranges[k].constant()) continue;
            CHECK(back[k] == doctest::Approx(raw[k]).epsilon(1e-9));
        }
    }
}

TEST_CASE("fit_normalization over several traces uses the union") {
    const std::vector<Trace> traces{Trace{"a", 1.0, {test::sample_at(0, 20)}}, Trace{"b", 1.0, {test::sample_at(0, 70)}}};
    const auto stats = fit_normalization(traces);
    CHECK(stats.ranges[2].min == 20.0);
    CHECK(stats.ranges[2].max == 70.0);
    CHECK_THROWS_AS(fit_normalization(std::vector<Trace>{}), Error);
}
