#include <doctest.h>

#include <chrono>
#include <cmath>
#include <vector>

#include "onoff/detector_sim.hpp"
#include "onoff/maxlik_em.hpp"

using namespace onoff;

TEST_CASE("grid from filters") {
    const auto g1 = efficiency_grid_from_filters({{1.0}, 0.284});
    REQUIRE(g1.size() == 1);
    CHECK(g1[0] == 0.284);

    const auto g2 = efficiency_grid_from_filters({{1.0, 0.5}, 0.2});
    CHECK(g2[0] == 0.2);
    CHECK(g2[1] == 0.1);

    const auto g30 = efficiency_grid_from_filters(equally_spaced_filters(30));
    REQUIRE(g30.size() == 30);
    for (double eta : g30.etas()) {
        CHECK(eta > 0.0);
        CHECK(eta <= 0.284);
    }

    CHECK_THROWS_AS(efficiency_grid_from_filters({{0.5, 0.5}, 0.2}), DomainError);
    CHECK_THROWS_AS(efficiency_grid_from_filters({{1.2}, 0.2}), DomainError);
}

TEST_CASE("config validation") {
    SimConfig c;
    c.windows_per_point = 0;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = SimConfig{};
    c.background_off_prob = std::vector<double>(c.grid.size(), 0.0);
    CHECK_THROWS_AS(c.validate(), DomainError);
    c.background_off_prob = std::vector<double>(3, 0.9);
    CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("vacuum never clicks") {
    SimConfig c;
    const auto d = simulate_dataset(PhotonDistribution::vacuum(), c);
    for (const auto& r : d.records()) CHECK(r.off_count == r.windows);
}

TEST_CASE("single photon at half efficiency") {
    SimConfig c;
    c.grid = EfficiencyGrid({0.5});
    c.windows_per_point = 1000000;
    c.seed = 42;
    const auto d = simulate_dataset(PhotonDistribution::fock(1), c);
    CHECK(std::abs(d[0].frequency() - 0.5) < 5 * 0.0005);
}

TEST_CASE("same seed, same data; different seed, different data") {
    SimConfig c;
    c.seed = 77;
    const auto truth = PdcModelParams::from_regime(7.23, 0.507, 700000);
    CHECK(simulate_dataset(truth, c) == simulate_dataset(truth, c));
    auto c2 = c;
    c2.seed = 78;
    CHECK_FALSE(simulate_dataset(truth, c) == simulate_dataset(truth, c2));
}

TEST_CASE("binomial moments over repeated acquisitions") {
    const auto truth = PdcModelParams::from_regime(16.72, 0.781, 700000);
    SimConfig c;
    c.grid = EfficiencyGrid({0.1});
    c.windows_per_point = 200000;
    const double p = truth_off_probabilities(truth, c.grid)[0];
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(c.windows_per_point));
    const int reps = 200;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int k = 0; k < reps; ++k) {
        c.seed = 1000 + static_cast<std::uint64_t>(k);
        const double f = simulate_dataset(truth, c)[0].frequency();
        sum += f;
        sum_sq += f * f;
    }
    const double mean = sum / reps;
    const double var = (sum_sq - reps * mean * mean) / (reps - 1);
    CHECK(std::abs(mean - p) < 5 * sigma / std::sqrt(static_cast<double>(reps)));
    CHECK(var / (sigma * sigma) < 1.5);
    CHECK(var / (sigma * sigma) > 1.0 / 1.5);
}

TEST_CASE("background correction arithmetic") {
    const OnOffDataset measured({{0.1, 1000, 450}, {0.2, 1000, 300}});
    const OnOffDataset background({{0.1, 1000, 900}, {0.2, 1000, 1000}});
    const auto corrected = correct_background(measured, background);
    CHECK(corrected[0].frequency() == doctest::Approx(0.5));
    CHECK(corrected[1].off_count == 300);

    const OnOffDataset clean({{0.1, 1000, 1000}, {0.2, 1000, 1000}});
    CHECK(correct_background(measured, clean) == measured);

    const OnOffDataset dark({{0.1, 1000, 0}, {0.2, 1000, 1000}});
    CHECK_THROWS_AS(correct_background(measured, dark), DegenerateBackgroundError);
    const OnOffDataset shifted({{0.1, 1000, 1000}, {0.3, 1000, 1000}});
    CHECK_THROWS_AS(correct_background(measured, shifted), DomainError);
    const OnOffDataset short_bg({{0.1, 1000, 1000}});
    CHECK_THROWS_AS(correct_background(measured, short_bg), DomainError);
}

TEST_CASE("background round trip through reconstruction") {
    const auto truth = PdcModelParams::from_regime(7.23, 0.507, 700000);
    SimConfig c;
    c.seed = 21;
    std::vector<double> b(c.grid.size());
    for (std::size_t k = 0; k < b.size(); ++k) b[k] = 0.97 - 0.002 * static_cast<double>(k);

    const auto clean = simulate_dataset(truth, c);
    auto with_bg = c;
    with_bg.background_off_prob = b;
    const auto dirty = simulate_dataset(truth, with_bg);
    auto bg_cfg = c;
    bg_cfg.seed = 22;
    const auto bg = simulate_background(b, bg_cfg);
    const auto corrected = correct_background(dirty, bg);

    for (std::size_t k = 0; k < clean.size(); ++k) {
        const double p = clean[k].frequency();
        CHECK(std::abs(corrected[k].frequency() - p) < 0.01);
    }

    EmConfig ec;
    ec.n_max = 60;
    const auto ref = pdc_pmf(truth, 60).distribution;
    const double f_clean = fidelity(reconstruct(clean, ec).distribution, ref);
    const double f_corr = fidelity(reconstruct(corrected, ec).distribution, ref);
    MESSAGE("fidelity clean " << f_clean << " corrected " << f_corr);
    CHECK(std::abs(f_clean - f_corr) < 0.002);
}

TEST_CASE("regime simulation is fast") {
    SimConfig c;
    const auto start = std::chrono::steady_clock::now();
    const auto d = simulate_dataset(PdcModelParams::from_regime(18.34, 0.907, 700000), c);
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    CHECK(d.size() == 30);
    CHECK(took.count() < 1.0);
}
