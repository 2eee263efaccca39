#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "onoff/detector_sim.hpp"
#include "onoff/energy_fit.hpp"

using namespace onoff;

namespace {

const EfficiencyGrid kGrid = EfficiencyGrid::equally_spaced(30, 0.284);

OnOffDataset exact_data(const PdcModelParams& p, const EfficiencyGrid& grid = kGrid) {
    return noiseless_dataset(grid, truth_off_probabilities(p, grid));
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

struct Regime {
    double n_ave;
    double x;
};
constexpr Regime kRegimes[] = {{7.23, 0.507}, {16.72, 0.781}, {18.34, 0.907}};

}  // namespace

TEST_CASE("noiseless recovery of both parameters") {
    const auto truth = PdcModelParams::from_totals(3.56, 3.67, 700000);
    const auto fit = fit_energy(exact_data(truth), 700000);
    CHECK(rel(fit.total_thermal, 3.56) < 1e-4);
    CHECK(rel(fit.alpha_sq, 3.67) < 1e-4);
    CHECK(fit.converged);
}

TEST_CASE("noiseless round trip on every regime") {
    for (const auto& r : kRegimes) {
        const auto truth = PdcModelParams::from_regime(r.n_ave, r.x, 700000);
        const auto fit = fit_energy(exact_data(truth, EfficiencyGrid::equally_spaced(10, 0.284)), 700000);
        CHECK(rel(fit.total_thermal, truth.total_thermal()) < 1e-3);
        CHECK(rel(fit.alpha_sq, truth.alpha_sq()) < 1e-3);
        CHECK(fit.sum_sq_residual < 1e-12);
        CHECK(fit.n_ave == doctest::Approx(fit.total_thermal + fit.alpha_sq));
        CHECK(fit.x >= 0.0);
        CHECK(fit.x <= 1.0);
    }
}

TEST_CASE("dark input") {
    const auto data = noiseless_dataset(kGrid, std::vector<double>(kGrid.size(), 1.0));
    const auto fit = fit_energy(data, 700000);
    CHECK(fit.total_thermal < 1e-6);
    CHECK(fit.alpha_sq < 1e-6);
    CHECK(fit.sum_sq_residual < 1e-12);
}

TEST_CASE("too few records") {
    const auto data = noiseless_dataset(EfficiencyGrid({0.1, 0.2}), std::vector<double>{0.9, 0.8});
    CHECK_THROWS_AS(fit_energy(data, 10), UnderdeterminedError);
    CHECK_THROWS_AS(fit_energy(OnOffDataset(), 10), UnderdeterminedError);
}

TEST_CASE("residual helper") {
    const auto truth = PdcModelParams::from_regime(7.23, 0.507, 700000);
    const auto data = exact_data(truth);
    const auto etas = data.etas();
    const auto f = data.frequencies();
    CHECK(energy_fit_residual(etas, f, truth.total_thermal(), truth.alpha_sq(), 700000) < 1e-25);
    CHECK(energy_fit_residual(etas, f, 1.0, 1.0, 700000) > 1e-3);
}

TEST_CASE("true parameters as initial guess never hurt") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        SimConfig sc;
        sc.seed = seed;
        const auto truth = PdcModelParams::from_regime(16.72, 0.781, 700000);
        const auto data = simulate_dataset(truth, sc);
        const auto plain = fit_energy(data, 700000);
        const auto guided = fit_energy(data, 700000, EnergyGuess{truth.total_thermal(), truth.alpha_sq()});
        CHECK(guided.sum_sq_residual <= plain.sum_sq_residual * (1.0 + 1e-9));
    }
}

TEST_CASE("record order does not matter") {
    SimConfig sc;
    sc.seed = 5;
    const auto data = simulate_dataset(PdcModelParams::from_regime(18.34, 0.907, 700000), sc);
    std::vector<OnOffRecord> shuffled(data.records().begin(), data.records().end());
    std::mt19937_64 rng(17);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto a = fit_energy(data, 700000);
    const auto b = fit_energy(OnOffDataset(shuffled), 700000);
    CHECK(rel(b.n_ave, a.n_ave) < 1e-3);
}

TEST_CASE("mode-count sensitivity") {
    SimConfig sc;
    sc.seed = 9;
    const auto data = simulate_dataset(PdcModelParams::from_regime(18.34, 0.907, 700000), sc);
    const std::vector<std::uint64_t> modes{70000, 700000, 7000000};
    const auto table = sensitivity_to_modes(data, modes);
    REQUIRE(table.size() == 3);
    double lo = 1e300;
    double hi = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(table[i].modes == modes[i]);
        lo = std::min(lo, table[i].n_ave);
        hi = std::max(hi, table[i].n_ave);
    }
    CHECK((hi - lo) / lo < 0.05);

    const std::vector<std::uint64_t> one{700000};
    const auto single = sensitivity_to_modes(data, one);
    REQUIRE(single.size() == 1);
    CHECK(single[0].n_ave == fit_energy(data, 700000).n_ave);
    CHECK(sensitivity_to_modes(data, {}).empty());
}
