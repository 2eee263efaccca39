#include "onoff/detector_sim.hpp"

#include <boost/random/binomial_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace onoff {

namespace {

std::mt19937_64 point_engine(std::uint64_t seed, std::size_t point) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(point & 0xffffffffu),
                      static_cast<std::uint32_t>(static_cast<std::uint64_t>(point) >> 32)};
    return std::mt19937_64(seq);
}

std::uint64_t draw_off_count(std::uint64_t windows, double p, std::mt19937_64& engine) {
    if (p <= 0.0) return 0;
    if (p >= 1.0) return windows;
    boost::random::binomial_distribution<std::int64_t, double> dist(
        static_cast<std::int64_t>(windows), p);
    return static_cast<std::uint64_t>(dist(engine));
}

}  // namespace

EfficiencyGrid efficiency_grid_from_filters(const FilterSet& filters) {
    if (!(filters.eta_max > 0.0 && filters.eta_max <= 1.0)) {
        throw DomainError("eta_max outside (0, 1]");
    }
    std::vector<double> etas;
    etas.reserve(filters.transmittances.size());
    for (double t : filters.transmittances) {
        if (!(t > 0.0 && t <= 1.0)) throw DomainError("filter transmittance outside (0, 1]");
        etas.push_back(filters.eta_max * t);
    }
    return EfficiencyGrid(std::move(etas));
}

FilterSet equally_spaced_filters(std::size_t points, double eta_max) {
    FilterSet f;
    f.eta_max = eta_max;
    for (std::size_t k = 1; k <= points; ++k) {
        f.transmittances.push_back(static_cast<double>(k) / static_cast<double>(points));
    }
    return f;
}

void SimConfig::validate() const {
    if (windows_per_point < 1) throw DomainError("windows per point must be >= 1");
    if (background_off_prob) {
        if (background_off_prob->size() != grid.size()) {
            throw DomainError("background vector length does not match the grid");
        }
        for (double b : *background_off_prob) {
            if (!(b > 0.0 && b <= 1.0)) throw DomainError("background no-click probability outside (0, 1]");
        }
    }
}

std::vector<double> truth_off_probabilities(const SimulationTruth& truth, const EfficiencyGrid& grid) {
    std::vector<double> p0;
    p0.reserve(grid.size());
    for (double eta : grid.etas()) {
        p0.push_back(std::visit(
            [eta](const auto& t) -> double {
                using T = std::decay_t<decltype(t)>;
                if constexpr (std::is_same_v<T, PhotonDistribution>) {
                    return off_probability(t, eta);
                } else {
                    return pdc_off_probability(t, eta);
                }
            },
            truth));
    }
    return p0;
}

OnOffDataset simulate_dataset(const SimulationTruth& truth, const SimConfig& config) {
    config.validate();
    const auto p0 = truth_off_probabilities(truth, config.grid);
    std::vector<OnOffRecord> records;
    records.reserve(p0.size());
    for (std::size_t k = 0; k < p0.size(); ++k) {
        double p = p0[k];
        if (config.background_off_prob) p *= (*config.background_off_prob)[k];
        auto engine = point_engine(config.seed, k);
        records.push_back({config.grid[k], config.windows_per_point,
                           draw_off_count(config.windows_per_point, p, engine)});
    }
    return OnOffDataset(std::move(records));
}

OnOffDataset simulate_background(std::span<const double> background_off_prob,
                                 const SimConfig& config) {
    SimConfig c = config;
    c.background_off_prob = std::vector<double>(background_off_prob.begin(), background_off_prob.end());
    return simulate_dataset(PhotonDistribution::vacuum(), c);
}

OnOffDataset correct_background(const OnOffDataset& measured, const OnOffDataset& background) {
    if (measured.size() != background.size()) {
        throw DomainError("background grid has " + std::to_string(background.size()) +
                          " points, measured has " + std::to_string(measured.size()));
    }
    std::vector<OnOffRecord> out;
    out.reserve(measured.size());
    for (std::size_t k = 0; k < measured.size(); ++k) {
        const auto& m = measured[k];
        const auto& b = background[k];
        if (m.eta != b.eta) {
            throw DomainError("background efficiency differs from measured at point " +
                              std::to_string(k));
        }
        const double fb = b.frequency();
        if (!(fb > 0.0)) {
            throw DegenerateBackgroundError("degenerate background: zero no-click frequency at point " +
                              std::to_string(k));
        }
        const double corrected = std::clamp(m.frequency() / fb, 0.0, 1.0);
        const auto count = static_cast<std::uint64_t>(
            std::llround(corrected * static_cast<double>(m.windows)));
        out.push_back({m.eta, m.windows, std::min(count, m.windows)});
    }
    return OnOffDataset(std::move(out), measured.label());
}

}  // namespace onoff
