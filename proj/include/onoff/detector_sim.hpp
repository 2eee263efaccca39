#pragma once

// Monte Carlo on/off acquisition: per efficiency setting, N_x gated windows
// each independently click-free with probability p0(eta) (times an optional
// background no-click probability).

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

#include "onoff/core.hpp"
#include "onoff/pdc_model.hpp"

namespace onoff {

/// A background acquisition with a zero no-click frequency cannot be
/// divided out.
class DegenerateBackgroundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Name of the pseudo-random source, echoed into dataset metadata.
inline constexpr std::string_view kGeneratorName =
    "mt19937_64/seed_seq(seed,point)/boost::random::binomial_distribution";

struct FilterSet {
    std::vector<double> transmittances;
    double eta_max = 0.284;
};

/// eta_nu = eta_max * t_nu. Throws DomainError on duplicates or values
/// outside (0, 1].
EfficiencyGrid efficiency_grid_from_filters(const FilterSet& filters);

/// `points` transmittances 1/points, 2/points, ..., 1.
FilterSet equally_spaced_filters(std::size_t points, double eta_max = 0.284);

struct SimConfig {
    EfficiencyGrid grid = EfficiencyGrid::equally_spaced(30, 0.284);
    std::uint64_t windows_per_point = 200000;
    std::uint64_t seed = 0;
    /// Per-point background no-click probabilities b_nu in (0, 1].
    std::optional<std::vector<double>> background_off_prob;

    void validate() const;
};

using SimulationTruth = std::variant<PhotonDistribution, PdcModelParams>;

/// Off-probability of the truth at each grid point (series for a
/// distribution, closed form for model parameters).
std::vector<double> truth_off_probabilities(const SimulationTruth& truth, const EfficiencyGrid& grid);

/// Draws off_count ~ Binomial(N_x, p0 * b) per point. Point k uses its own
/// stream seeded from (seed, k), so results do not depend on evaluation
/// order.
OnOffDataset simulate_dataset(const SimulationTruth& truth, const SimConfig& config);

/// Background-only acquisition: off_count ~ Binomial(N_x, b_nu).
OnOffDataset simulate_background(std::span<const double> background_off_prob, const SimConfig& config);

/// Divides out independent background no-click probabilities:
/// f_corr = clamp(f_meas / f_bg, 0, 1), re-expressed on the measured window
/// counts. Grids must match point by point (DomainError otherwise).
OnOffDataset correct_background(const OnOffDataset& measured, const OnOffDataset& background);

}  // namespace onoff
