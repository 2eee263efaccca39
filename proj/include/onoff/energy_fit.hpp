#pragma once

// Indirect energy estimate: least-squares fit of the closed-form seeded-PDC
// no-click probability to measured off-frequencies, with the effective mode
// count held fixed.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "onoff/core.hpp"
#include "onoff/pdc_model.hpp"

namespace onoff {

/// Too few records to determine the two fitted parameters.
class UnderdeterminedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EnergyFitResult {
    double total_thermal = 0.0;
    double alpha_sq = 0.0;
    std::uint64_t modes = 1;
    double n_ave = 0.0;
    /// Stimulated fraction alpha_sq / n_ave (0 when n_ave is 0).
    double x = 0.0;
    double sum_sq_residual = 0.0;
    bool converged = false;

    PdcModelParams params() const {
        return PdcModelParams::from_totals(total_thermal, alpha_sq, modes);
    }
};

struct EnergyGuess {
    double total_thermal;
    double alpha_sq;
};

/// sum_nu [f_nu - p0(total_thermal, alpha_sq, modes, eta_nu)]^2
double energy_fit_residual(std::span<const double> etas, std::span<const double> frequencies,
                           double total_thermal, double alpha_sq, std::uint64_t modes);

/// Minimizes the squared residual over (total_thermal, alpha_sq) >= 0.
/// Works in log-parameter space: a 40 x 40 logarithmic scan of
/// [1e-3, 1e3]^2 seeds a Nelder-Mead simplex, and a damped Gauss-Newton
/// pass polishes the simplex optimum. The two parameters separate only
/// through terms of order eta^2 / modes, so the polish is what resolves the
/// thermal/coherent split at large mode counts.
///
/// Throws UnderdeterminedError below three records.
EnergyFitResult fit_energy(std::span<const double> etas, std::span<const double> frequencies,
                           std::uint64_t modes, std::optional<EnergyGuess> init_guess = {});

EnergyFitResult fit_energy(const OnOffDataset& data, std::uint64_t modes,
                           std::optional<EnergyGuess> init_guess = {});

/// fit_energy once per mode count.
std::vector<EnergyFitResult> sensitivity_to_modes(const OnOffDataset& data,
                                                  std::span<const std::uint64_t> modes_list);

}  // namespace onoff
