#pragma once

// Photon statistics of seeded parametric down-conversion: M thermal modes of
// equal per-mode mean nbar, one of them displaced by a coherent amplitude
// alpha. The photon-number distribution is
//
//   rho_n = nbar^n / (1+nbar)^(n+M) * exp(-|alpha|^2/(1+nbar))
//           * L_n^(M-1)( -|alpha|^2 / (nbar (1+nbar)) )
//
// with closed-form no-click probability
//
//   p0(eta) = (1 + eta nbar)^(-M) * exp(-eta |alpha|^2 / (1 + eta nbar)).
//
// M here is the effective mode count (spatial x temporal modes), which is
// routinely ~1e5..1e6, so everything is evaluated in the log domain.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "onoff/core.hpp"

namespace onoff {

class PdcModelParams {
public:
    /// nbar > 0, alpha_sq >= 0, modes >= 1.
    PdcModelParams(double per_mode_thermal_mean, double alpha_sq, std::uint64_t modes);

    /// Pure coherent (Poisson) input, the nbar -> 0 limit.
    static PdcModelParams coherent(double alpha_sq);

    /// Parameters from total mean energy `n_ave` and stimulated fraction `x`:
    /// total thermal energy (1-x) n_ave spread evenly over `modes`, and
    /// |alpha|^2 = x n_ave. x = 1 yields the coherent limit.
    static PdcModelParams from_regime(double n_ave, double x, std::uint64_t modes);

    /// From total thermal energy rather than the per-mode mean; a zero total
    /// yields the coherent limit.
    static PdcModelParams from_totals(double total_thermal, double alpha_sq, std::uint64_t modes);

    double per_mode_thermal_mean() const noexcept { return nbar_; }
    double alpha_sq() const noexcept { return alpha_sq_; }
    std::uint64_t modes() const noexcept { return modes_; }
    bool is_coherent() const noexcept { return nbar_ == 0.0; }

    double total_thermal() const noexcept { return static_cast<double>(modes_) * nbar_; }
    double mean_energy() const noexcept { return total_thermal() + alpha_sq_; }
    /// Variance of the photon number: M nbar (1+nbar) + alpha^2 (1 + 2 nbar).
    double variance() const noexcept;

    friend bool operator==(const PdcModelParams&, const PdcModelParams&) = default;

private:
    PdcModelParams() = default;

    double nbar_ = 0.0;
    double alpha_sq_ = 0.0;
    std::uint64_t modes_ = 1;
};

/// log L_n^a(z) for z <= 0, a > -1, via the three-term recurrence carried as
/// successive ratios L_k / L_{k-1}. For a >= 0 and z <= 0 every polynomial
/// value is positive, so only the magnitude is returned.
double laguerre_log_scaled(std::size_t n, double a, double z);

/// log L_k^a(z) for k = 0..n_max in one recurrence pass.
std::vector<double> laguerre_log_sequence(std::size_t n_max, double a, double z);

/// log rho_n for n = 0..n_max. Entries that are exactly zero (e.g. at
/// alpha = 0 with a coherent input) are -infinity.
std::vector<double> pdc_log_pmf(const PdcModelParams& params, std::size_t n_max);

struct PdcPmf {
    /// rho_0..rho_{n_max}, not renormalized.
    PhotonDistribution distribution;
    /// 1 - sum of the retained entries, clamped at 0.
    double tail_mass;
};

PdcPmf pdc_pmf(const PdcModelParams& params, std::size_t n_max);

/// log p0(eta) in closed form.
double pdc_log_off_probability(const PdcModelParams& params, double eta);

/// p0(eta) in closed form.
double pdc_off_probability(const PdcModelParams& params, double eta);

/// Smallest n_max whose retained mass leaves a tail below `tail_tolerance`.
std::size_t pdc_truncation(const PdcModelParams& params, double tail_tolerance = 1e-8);

/// Fallback truncation from a mean photon number alone:
/// ceil(mu + 10 sqrt(mu + 1)).
std::size_t heuristic_truncation(double mean);

}  // namespace onoff
