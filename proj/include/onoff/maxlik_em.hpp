#pragma once

// Maximum-likelihood reconstruction of rho_n from on/off frequencies by
// expectation-maximization.
//
// Standard update:
//   rho_n' = rho_n / sum_m rho_m * sum_nu A_nu,n / (sum_lambda A_lambda,n) * f_nu / P_nu
//
// Energy-constrained update (Lagrange multiplier beta on sum_n n rho_n):
//   rho_n' = rho_n / sum_m rho_m
//            * sum_nu A_nu,n / [sum_lambda A_lambda,n + beta n (sum_g P_g / sum_mu f_mu)]
//            * f_nu / P_nu
//
// Both maps are iterated until the normalized log-likelihood changes by
// less than a tolerance.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "onoff/core.hpp"

namespace onoff {

/// P_nu = 0 where f_nu > 0: the multiplicative update is undefined.
class SingularUpdateError : public std::runtime_error {
public:
    explicit SingularUpdateError(std::size_t record);
    std::size_t record() const noexcept { return record_; }

private:
    std::size_t record_;
};

/// The data carry no usable information (e.g. every frequency is zero).
class DegenerateDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The beta search could not bracket or reach the requested energy.
class BracketExhaustedError : public std::runtime_error {
public:
    BracketExhaustedError(const std::string& what, double lowest_energy, double highest_energy);
    double lowest_energy() const noexcept { return lowest_; }
    double highest_energy() const noexcept { return highest_; }

private:
    double lowest_;
    double highest_;
};

enum class InitKind { uniform, model_seeded, user_supplied };

struct EmConfig {
    std::size_t n_max = 60;
    std::size_t max_iterations = 100000;
    /// Stop when |L(h+1) - L(h)| < loglik_tolerance.
    double loglik_tolerance = 1e-9;
    InitKind init = InitKind::uniform;
    /// Starting point for model_seeded / user_supplied; resized to n_max.
    std::optional<PhotonDistribution> initial;
    /// Lagrange multiplier; 0 runs the standard update.
    double beta = 0.0;
    bool renormalize_each_step = true;

    void validate() const;
};

struct ReconstructionResult {
    PhotonDistribution distribution = PhotonDistribution::vacuum();
    std::size_t iterations_used = 0;
    /// L at the initial point and after every step.
    std::vector<double> loglik_trace;
    /// sum_n rho_n of every raw update before renormalization.
    std::vector<double> mass_trace;
    std::vector<double> predicted_off;
    double beta_used = 0.0;
    double mean_energy = 0.0;
    bool converged = false;
    /// Fewer than two efficiencies: the inversion is not identifiable.
    bool underdetermined = false;
};

/// One standard EM update. Throws SingularUpdateError.
PhotonDistribution em_step_standard(const PhotonDistribution& current, const DesignMatrix& design,
                                    std::span<const double> frequencies, bool renormalize = true);

/// One energy-constrained EM update. Throws SingularUpdateError and
/// DegenerateDataError (sum of frequencies is zero).
PhotonDistribution em_step_constrained(const PhotonDistribution& current,
                                       const DesignMatrix& design,
                                       std::span<const double> frequencies, double beta,
                                       bool renormalize = true);

/// Iterates the update selected by `config.beta` (standard when 0).
ReconstructionResult reconstruct(const OnOffDataset& data, const EmConfig& config);

/// Same, but with `use_constrained_engine` forcing the constrained map even
/// at beta = 0.
ReconstructionResult reconstruct(const OnOffDataset& data, const EmConfig& config,
                                 bool use_constrained_engine);

struct BetaPolicy {
    enum class Mode { fixed, target_energy };

    Mode mode = Mode::fixed;
    double beta = 0.0;
    double target_energy = 0.0;
    double rel_tolerance = 0.01;
    /// Upper bracket end starts here and doubles up to beta_limit.
    double initial_beta_hi = 1.0;
    double beta_limit = 1152921504606846976.0;  // 2^60
    std::size_t max_outer_iterations = 60;

    static BetaPolicy fixed(double beta) {
        BetaPolicy p;
        p.beta = beta;
        return p;
    }
    static BetaPolicy target(double energy, double rel_tolerance = 0.01) {
        BetaPolicy p;
        p.mode = Mode::target_energy;
        p.target_energy = energy;
        p.rel_tolerance = rel_tolerance;
        return p;
    }
};

/// Picks beta so that the reconstruction's mean energy matches the policy
/// target within its relative tolerance. The mean energy is expected to fall
/// monotonically with beta; the search brackets the target by doubling,
/// then bisects. When the sampled energies are not monotone it switches to a
/// grid search over the bracket.
ReconstructionResult tune_beta(const OnOffDataset& data, const EmConfig& config,
                               const BetaPolicy& policy);

}  // namespace onoff
