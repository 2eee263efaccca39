#pragma once

// Command-line pipeline: simulate, fit-energy, reconstruct, compare, report.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "onoff/dataio.hpp"
#include "onoff/detector_sim.hpp"
#include "onoff/maxlik_em.hpp"

namespace onoff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Bad flag value or flag combination; maps to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModelSpec {
    std::string text;
    SimulationTruth truth;
};

/// regime:N_AVE,X,MODES | thermal:NBAR,MODES | fock:N | file:PATH
/// (file: a distribution CSV). Throws UsageError.
ModelSpec parse_model_spec(std::string_view text);

/// The truth as a distribution over 0..n_max. Model parameters are truncated
/// without renormalization; distributions are returned as given.
PhotonDistribution reference_distribution(const SimulationTruth& truth, std::size_t n_max);

enum class BetaChoice { fixed, target_energy, target_energy_from_fit };

struct PipelineOptions {
    std::size_t n_max = 60;
    BetaChoice beta_choice = BetaChoice::fixed;
    double beta = 0.0;
    double target_energy = 0.0;
    double beta_rel_tolerance = 0.002;
    std::size_t max_iterations = 100000;
    double loglik_tolerance = 1e-9;
    bool model_init = false;
    /// Enables the energy fit; required by target_energy_from_fit and
    /// model_init.
    std::optional<std::uint64_t> modes;
    std::optional<ModelSpec> reference;
    std::optional<std::string> background_name;
};

/// fit (when modes are set) -> beta selection -> reconstruction ->
/// diagnostics. Progress lines go to `progress` when non-null.
Report run_pipeline(const LoadedDataset& input, const PipelineOptions& options,
                    std::ostream* progress = nullptr);

struct OffProbabilityRow {
    double eta;
    double measured;
    double reconstructed;
    /// Closed-form p0 of the fitted parameters; empty without a fit.
    std::optional<double> model;
};

struct DistributionRow {
    std::size_t n;
    double reconstructed;
    std::optional<double> model;
};

struct PlotTables {
    std::vector<OffProbabilityRow> off_probability;
    std::vector<DistributionRow> distribution;
};

PlotTables emit_plot_data(const Report& report);

/// CSV with header `eta,measured,reconstructed,model`.
std::string format_off_probability_table(const PlotTables& tables);
/// CSV with header `n,reconstructed,model`.
std::string format_distribution_table(const PlotTables& tables);

/// `args[0]` is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace onoff::cli
