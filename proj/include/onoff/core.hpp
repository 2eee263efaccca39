#pragma once

// Domain types and the linear on/off detection model.
//
// A photon distribution rho_n (n = 0..n_max) seen through an on/off detector
// of quantum efficiency eta gives the no-click probability
//
//   p0(eta) = sum_n (1 - eta)^n rho_n
//
// and a set of efficiencies eta_nu turns this into the linear model
// P_nu = sum_n A[nu][n] rho_n with A[nu][n] = (1 - eta_nu)^n.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace onoff {

/// Raised when an argument lies outside the domain of an operation or breaks
/// a type invariant.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Neumaier-compensated accumulator.
class CompensatedSum {
public:
    void add(double x) noexcept;
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

double compensated_sum(std::span<const double> values) noexcept;

/// Truncated photon-number distribution rho_0..rho_{n_max}.
///
/// Entries are finite and nonnegative. The default constructor path
/// normalizes to unit mass; `unnormalized` keeps the values as given (used
/// for truncated model output whose tail mass is reported separately).
class PhotonDistribution {
public:
    explicit PhotonDistribution(std::vector<double> probs);

    static PhotonDistribution unnormalized(std::vector<double> probs);
    static PhotonDistribution vacuum() { return PhotonDistribution({1.0}); }
    static PhotonDistribution fock(std::size_t n);
    static PhotonDistribution uniform(std::size_t n_max);

    std::span<const double> probs() const noexcept { return probs_; }
    std::size_t size() const noexcept { return probs_.size(); }
    std::size_t n_max() const noexcept { return probs_.size() - 1; }
    double operator[](std::size_t n) const { return probs_[n]; }
    double at(std::size_t n) const noexcept { return n < probs_.size() ? probs_[n] : 0.0; }
    double mass() const noexcept;
    bool is_normalized() const noexcept { return normalized_; }

    /// Copy zero-padded or cut to n_max + 1 entries. Cutting drops mass; the
    /// result is renormalized only if `renormalize` is set.
    PhotonDistribution resized(std::size_t n_max, bool renormalize = true) const;

private:
    struct Raw {};
    PhotonDistribution(Raw, std::vector<double> probs, bool normalized);

    std::vector<double> probs_;
    bool normalized_ = true;
};

/// Quantum efficiencies eta_nu in (0, 1], pairwise distinct.
class EfficiencyGrid {
public:
    explicit EfficiencyGrid(std::vector<double> etas);

    /// `points` equally spaced efficiencies eta_max/points, ..., eta_max.
    static EfficiencyGrid equally_spaced(std::size_t points, double eta_max);

    std::span<const double> etas() const noexcept { return etas_; }
    std::size_t size() const noexcept { return etas_.size(); }
    double operator[](std::size_t i) const { return etas_[i]; }

private:
    std::vector<double> etas_;
};

struct OnOffRecord {
    double eta = 0.0;
    std::uint64_t windows = 1;
    std::uint64_t off_count = 0;

    double frequency() const noexcept {
        return static_cast<double>(off_count) / static_cast<double>(windows);
    }
    friend bool operator==(const OnOffRecord&, const OnOffRecord&) = default;
};

/// Validates a single record; throws DomainError naming the broken invariant.
void validate_record(const OnOffRecord& record);

class OnOffDataset {
public:
    OnOffDataset() = default;
    explicit OnOffDataset(std::vector<OnOffRecord> records, std::string label = {});

    std::span<const OnOffRecord> records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const OnOffRecord& operator[](std::size_t i) const { return records_[i]; }
    const std::string& label() const noexcept { return label_; }

    std::vector<double> etas() const;
    std::vector<double> frequencies() const;
    EfficiencyGrid grid() const { return EfficiencyGrid(etas()); }

    friend bool operator==(const OnOffDataset&, const OnOffDataset&) = default;

private:
    std::vector<OnOffRecord> records_;
    std::string label_;
};

/// Window count used for frequency-exact datasets: counts carry ~15 exact
/// significant digits of the underlying probability.
inline constexpr std::uint64_t kExactWindows = 1'000'000'000'000'000ULL;

/// Dataset whose frequencies are the given probabilities, rounded to
/// 1/`windows`.
OnOffDataset noiseless_dataset(const EfficiencyGrid& grid, std::span<const double> off_probs,
                               std::uint64_t windows = kExactWindows, std::string label = {});

/// Row-major A[nu][n] = (1 - eta_nu)^n.
class DesignMatrix {
public:
    DesignMatrix(const EfficiencyGrid& grid, std::size_t n_max);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double operator()(std::size_t nu, std::size_t n) const { return entries_[nu * cols_ + n]; }
    std::span<const double> row(std::size_t nu) const {
        return std::span<const double>(entries_).subspan(nu * cols_, cols_);
    }
    /// sum_nu A[nu][n]
    std::span<const double> column_sums() const noexcept { return column_sums_; }

    /// P = A rho for a probability vector of length cols().
    std::vector<double> apply(std::span<const double> rho) const;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> entries_;
    std::vector<double> column_sums_;
};

inline DesignMatrix build_design_matrix(const EfficiencyGrid& grid, std::size_t n_max) {
    return DesignMatrix(grid, n_max);
}

/// sum_n (1 - eta)^n rho_n.
double off_probability(const PhotonDistribution& dist, double eta);

/// Normalized log-likelihood sum_nu f_nu log(P_nu / sum_lambda P_lambda).
/// Records with f_nu = 0 contribute 0. Returns -infinity if some P_nu = 0
/// while f_nu > 0.
double loglikelihood(std::span<const double> predicted_off, std::span<const double> frequencies);
double loglikelihood(const PhotonDistribution& dist, const OnOffDataset& data);

/// sum_n sqrt(a_n b_n); the shorter distribution is zero-padded.
double fidelity(const PhotonDistribution& a, const PhotonDistribution& b);

/// sum_nu (P_nu - f_nu)^2.
double chi_square(std::span<const double> predicted_off, std::span<const double> measured);

double mean_photon_number(const PhotonDistribution& dist);

}  // namespace onoff
