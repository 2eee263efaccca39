#include "onoff/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace onoff {

void CompensatedSum::add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
        comp_ += (sum_ - t) + x;
    } else {
        comp_ += (x - t) + sum_;
    }
    sum_ = t;
}

double compensated_sum(std::span<const double> values) noexcept {
    CompensatedSum acc;
    for (double v : values) acc.add(v);
    return acc.value();
}

namespace {

void check_entries(const std::vector<double>& probs) {
    if (probs.empty()) throw DomainError("photon distribution must have at least one entry");
    for (std::size_t n = 0; n < probs.size(); ++n) {
        if (!std::isfinite(probs[n]) || probs[n] < 0.0) {
            throw DomainError("photon distribution entry " + std::to_string(n) +
                              " is negative or not finite");
        }
    }
}

}  // namespace

PhotonDistribution::PhotonDistribution(Raw, std::vector<double> probs, bool normalized)
    : probs_(std::move(probs)), normalized_(normalized) {}

PhotonDistribution::PhotonDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    check_entries(probs_);
    const double total = compensated_sum(probs_);
    if (!(total > 0.0)) throw DomainError("photon distribution has zero mass");
    for (double& p : probs_) p /= total;
}

PhotonDistribution PhotonDistribution::unnormalized(std::vector<double> probs) {
    check_entries(probs);
    const double total = compensated_sum(probs);
    const bool normalized = std::abs(total - 1.0) <= 1e-9;
    return PhotonDistribution(Raw{}, std::move(probs), normalized);
}

PhotonDistribution PhotonDistribution::fock(std::size_t n) {
    std::vector<double> p(n + 1, 0.0);
    p[n] = 1.0;
    return PhotonDistribution(Raw{}, std::move(p), true);
}

PhotonDistribution PhotonDistribution::uniform(std::size_t n_max) {
    return PhotonDistribution(std::vector<double>(n_max + 1, 1.0));
}

double PhotonDistribution::mass() const noexcept { return compensated_sum(probs_); }

PhotonDistribution PhotonDistribution::resized(std::size_t n_max, bool renormalize) const {
    std::vector<double> p(n_max + 1, 0.0);
    std::copy_n(probs_.begin(), std::min(p.size(), probs_.size()), p.begin());
    if (renormalize) return PhotonDistribution(std::move(p));
    return unnormalized(std::move(p));
}

EfficiencyGrid::EfficiencyGrid(std::vector<double> etas) : etas_(std::move(etas)) {
    for (std::size_t i = 0; i < etas_.size(); ++i) {
        const double eta = etas_[i];
        if (!(eta > 0.0 && eta <= 1.0)) {
            throw DomainError("efficiency " + std::to_string(i) + " outside (0, 1]");
        }
    }
    std::vector<double> sorted = etas_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw DomainError("efficiency grid contains duplicate values");
    }
}

EfficiencyGrid EfficiencyGrid::equally_spaced(std::size_t points, double eta_max) {
    if (points == 0) throw DomainError("efficiency grid needs at least one point");
    std::vector<double> etas(points);
    for (std::size_t k = 0; k < points; ++k) {
        etas[k] = eta_max * static_cast<double>(k + 1) / static_cast<double>(points);
    }
    return EfficiencyGrid(std::move(etas));
}

void validate_record(const OnOffRecord& r) {
    if (!(r.eta > 0.0 && r.eta <= 1.0)) throw DomainError("record efficiency outside (0, 1]");
    if (r.windows < 1) throw DomainError("record has zero windows");
    if (r.off_count > r.windows) throw DomainError("record off_count exceeds windows");
}

OnOffDataset::OnOffDataset(std::vector<OnOffRecord> records, std::string label)
    : records_(std::move(records)), label_(std::move(label)) {
    for (const auto& r : records_) validate_record(r);
    // grid construction checks distinctness
    (void)EfficiencyGrid(etas());
}

std::vector<double> OnOffDataset::etas() const {
    std::vector<double> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.eta);
    return out;
}

std::vector<double> OnOffDataset::frequencies() const {
    std::vector<double> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.frequency());
    return out;
}

OnOffDataset noiseless_dataset(const EfficiencyGrid& grid, std::span<const double> off_probs,
                               std::uint64_t windows, std::string label) {
    if (off_probs.size() != grid.size()) throw DomainError("off-probability count != grid size");
    std::vector<OnOffRecord> records;
    records.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double p = std::clamp(off_probs[i], 0.0, 1.0);
        const auto count = static_cast<std::uint64_t>(std::llround(p * static_cast<double>(windows)));
        records.push_back({grid[i], windows, std::min(count, windows)});
    }
    return OnOffDataset(std::move(records), std::move(label));
}

DesignMatrix::DesignMatrix(const EfficiencyGrid& grid, std::size_t n_max)
    : rows_(grid.size()), cols_(n_max + 1), entries_(rows_ * cols_), column_sums_(cols_, 0.0) {
    for (std::size_t nu = 0; nu < rows_; ++nu) {
        const double base = 1.0 - grid[nu];
        for (std::size_t n = 0; n < cols_; ++n) {
            entries_[nu * cols_ + n] = std::pow(base, static_cast<double>(n));
        }
    }
    for (std::size_t n = 0; n < cols_; ++n) {
        CompensatedSum s;
        for (std::size_t nu = 0; nu < rows_; ++nu) s.add(entries_[nu * cols_ + n]);
        column_sums_[n] = s.value();
    }
}

std::vector<double> DesignMatrix::apply(std::span<const double> rho) const {
    if (rho.size() != cols_) throw DomainError("distribution length does not match design matrix");
    std::vector<double> out(rows_);
    for (std::size_t nu = 0; nu < rows_; ++nu) {
        CompensatedSum s;
        const double* a = entries_.data() + nu * cols_;
        for (std::size_t n = 0; n < cols_; ++n) s.add(a[n] * rho[n]);
        out[nu] = s.value();
    }
    return out;
}

double off_probability(const PhotonDistribution& dist, double eta) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("efficiency outside [0, 1]");
    const double base = 1.0 - eta;
    CompensatedSum s;
    const auto p = dist.probs();
    for (std::size_t n = 0; n < p.size(); ++n) {
        s.add(std::pow(base, static_cast<double>(n)) * p[n]);
    }
    return std::clamp(s.value(), 0.0, 1.0);
}

double loglikelihood(std::span<const double> predicted_off, std::span<const double> frequencies) {
    if (predicted_off.size() != frequencies.size()) {
        throw DomainError("predicted and measured vectors differ in length");
    }
    const double total = compensated_sum(predicted_off);
    CompensatedSum acc;
    for (std::size_t nu = 0; nu < frequencies.size(); ++nu) {
        const double f = frequencies[nu];
        if (f == 0.0) continue;
        if (!(predicted_off[nu] > 0.0)) return -std::numeric_limits<double>::infinity();
        acc.add(f * std::log(predicted_off[nu] / total));
    }
    return acc.value();
}

double loglikelihood(const PhotonDistribution& dist, const OnOffDataset& data) {
    std::vector<double> predicted;
    predicted.reserve(data.size());
    for (const auto& r : data.records()) predicted.push_back(off_probability(dist, r.eta));
    return loglikelihood(predicted, data.frequencies());
}

double fidelity(const PhotonDistribution& a, const PhotonDistribution& b) {
    const std::size_t len = std::min(a.size(), b.size());
    CompensatedSum s;
    for (std::size_t n = 0; n < len; ++n) s.add(std::sqrt(a[n] * b[n]));
    return s.value();
}

double chi_square(std::span<const double> predicted_off, std::span<const double> measured) {
    if (predicted_off.size() != measured.size()) {
        throw DomainError("chi_square: length mismatch");
    }
    CompensatedSum s;
    for (std::size_t i = 0; i < measured.size(); ++i) {
        const double d = predicted_off[i] - measured[i];
        s.add(d * d);
    }
    return s.value();
}

double mean_photon_number(const PhotonDistribution& dist) {
    CompensatedSum s;
    const auto p = dist.probs();
    for (std::size_t n = 1; n < p.size(); ++n) s.add(static_cast<double>(n) * p[n]);
    return s.value();
}

}  // namespace onoff
