#include "onoff/maxlik_em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace onoff {

SingularUpdateError::SingularUpdateError(std::size_t record)
    : std::runtime_error("EM update singular: predicted off-probability is zero at record " +
                         std::to_string(record) + " while its frequency is positive"),
      record_(record) {}

BracketExhaustedError::BracketExhaustedError(const std::string& what, double lowest_energy,
                                             double highest_energy)
    : std::runtime_error(what), lowest_(lowest_energy), highest_(highest_energy) {}

void EmConfig::validate() const {
    if (max_iterations < 1) throw DomainError("max_iterations must be >= 1");
    if (!(loglik_tolerance > 0.0)) throw DomainError("loglik_tolerance must be > 0");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw DomainError("beta must be finite and >= 0");
    if (init != InitKind::uniform && !initial) {
        throw DomainError("model-seeded or user-supplied init requires an initial distribution");
    }
}

namespace {

// f_nu / P_nu with the zero-frequency convention.
void data_ratios(std::span<const double> predicted, std::span<const double> f,
                 std::vector<double>& ratio) {
    ratio.resize(f.size());
    for (std::size_t nu = 0; nu < f.size(); ++nu) {
        if (f[nu] == 0.0) {
            ratio[nu] = 0.0;
        } else if (!(predicted[nu] > 0.0)) {
            throw SingularUpdateError(nu);
        } else {
            ratio[nu] = f[nu] / predicted[nu];
        }
    }
}

double renormalize(std::vector<double>& rho) {
    const double mass = compensated_sum(rho);
    if (mass > 0.0) {
        for (double& r : rho) r /= mass;
    }
    return mass;
}

// Entries below this are flushed to zero; a multiplicative update cannot
// revive them in any useful number of steps, and subnormal arithmetic is
// two orders of magnitude slower.
constexpr double kFlushFloor = 1e-280;

// back[n] = sum_nu A[nu][n] * ratio[nu], accumulated row by row.
void back_project(const DesignMatrix& design, std::span<const double> ratio,
                  std::vector<double>& back) {
    back.assign(design.cols(), 0.0);
    for (std::size_t nu = 0; nu < design.rows(); ++nu) {
        const double r = ratio[nu];
        if (r == 0.0) continue;
        const auto row = design.row(nu);
        for (std::size_t n = 0; n < row.size(); ++n) back[n] += row[n] * r;
    }
}

// Standard update; `predicted` must be A * rho.
void standard_update(std::span<const double> rho, const DesignMatrix& design,
                     std::span<const double> predicted, std::span<const double> f,
                     std::vector<double>& ratio, std::vector<double>& out) {
    data_ratios(predicted, f, ratio);
    const double rho_mass = compensated_sum(rho);
    const auto colsum = design.column_sums();
    back_project(design, ratio, out);
    for (std::size_t n = 0; n < rho.size(); ++n) {
        if (colsum[n] == 0.0) {
            out[n] = 0.0;
            continue;
        }
        const double v = rho[n] / rho_mass * (out[n] / colsum[n]);
        out[n] = v < kFlushFloor ? 0.0 : v;
    }
}

// Constrained update; `predicted` must be A * rho.
void constrained_update(std::span<const double> rho, const DesignMatrix& design,
                        std::span<const double> predicted, std::span<const double> f,
                        double frequency_sum, double beta, std::vector<double>& ratio,
                        std::vector<double>& out) {
    data_ratios(predicted, f, ratio);
    const double rho_mass = compensated_sum(rho);
    const double scale = compensated_sum(predicted) / frequency_sum;
    const auto colsum = design.column_sums();
    back_project(design, ratio, out);
    for (std::size_t n = 0; n < rho.size(); ++n) {
        const double denom = colsum[n] + beta * static_cast<double>(n) * scale;
        if (denom == 0.0) {
            out[n] = 0.0;
            continue;
        }
        const double v = rho[n] / rho_mass * (out[n] / denom);
        out[n] = v < kFlushFloor ? 0.0 : v;
    }
}

void check_shapes(const PhotonDistribution& current, const DesignMatrix& design,
                  std::span<const double> frequencies) {
    if (current.size() != design.cols()) {
        throw DomainError("distribution length does not match design matrix columns");
    }
    if (frequencies.size() != design.rows()) {
        throw DomainError("frequency count does not match design matrix rows");
    }
}

double positive_frequency_sum(std::span<const double> f) {
    const double s = compensated_sum(f);
    if (!(s > 0.0)) throw DomainError("sum of frequencies is zero");
    return s;
}

PhotonDistribution wrap(std::vector<double> rho, bool renormalized) {
    if (renormalized) renormalize(rho);
    return PhotonDistribution::unnormalized(std::move(rho));
}

double weighted_mean(std::span<const double> rho) {
    CompensatedSum s;
    for (std::size_t n = 1; n < rho.size(); ++n) s.add(static_cast<double>(n) * rho[n]);
    return s.value();
}

PhotonDistribution initial_point(const EmConfig& config) {
    if (config.init == InitKind::uniform) return PhotonDistribution::uniform(config.n_max);
    return config.initial->resized(config.n_max, true);
}

}  // namespace

PhotonDistribution em_step_standard(const PhotonDistribution& current, const DesignMatrix& design,
                                    std::span<const double> frequencies, bool renormalize_out) {
    check_shapes(current, design, frequencies);
    const auto predicted = design.apply(current.probs());
    std::vector<double> ratio, out;
    standard_update(current.probs(), design, predicted, frequencies, ratio, out);
    return wrap(std::move(out), renormalize_out);
}

PhotonDistribution em_step_constrained(const PhotonDistribution& current,
                                       const DesignMatrix& design,
                                       std::span<const double> frequencies, double beta,
                                       bool renormalize_out) {
    check_shapes(current, design, frequencies);
    if (!(beta >= 0.0)) throw DomainError("beta must be >= 0");
    const double fsum = compensated_sum(frequencies);
    if (!(fsum > 0.0)) throw DegenerateDataError("sum of measured frequencies is zero");
    const auto predicted = design.apply(current.probs());
    std::vector<double> ratio, out;
    constrained_update(current.probs(), design, predicted, frequencies, fsum, beta, ratio, out);
    return wrap(std::move(out), renormalize_out);
}

ReconstructionResult reconstruct(const OnOffDataset& data, const EmConfig& config) {
    return reconstruct(data, config, config.beta != 0.0);
}

ReconstructionResult reconstruct(const OnOffDataset& data, const EmConfig& config,
                                 bool use_constrained_engine) {
    config.validate();
    if (data.empty()) throw DegenerateDataError("dataset has no records");
    const DesignMatrix design(data.grid(), config.n_max);
    const auto f = data.frequencies();
    double fsum = 0.0;
    try {
        fsum = positive_frequency_sum(f);
    } catch (const DomainError&) {
        throw DegenerateDataError("every off-frequency is zero; no click-free windows to fit");
    }

    ReconstructionResult result;
    result.underdetermined = data.size() < 2;
    result.beta_used = config.beta;

    const PhotonDistribution start = initial_point(config);
    std::vector<double> rho(start.probs().begin(), start.probs().end());
    std::vector<double> next, ratio;
    std::vector<double> predicted = design.apply(rho);
    double loglik = loglikelihood(predicted, f);
    result.loglik_trace.push_back(loglik);
    // The stopping rule watches the objective the engine ascends, L - beta E.
    double objective = loglik - config.beta * mean_photon_number(start);

    for (std::size_t it = 0; it < config.max_iterations; ++it) {
        if (use_constrained_engine) {
            constrained_update(rho, design, predicted, f, fsum, config.beta, ratio, next);
        } else {
            standard_update(rho, design, predicted, f, ratio, next);
        }
        if (config.renormalize_each_step) {
            result.mass_trace.push_back(renormalize(next));
        } else {
            result.mass_trace.push_back(compensated_sum(next));
        }
        rho.swap(next);
        predicted = design.apply(rho);
        const double updated = loglikelihood(predicted, f);
        result.loglik_trace.push_back(updated);
        ++result.iterations_used;
        const double updated_objective =
            config.beta == 0.0 ? updated : updated - config.beta * weighted_mean(rho);
        const bool settled = std::abs(updated_objective - objective) < config.loglik_tolerance;
        objective = updated_objective;
        if (settled) {
            result.converged = true;
            break;
        }
    }

    result.predicted_off = std::move(predicted);
    result.distribution = PhotonDistribution::unnormalized(std::move(rho));
    result.mean_energy = mean_photon_number(result.distribution);
    return result;
}

namespace {

std::string energy_range_message(const std::string& head, double lo, double hi, double target) {
    std::ostringstream os;
    os.precision(6);
    os << head << ": target energy " << target << " outside achieved range [" << lo << ", " << hi
       << "]";
    return os.str();
}

}  // namespace

ReconstructionResult tune_beta(const OnOffDataset& data, const EmConfig& config,
                               const BetaPolicy& policy) {
    if (policy.mode == BetaPolicy::Mode::fixed) {
        EmConfig c = config;
        c.beta = policy.beta;
        return reconstruct(data, c);
    }
    if (!(policy.target_energy > 0.0)) throw DomainError("target energy must be > 0");
    if (!(policy.rel_tolerance > 0.0)) throw DomainError("relative tolerance must be > 0");

    const double target = policy.target_energy;
    const double tol = policy.rel_tolerance * target;
    std::map<double, ReconstructionResult> runs;
    std::size_t evaluations = 0;

    auto run = [&](double beta) -> const ReconstructionResult& {
        auto it = runs.find(beta);
        if (it != runs.end()) return it->second;
        EmConfig c = config;
        c.beta = beta;
        ++evaluations;
        return runs.emplace(beta, reconstruct(data, c)).first->second;
    };
    auto hits = [&](const ReconstructionResult& r) { return std::abs(r.mean_energy - target) <= tol; };
    auto monotone = [&] {
        double prev = std::numeric_limits<double>::infinity();
        for (const auto& [beta, r] : runs) {
            if (r.mean_energy > prev * (1.0 + 1e-6) + 1e-12) return false;
            prev = r.mean_energy;
        }
        return true;
    };
    auto energy_span = [&] {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& [beta, r] : runs) {
            lo = std::min(lo, r.mean_energy);
            hi = std::max(hi, r.mean_energy);
        }
        return std::pair{lo, hi};
    };

    const ReconstructionResult& free_run = run(0.0);
    // beta >= 0 only pulls energy down: below the target the constraint is
    // inactive and the unconstrained solution stands.
    if (hits(free_run) || free_run.mean_energy < target) return free_run;

    double lo = 0.0;
    double hi = policy.initial_beta_hi;
    for (;;) {
        const ReconstructionResult& r = run(hi);
        if (hits(r)) return r;
        if (r.mean_energy < target) break;
        lo = hi;
        hi *= 2.0;
        if (hi > policy.beta_limit || evaluations >= policy.max_outer_iterations) {
            const auto [emin, emax] = energy_span();
            throw BracketExhaustedError(energy_range_message("beta bracket exhausted", emin, emax, target),
                                        emin, emax);
        }
    }

    while (evaluations < policy.max_outer_iterations && monotone()) {
        const double mid = 0.5 * (lo + hi);
        const ReconstructionResult& r = run(mid);
        if (hits(r)) return r;
        if (r.mean_energy > target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    if (!monotone()) {
        // Grid search over the current bracket.
        constexpr int kGridPoints = 16;
        for (int k = 0; k <= kGridPoints; ++k) {
            run(lo + (hi - lo) * static_cast<double>(k) / kGridPoints);
        }
    }
    const ReconstructionResult* best = nullptr;
    for (const auto& [beta, r] : runs) {
        if (!best || std::abs(r.mean_energy - target) < std::abs(best->mean_energy - target)) {
            best = &r;
        }
    }
    if (best && hits(*best)) return *best;
    const auto [emin, emax] = energy_span();
    throw BracketExhaustedError(energy_range_message("beta search did not reach the target", emin,
                                                     emax, target),
                                emin, emax);
}

}  // namespace onoff
