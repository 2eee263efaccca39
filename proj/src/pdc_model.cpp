#include "onoff/pdc_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace onoff {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Forward recurrence for log L_k^a(z), carried as the ratio
// r_k = L_k / L_{k-1}:
//   r_{k+1} = ((2k + 1 + a - z) - (k + a) / r_k) / (k + 1)
class LaguerreLogRecurrence {
public:
    LaguerreLogRecurrence(double a, double z) : a_(a), z_(z) {}

    // Returns log L_k and advances k.
    double next() {
        if (k_ == 0) {
            ++k_;
            return 0.0;
        }
        if (k_ == 1) {
            ratio_ = 1.0 + a_ - z_;
        } else {
            const double km1 = static_cast<double>(k_ - 1);
            ratio_ = ((2.0 * km1 + 1.0 + a_ - z_) - (km1 + a_) / ratio_) / (km1 + 1.0);
        }
        log_value_ += std::log(ratio_);
        ++k_;
        return log_value_;
    }

private:
    double a_;
    double z_;
    std::size_t k_ = 0;
    double ratio_ = 1.0;
    double log_value_ = 0.0;
};

// Streams log rho_0, log rho_1, ... for a parameter set.
class PdcLogPmfStream {
public:
    explicit PdcLogPmfStream(const PdcModelParams& p)
        : coherent_(p.is_coherent()),
          log_alpha_sq_(std::log(p.alpha_sq())),
          alpha_sq_(p.alpha_sq()),
          log_nbar_(coherent_ ? 0.0 : std::log(p.per_mode_thermal_mean())),
          log1p_nbar_(std::log1p(p.per_mode_thermal_mean())),
          modes_(static_cast<double>(p.modes())),
          laguerre_(static_cast<double>(p.modes()) - 1.0,
                    coherent_ ? 0.0
                              : -p.alpha_sq() / (p.per_mode_thermal_mean() *
                                                 (1.0 + p.per_mode_thermal_mean()))) {
        if (!coherent_) {
            prefactor_ = -modes_ * log1p_nbar_ - alpha_sq_ / (1.0 + p.per_mode_thermal_mean());
        }
    }

    double next() {
        const double n = static_cast<double>(n_++);
        if (coherent_) {
            if (alpha_sq_ == 0.0) return n == 0.0 ? 0.0 : kNegInf;
            return -alpha_sq_ + n * log_alpha_sq_ - std::lgamma(n + 1.0);
        }
        return n * (log_nbar_ - log1p_nbar_) + prefactor_ + laguerre_.next();
    }

private:
    bool coherent_;
    double log_alpha_sq_;
    double alpha_sq_;
    double log_nbar_;
    double log1p_nbar_;
    double modes_;
    double prefactor_ = 0.0;
    LaguerreLogRecurrence laguerre_;
    std::size_t n_ = 0;
};

// Sum of rho_k for k > n_max, continuing the stream until the terms are
// negligible against the running tail.
double tail_beyond(PdcLogPmfStream& stream, std::size_t n_max, const PdcModelParams& params) {
    const double mean = params.mean_energy();
    const double sd = std::sqrt(params.variance());
    const double hard_stop = mean + 60.0 * sd + 200.0;
    CompensatedSum tail;
    for (std::size_t n = n_max + 1;; ++n) {
        const double term = std::exp(stream.next());
        tail.add(term);
        const double dn = static_cast<double>(n);
        if (dn > mean && (term == 0.0 || term < 1e-18 * tail.value())) break;
        if (dn > hard_stop) break;
    }
    return tail.value();
}

}  // namespace

PdcModelParams::PdcModelParams(double per_mode_thermal_mean, double alpha_sq, std::uint64_t modes)
    : nbar_(per_mode_thermal_mean), alpha_sq_(alpha_sq), modes_(modes) {
    if (!(std::isfinite(nbar_) && nbar_ > 0.0)) {
        throw DomainError("per-mode thermal mean must be > 0 (use coherent() for the Poisson limit)");
    }
    if (!(std::isfinite(alpha_sq_) && alpha_sq_ >= 0.0)) throw DomainError("alpha_sq must be >= 0");
    if (modes_ < 1) throw DomainError("mode count must be >= 1");
}

PdcModelParams PdcModelParams::coherent(double alpha_sq) {
    if (!(std::isfinite(alpha_sq) && alpha_sq >= 0.0)) throw DomainError("alpha_sq must be >= 0");
    PdcModelParams p;
    p.alpha_sq_ = alpha_sq;
    return p;
}

PdcModelParams PdcModelParams::from_totals(double total_thermal, double alpha_sq,
                                           std::uint64_t modes) {
    if (!(std::isfinite(total_thermal) && total_thermal >= 0.0)) {
        throw DomainError("total thermal energy must be >= 0");
    }
    if (modes < 1) throw DomainError("mode count must be >= 1");
    if (total_thermal == 0.0) return coherent(alpha_sq);
    return PdcModelParams(total_thermal / static_cast<double>(modes), alpha_sq, modes);
}

PdcModelParams PdcModelParams::from_regime(double n_ave, double x, std::uint64_t modes) {
    if (!(std::isfinite(n_ave) && n_ave >= 0.0)) throw DomainError("N_ave must be >= 0");
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("stimulated fraction x must lie in [0, 1]");
    return from_totals((1.0 - x) * n_ave, x * n_ave, modes);
}

double PdcModelParams::variance() const noexcept {
    return static_cast<double>(modes_) * nbar_ * (1.0 + nbar_) + alpha_sq_ * (1.0 + 2.0 * nbar_);
}

double laguerre_log_scaled(std::size_t n, double a, double z) {
    if (!(z <= 0.0)) throw DomainError("laguerre_log_scaled requires z <= 0");
    if (!(a > -1.0)) throw DomainError("laguerre_log_scaled requires a > -1");
    LaguerreLogRecurrence rec(a, z);
    double value = 0.0;
    for (std::size_t k = 0; k <= n; ++k) value = rec.next();
    return value;
}

std::vector<double> laguerre_log_sequence(std::size_t n_max, double a, double z) {
    if (!(z <= 0.0)) throw DomainError("laguerre_log_sequence requires z <= 0");
    if (!(a > -1.0)) throw DomainError("laguerre_log_sequence requires a > -1");
    LaguerreLogRecurrence rec(a, z);
    std::vector<double> out(n_max + 1);
    for (auto& v : out) v = rec.next();
    return out;
}

std::vector<double> pdc_log_pmf(const PdcModelParams& params, std::size_t n_max) {
    PdcLogPmfStream stream(params);
    std::vector<double> out(n_max + 1);
    for (auto& v : out) v = stream.next();
    return out;
}

PdcPmf pdc_pmf(const PdcModelParams& params, std::size_t n_max) {
    PdcLogPmfStream stream(params);
    std::vector<double> probs(n_max + 1);
    for (auto& p : probs) p = std::exp(stream.next());
    double tail = tail_beyond(stream, n_max, params);
    // Past the point where the stream stops, fall back on the mass defect.
    const double defect = 1.0 - compensated_sum(probs);
    if (defect > 1e-12 && tail < 0.5 * defect) tail = defect;
    return {PhotonDistribution::unnormalized(std::move(probs)), std::max(tail, 0.0)};
}

double pdc_log_off_probability(const PdcModelParams& params, double eta) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("efficiency outside [0, 1]");
    const double eta_nbar = eta * params.per_mode_thermal_mean();
    return -static_cast<double>(params.modes()) * std::log1p(eta_nbar) -
           eta * params.alpha_sq() / (1.0 + eta_nbar);
}

double pdc_off_probability(const PdcModelParams& params, double eta) {
    return std::exp(pdc_log_off_probability(params, eta));
}

std::size_t pdc_truncation(const PdcModelParams& params, double tail_tolerance) {
    if (!(tail_tolerance > 0.0)) throw DomainError("tail tolerance must be > 0");
    const double mean = params.mean_energy();
    const double sd = std::sqrt(params.variance());
    const auto span = static_cast<std::size_t>(std::ceil(mean + 60.0 * sd + 200.0));
    const auto logp = pdc_log_pmf(params, span);
    // Backward accumulation gives the tail with full relative accuracy.
    double tail = 0.0;
    std::size_t n = span;
    while (n > 0) {
        const double next_tail = tail + std::exp(logp[n]);
        if (next_tail >= tail_tolerance) break;
        tail = next_tail;
        --n;
    }
    return n;
}

std::size_t heuristic_truncation(double mean) {
    if (!(mean >= 0.0)) throw DomainError("mean photon number must be >= 0");
    return static_cast<std::size_t>(std::ceil(mean + 10.0 * std::sqrt(mean + 1.0)));
}

}  // namespace onoff
