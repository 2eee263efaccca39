#include "onoff/energy_fit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace onoff {

namespace {

constexpr int kGridSide = 40;
constexpr double kGridLow = 1e-3;
constexpr double kGridHigh = 1e3;
// Log-parameter box; exp(-35) ~ 6e-16 stands in for zero.
constexpr double kLogMin = -35.0;
constexpr double kLogMax = 14.0;

using Point = std::array<double, 2>;  // (log total_thermal, log alpha_sq)

class Objective {
public:
    Objective(std::span<const double> etas, std::span<const double> f, std::uint64_t modes)
        : etas_(etas), f_(f), modes_(static_cast<double>(modes)) {}

    static Point clamp(Point p) {
        return {std::clamp(p[0], kLogMin, kLogMax), std::clamp(p[1], kLogMin, kLogMax)};
    }

    double log_p0(double eta, double thermal, double alpha_sq) const {
        const double eta_nbar = eta * thermal / modes_;
        return -modes_ * std::log1p(eta_nbar) - eta * alpha_sq / (1.0 + eta_nbar);
    }

    double residual(Point p) const {
        p = clamp(p);
        const double thermal = std::exp(p[0]);
        const double alpha_sq = std::exp(p[1]);
        CompensatedSum s;
        for (std::size_t i = 0; i < etas_.size(); ++i) {
            const double d = f_[i] - std::exp(log_p0(etas_[i], thermal, alpha_sq));
            s.add(d * d);
        }
        return s.value();
    }

    // Residual vector r = f - p0 and Jacobian of p0 with respect to
    // (log N_ave, x), where total_thermal = N_ave (1 - x), alpha_sq = N_ave x.
    // The off-probability depends on N_ave at leading order and on x only at
    // order eta^2 / modes, so the residual valley is straight in these
    // coordinates but curved in (log thermal, log alpha_sq).
    void linearize(const Point& energy_split, Eigen::VectorXd& r, Eigen::MatrixXd& jac) const {
        const double n_ave = std::exp(energy_split[0]);
        const double x = energy_split[1];
        const double thermal = n_ave * (1.0 - x);
        const double alpha_sq = n_ave * x;
        const auto m = static_cast<Eigen::Index>(etas_.size());
        r.resize(m);
        jac.resize(m, 2);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double eta = etas_[static_cast<std::size_t>(i)];
            const double denom = 1.0 + eta * thermal / modes_;
            const double p0 = std::exp(log_p0(eta, thermal, alpha_sq));
            const double dlog_dthermal = -eta / denom + alpha_sq * eta * eta / (modes_ * denom * denom);
            const double dlog_dalpha = -eta / denom;
            r(i) = f_[static_cast<std::size_t>(i)] - p0;
            jac(i, 0) = p0 * (thermal * dlog_dthermal + alpha_sq * dlog_dalpha);
            jac(i, 1) = p0 * n_ave * (dlog_dalpha - dlog_dthermal);
        }
    }

    double split_residual(const Point& energy_split) const {
        const double n_ave = std::exp(energy_split[0]);
        const double x = energy_split[1];
        CompensatedSum s;
        for (std::size_t i = 0; i < etas_.size(); ++i) {
            const double d = f_[i] - std::exp(log_p0(etas_[i], n_ave * (1.0 - x), n_ave * x));
            s.add(d * d);
        }
        return s.value();
    }

private:
    std::span<const double> etas_;
    std::span<const double> f_;
    double modes_;
};

Point grid_scan(const Objective& obj, double& best_value) {
    const double lo = std::log(kGridLow);
    const double step = (std::log(kGridHigh) - lo) / (kGridSide - 1);
    Point best{lo, lo};
    best_value = std::numeric_limits<double>::infinity();
    for (int i = 0; i < kGridSide; ++i) {
        for (int j = 0; j < kGridSide; ++j) {
            const Point p{lo + step * i, lo + step * j};
            const double v = obj.residual(p);
            if (v < best_value) {
                best_value = v;
                best = p;
            }
        }
    }
    return best;
}

// Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2,
// shrink 1/2) on the clamped log-parameter box.
Point nelder_mead(const Objective& obj, Point start, double step, double& value) {
    std::array<Point, 3> simplex{start, Point{start[0] + step, start[1]},
                                 Point{start[0], start[1] + step}};
    std::array<double, 3> fv{};
    for (int k = 0; k < 3; ++k) {
        simplex[k] = Objective::clamp(simplex[k]);
        fv[k] = obj.residual(simplex[k]);
    }
    auto order = [&] {
        std::array<int, 3> idx{0, 1, 2};
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        std::array<Point, 3> s2{simplex[idx[0]], simplex[idx[1]], simplex[idx[2]]};
        std::array<double, 3> f2{fv[idx[0]], fv[idx[1]], fv[idx[2]]};
        simplex = s2;
        fv = f2;
    };
    auto along = [](const Point& c, const Point& w, double t) {
        return Objective::clamp(Point{c[0] + t * (w[0] - c[0]), c[1] + t * (w[1] - c[1])});
    };

    for (int it = 0; it < 5000; ++it) {
        order();
        const double spread = fv[2] - fv[0];
        double diameter = 0.0;
        for (int k = 1; k < 3; ++k) {
            diameter = std::max(diameter, std::hypot(simplex[k][0] - simplex[0][0],
                                                     simplex[k][1] - simplex[0][1]));
        }
        if (diameter < 1e-10 || spread <= 1e-12 * fv[0] + 1e-300) break;

        const Point centroid{0.5 * (simplex[0][0] + simplex[1][0]),
                             0.5 * (simplex[0][1] + simplex[1][1])};
        const Point reflected = along(centroid, simplex[2], -1.0);
        const double fr = obj.residual(reflected);
        if (fr < fv[0]) {
            const Point expanded = along(centroid, simplex[2], -2.0);
            const double fe = obj.residual(expanded);
            if (fe < fr) {
                simplex[2] = expanded;
                fv[2] = fe;
            } else {
                simplex[2] = reflected;
                fv[2] = fr;
            }
        } else if (fr < fv[1]) {
            simplex[2] = reflected;
            fv[2] = fr;
        } else {
            const bool outside = fr < fv[2];
            const Point contracted = along(centroid, outside ? reflected : simplex[2], 0.5);
            const double fc = obj.residual(contracted);
            if (fc < std::min(fr, fv[2])) {
                simplex[2] = contracted;
                fv[2] = fc;
            } else {
                for (int k = 1; k < 3; ++k) {
                    simplex[k] = along(simplex[0], simplex[k], 0.5);
                    fv[k] = obj.residual(simplex[k]);
                }
            }
        }
    }
    order();
    value = fv[0];
    return simplex[0];
}

Point clamp_split(Point q) {
    return {std::clamp(q[0], kLogMin, kLogMax), std::clamp(q[1], 0.0, 1.0)};
}

// Levenberg-damped Gauss-Newton over (log N_ave, x); QR on the augmented
// system keeps the nearly collinear Jacobian columns resolvable. Takes and
// returns (log thermal, log alpha_sq).
Point polish(const Objective& obj, Point p, double& value, bool& converged) {
    const double thermal0 = std::exp(p[0]);
    const double alpha0 = std::exp(p[1]);
    Point q = clamp_split({std::log(thermal0 + alpha0), alpha0 / (thermal0 + alpha0)});
    double qv = obj.split_residual(q);
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    double lambda = 1e-6;
    converged = false;
    for (int it = 0; it < 200 && !converged; ++it) {
        obj.linearize(q, r, jac);
        const Eigen::Index m = jac.rows();
        Eigen::MatrixXd aug(m + 2, 2);
        Eigen::VectorXd rhs(m + 2);
        aug.topRows(m) = jac;
        rhs.head(m) = r;
        rhs.tail(2).setZero();
        const Eigen::RowVector2d scale = jac.colwise().norm().cwiseMax(1e-300);
        bool improved = false;
        for (int tries = 0; tries < 40 && !improved; ++tries) {
            aug.bottomRows(2) = std::sqrt(lambda) * Eigen::Matrix2d(scale.asDiagonal());
            Eigen::Vector2d delta = aug.colPivHouseholderQr().solve(rhs);
            // At an x bound with the step pointing outward, hold x and step
            // in log N_ave alone.
            if ((q[1] >= 1.0 && delta(1) > 0.0) || (q[1] <= 0.0 && delta(1) < 0.0)) {
                const auto j0 = jac.col(0);
                delta(0) = j0.dot(r) / (j0.squaredNorm() + lambda * scale(0) * scale(0));
                delta(1) = 0.0;
            }
            const Point trial = clamp_split({q[0] + delta(0), q[1] + delta(1)});
            const double tv = obj.split_residual(trial);
            if (tv <= qv) {
                const double moved = std::max(std::abs(trial[0] - q[0]), std::abs(trial[1] - q[1]));
                q = trial;
                qv = tv;
                lambda = std::max(lambda * 0.1, 1e-16);
                improved = true;
                if (moved < 1e-11 || qv == 0.0) converged = true;
            } else {
                lambda *= 10.0;
            }
        }
        // No descent direction left at working precision.
        if (!improved) converged = true;
    }
    if (qv <= value) {
        value = qv;
        const double n_ave = std::exp(q[0]);
        return {n_ave * (1.0 - q[1]) > 0.0 ? std::log(n_ave * (1.0 - q[1])) : kLogMin,
                n_ave * q[1] > 0.0 ? std::log(n_ave * q[1]) : kLogMin};
    }
    return p;
}

}  // namespace

double energy_fit_residual(std::span<const double> etas, std::span<const double> frequencies,
                           double total_thermal, double alpha_sq, std::uint64_t modes) {
    if (etas.size() != frequencies.size()) throw DomainError("eta/frequency length mismatch");
    const auto params = PdcModelParams::from_totals(total_thermal, alpha_sq, modes);
    CompensatedSum s;
    for (std::size_t i = 0; i < etas.size(); ++i) {
        const double d = frequencies[i] - pdc_off_probability(params, etas[i]);
        s.add(d * d);
    }
    return s.value();
}

EnergyFitResult fit_energy(std::span<const double> etas, std::span<const double> frequencies,
                           std::uint64_t modes, std::optional<EnergyGuess> init_guess) {
    if (etas.size() != frequencies.size()) throw DomainError("eta/frequency length mismatch");
    if (etas.size() < 3) {
        throw UnderdeterminedError("underdetermined data: energy fit needs at least 3 efficiency points, got " +
                                   std::to_string(etas.size()));
    }
    if (modes < 1) throw DomainError("mode count must be >= 1");
    (void)EfficiencyGrid(std::vector<double>(etas.begin(), etas.end()));

    const Objective obj(etas, frequencies, modes);
    double start_value = 0.0;
    Point start = grid_scan(obj, start_value);
    if (init_guess) {
        const Point guess = Objective::clamp(
            {std::log(std::max(init_guess->total_thermal, 1e-300)),
             std::log(std::max(init_guess->alpha_sq, 1e-300))});
        const double gv = obj.residual(guess);
        if (gv <= start_value) {
            start = guess;
            start_value = gv;
        }
    }

    const double cell = (std::log(kGridHigh) - std::log(kGridLow)) / (kGridSide - 1);
    double value = start_value;
    Point best = nelder_mead(obj, start, cell, value);
    if (start_value < value) {
        best = start;
        value = start_value;
    }
    bool converged = false;
    best = polish(obj, best, value, converged);

    EnergyFitResult out;
    out.modes = modes;
    out.total_thermal = best[0] <= kLogMin ? 0.0 : std::exp(best[0]);
    out.alpha_sq = best[1] <= kLogMin ? 0.0 : std::exp(best[1]);
    out.n_ave = out.total_thermal + out.alpha_sq;
    out.x = out.n_ave > 0.0 ? out.alpha_sq / out.n_ave : 0.0;
    out.sum_sq_residual = energy_fit_residual(etas, frequencies, out.total_thermal, out.alpha_sq, modes);
    out.converged = converged;
    return out;
}

EnergyFitResult fit_energy(const OnOffDataset& data, std::uint64_t modes,
                           std::optional<EnergyGuess> init_guess) {
    const auto etas = data.etas();
    const auto f = data.frequencies();
    return fit_energy(etas, f, modes, init_guess);
}

std::vector<EnergyFitResult> sensitivity_to_modes(const OnOffDataset& data,
                                                  std::span<const std::uint64_t> modes_list) {
    std::vector<EnergyFitResult> out;
    out.reserve(modes_list.size());
    for (auto m : modes_list) out.push_back(fit_energy(data, m));
    return out;
}

}  // namespace onoff
