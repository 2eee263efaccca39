#include "onoff/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <iostream>
#include <ostream>
#include <system_error>

#include "onoff/energy_fit.hpp"
#include "onoff/pdc_model.hpp"

namespace onoff::cli {

namespace {

namespace fs = std::filesystem;

std::vector<std::string_view> split_commas(std::string_view s) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        if (comma == std::string_view::npos) {
            parts.push_back(s.substr(start));
            return parts;
        }
        parts.push_back(s.substr(start, comma - start));
        start = comma + 1;
    }
}

double to_real(std::string_view s, const std::string& what) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw UsageError(what + ": expected a number, found '" + std::string(s) + "'");
    }
    return v;
}

std::uint64_t to_count(std::string_view s, const std::string& what) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw UsageError(what + ": expected a nonnegative integer, found '" + std::string(s) + "'");
    }
    return v;
}

EfficiencyGrid parse_grid(std::string_view text) {
    const auto parts = split_commas(text);
    if (parts.size() != 2) throw UsageError("--grid: expected N_POINTS,ETA_MAX");
    const auto points = to_count(parts[0], "--grid");
    const double eta_max = to_real(parts[1], "--grid");
    if (points < 1) throw UsageError("--grid: need at least one point");
    if (!(eta_max > 0.0 && eta_max <= 1.0)) throw UsageError("--grid: ETA_MAX outside (0, 1]");
    return EfficiencyGrid::equally_spaced(points, eta_max);
}

void check_output_path(const std::string& path, const char* flag) {
    const fs::path p(path);
    const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) {
        throw UsageError(std::string(flag) + ": directory '" + dir.string() + "' does not exist");
    }
    if (fs::is_directory(p, ec)) throw UsageError(std::string(flag) + ": '" + path + "' is a directory");
}

OnOffDataset relabeled(const OnOffDataset& d, std::string label) {
    return OnOffDataset(std::vector<OnOffRecord>(d.records().begin(), d.records().end()),
                        std::move(label));
}

LoadedDataset load_input(const std::string& input, const std::optional<std::string>& background) {
    auto loaded = read_dataset_with_metadata(input);
    if (background) {
        const auto bg = read_dataset(*background);
        loaded.data = relabeled(correct_background(loaded.data, bg), loaded.data.label());
    }
    return loaded;
}

ReportFit to_report_fit(const EnergyFitResult& f) {
    return {f.total_thermal, f.alpha_sq, f.modes, f.n_ave, f.x, f.sum_sq_residual, f.converged};
}

PdcModelParams fit_params(const ReportFit& f) {
    return PdcModelParams::from_totals(f.total_thermal, f.alpha_sq, f.modes);
}

std::string csv_optional(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

// Subcommand option holders.

struct SimulateArgs {
    std::string model;
    std::string grid = "30,0.284";
    std::uint64_t windows = 200000;
    std::uint64_t seed = 0;
    std::optional<std::string> background;
    std::string output;
};

struct FitArgs {
    std::string input;
    std::uint64_t modes = 1;
    std::optional<std::string> background;
    std::optional<std::string> output;
    bool strict = false;
};

struct ReconstructArgs {
    std::string input;
    std::string output;
    std::optional<std::string> plot;
    std::optional<std::string> background;
    std::size_t n_max = 60;
    std::optional<double> beta;
    std::optional<double> target_energy;
    bool target_from_fit = false;
    double beta_tol = 0.002;
    std::optional<std::uint64_t> modes;
    std::size_t max_iter = 100000;
    double tol = 1e-9;
    std::string init = "uniform";
    std::optional<std::string> reference;
    bool strict = false;
    bool quiet = false;
};

struct CompareArgs {
    std::string input;
    std::string reference;
    std::optional<std::string> output;
};

struct ReportArgs {
    std::string input;
    std::string output;
};

int do_simulate(const SimulateArgs& a, std::ostream& out) {
    const auto spec = parse_model_spec(a.model);
    SimConfig config;
    config.grid = parse_grid(a.grid);
    config.windows_per_point = a.windows;
    config.seed = a.seed;
    if (a.windows < 1) throw UsageError("--windows: must be >= 1");
    check_output_path(a.output, "--output");
    if (a.background) {
        const auto bg = read_dataset(*a.background);
        if (bg.etas() != std::vector<double>(config.grid.etas().begin(), config.grid.etas().end())) {
            throw DomainError("background efficiencies do not match the simulation grid");
        }
        config.background_off_prob = bg.frequencies();
    }
    const auto data = relabeled(simulate_dataset(spec.truth, config), spec.text);
    write_dataset(data, a.output, {spec.text, a.seed, std::string(kGeneratorName)});
    out << "wrote " << data.size() << " records to " << a.output << "\n";
    return kExitOk;
}

int do_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
    if (a.modes < 1) throw UsageError("--modes: must be >= 1");
    if (a.output) check_output_path(*a.output, "--output");
    const auto loaded = load_input(a.input, a.background);
    const auto fit = to_report_fit(fit_energy(loaded.data, a.modes));
    if (a.strict && !fit.converged) {
        err << "error: energy fit did not converge\n";
        return kExitRuntime;
    }
    out << "N_ave=" << format_real(fit.n_ave) << " x=" << format_real(fit.x)
        << " residual=" << format_real(fit.residual) << "\n";
    if (a.output) write_text_atomic(*a.output, format_fit(fit));
    return kExitOk;
}

int do_reconstruct(const ReconstructArgs& a, std::ostream& out, std::ostream& err) {
    check_output_path(a.output, "--output");
    if (a.plot) check_output_path(*a.plot + "_offprob.csv", "--plot");
    PipelineOptions o;
    o.n_max = a.n_max;
    if (a.beta) {
        o.beta_choice = BetaChoice::fixed;
        o.beta = *a.beta;
    } else if (a.target_energy) {
        o.beta_choice = BetaChoice::target_energy;
        o.target_energy = *a.target_energy;
    } else if (a.target_from_fit) {
        o.beta_choice = BetaChoice::target_energy_from_fit;
    }
    o.beta_rel_tolerance = a.beta_tol;
    o.max_iterations = a.max_iter;
    o.loglik_tolerance = a.tol;
    o.model_init = a.init == "model";
    o.modes = a.modes;
    if (a.reference) o.reference = parse_model_spec(*a.reference);
    o.background_name = a.background;
    if ((o.beta_choice == BetaChoice::target_energy_from_fit || o.model_init) && !o.modes) {
        throw UsageError(o.model_init ? "--init model requires --modes"
                                      : "--target-energy-from-fit requires --modes");
    }

    const auto loaded = load_input(a.input, a.background);
    const auto report = run_pipeline(loaded, o, a.quiet ? nullptr : &err);
    if (a.strict && !report.reconstruction.converged) {
        err << "error: reconstruction did not converge within " << a.max_iter << " iterations\n";
        return kExitRuntime;
    }
    if (a.strict && report.fit && !report.fit->converged) {
        err << "error: energy fit did not converge\n";
        return kExitRuntime;
    }
    write_report(report, a.output);
    if (a.plot) {
        const auto tables = emit_plot_data(report);
        write_text_atomic(*a.plot + "_offprob.csv", format_off_probability_table(tables));
        write_text_atomic(*a.plot + "_distribution.csv", format_distribution_table(tables));
    }
    out << "iterations=" << report.reconstruction.iterations
        << " beta=" << format_real(report.reconstruction.beta_used)
        << " mean_energy=" << format_real(report.reconstruction.mean_energy)
        << " chi_square=" << format_real(report.diagnostics.chi_square);
    if (report.diagnostics.fidelity) out << " fidelity=" << format_real(*report.diagnostics.fidelity);
    out << "\n";
    return kExitOk;
}

int do_compare(const CompareArgs& a, std::ostream& out) {
    const auto spec = parse_model_spec(a.reference);
    if (a.output) check_output_path(*a.output, "--output");
    const auto report = read_report(a.input);
    const PhotonDistribution recon(report.reconstruction.rho);
    const auto ref = reference_distribution(spec.truth, recon.n_max());
    std::vector<double> predicted;
    std::vector<double> measured;
    for (const auto& row : report.diagnostics.table) {
        predicted.push_back(row.predicted);
        measured.push_back(row.measured);
    }
    const double f = fidelity(recon, ref);
    const double chi2 = chi_square(predicted, measured);
    out << "fidelity=" << format_real(f) << " chi_square=" << format_real(chi2) << "\n";
    if (a.output) {
        std::string csv = "# reference=" + spec.text + "\n# fidelity=" + format_real(f) +
                          "\n# chi_square=" + format_real(chi2) + "\nn,reconstructed,reference\n";
        const std::size_t len = std::max(recon.size(), ref.size());
        for (std::size_t n = 0; n < len; ++n) {
            csv += std::to_string(n) + "," + format_real(recon.at(n)) + "," + format_real(ref.at(n)) + "\n";
        }
        write_text_atomic(*a.output, csv);
    }
    return kExitOk;
}

int do_report(const ReportArgs& a, std::ostream& out) {
    check_output_path(a.output + "_offprob.csv", "--output");
    const auto tables = emit_plot_data(read_report(a.input));
    write_text_atomic(a.output + "_offprob.csv", format_off_probability_table(tables));
    write_text_atomic(a.output + "_distribution.csv", format_distribution_table(tables));
    out << "wrote " << a.output << "_offprob.csv and " << a.output << "_distribution.csv\n";
    return kExitOk;
}

}  // namespace

ModelSpec parse_model_spec(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) {
        throw UsageError("model spec '" + std::string(text) + "': expected KIND:ARGS");
    }
    const auto kind = text.substr(0, colon);
    const auto args = text.substr(colon + 1);
    const std::string what = "model spec '" + std::string(text) + "'";
    try {
        if (kind == "regime") {
            const auto p = split_commas(args);
            if (p.size() != 3) throw UsageError(what + ": expected regime:N_AVE,X,MODES");
            return {std::string(text), PdcModelParams::from_regime(to_real(p[0], what), to_real(p[1], what),
                                                                   to_count(p[2], what))};
        }
        if (kind == "thermal") {
            const auto p = split_commas(args);
            if (p.size() != 2) throw UsageError(what + ": expected thermal:NBAR,MODES");
            const double nbar = to_real(p[0], what);
            const auto modes = to_count(p[1], what);
            return {std::string(text), nbar == 0.0 ? PdcModelParams::from_totals(0.0, 0.0, modes)
                                                   : PdcModelParams(nbar, 0.0, modes)};
        }
        if (kind == "fock") {
            return {std::string(text), PhotonDistribution::fock(to_count(args, what))};
        }
        if (kind == "file") {
            if (args.empty()) throw UsageError(what + ": missing path");
            const fs::path path{std::string(args)};
            std::error_code ec;
            if (!fs::is_regular_file(path, ec)) throw UsageError(what + ": no such file");
            return {std::string(text), read_distribution(path)};
        }
    } catch (const DomainError& e) {
        throw UsageError(what + ": " + e.what());
    }
    throw UsageError(what + ": unknown kind '" + std::string(kind) + "'");
}

PhotonDistribution reference_distribution(const SimulationTruth& truth, std::size_t n_max) {
    if (const auto* params = std::get_if<PdcModelParams>(&truth)) {
        return pdc_pmf(*params, n_max).distribution;
    }
    return std::get<PhotonDistribution>(truth);
}

Report run_pipeline(const LoadedDataset& input, const PipelineOptions& o, std::ostream* progress) {
    const auto& data = input.data;
    if ((o.beta_choice == BetaChoice::target_energy_from_fit || o.model_init) && !o.modes) {
        throw UsageError("the energy fit needs a mode count");
    }
    Report r;
    r.input = {data.label(), data.size(), dataset_digest(data), input.metadata.seed,
               input.metadata.generator};
    r.config.n_max = o.n_max;
    r.config.beta_mode = o.beta_choice == BetaChoice::fixed           ? "fixed"
                         : o.beta_choice == BetaChoice::target_energy ? "target_energy"
                                                                      : "target_energy_from_fit";
    r.config.beta = o.beta_choice == BetaChoice::fixed ? o.beta : 0.0;
    r.config.beta_rel_tolerance = o.beta_choice == BetaChoice::fixed ? 0.0 : o.beta_rel_tolerance;
    r.config.max_iterations = o.max_iterations;
    r.config.loglik_tolerance = o.loglik_tolerance;
    r.config.init = o.model_init ? "model" : "uniform";
    r.config.modes = o.modes;
    r.config.background = o.background_name;

    if (o.modes) {
        r.fit = to_report_fit(fit_energy(data, *o.modes));
        if (progress) {
            *progress << "fit: N_ave=" << format_real(r.fit->n_ave) << " x=" << format_real(r.fit->x)
                      << " residual=" << format_real(r.fit->residual) << "\n";
        }
    }

    EmConfig config;
    config.n_max = o.n_max;
    config.max_iterations = o.max_iterations;
    config.loglik_tolerance = o.loglik_tolerance;
    if (o.model_init) {
        const auto seed = pdc_pmf(fit_params(*r.fit), o.n_max).distribution;
        config.init = InitKind::model_seeded;
        config.initial = PhotonDistribution(std::vector<double>(seed.probs().begin(), seed.probs().end()));
    }

    BetaPolicy policy = BetaPolicy::fixed(o.beta);
    if (o.beta_choice == BetaChoice::target_energy) {
        policy = BetaPolicy::target(o.target_energy, o.beta_rel_tolerance);
        r.config.target_energy = o.target_energy;
    } else if (o.beta_choice == BetaChoice::target_energy_from_fit) {
        policy = BetaPolicy::target(r.fit->n_ave, o.beta_rel_tolerance);
        r.config.target_energy = r.fit->n_ave;
    }

    const auto result = tune_beta(data, config, policy);
    if (progress) {
        *progress << "reconstruct: iterations=" << result.iterations_used
                  << " L=" << format_real(result.loglik_trace.back())
                  << " beta=" << format_real(result.beta_used)
                  << (result.converged ? "" : " (not converged)") << "\n";
    }

    auto& rec = r.reconstruction;
    rec.rho.assign(result.distribution.probs().begin(), result.distribution.probs().end());
    rec.iterations = result.iterations_used;
    rec.converged = result.converged;
    rec.underdetermined = result.underdetermined;
    rec.beta_used = result.beta_used;
    rec.mean_energy = result.mean_energy;
    rec.loglik = result.loglik_trace.back();

    const auto f = data.frequencies();
    r.diagnostics.chi_square = chi_square(result.predicted_off, f);
    for (std::size_t k = 0; k < data.size(); ++k) {
        r.diagnostics.table.push_back({data[k].eta, f[k], result.predicted_off[k]});
    }
    if (o.reference) {
        r.diagnostics.reference = o.reference->text;
        r.diagnostics.fidelity =
            fidelity(result.distribution, reference_distribution(o.reference->truth, o.n_max));
    }
    return r;
}

PlotTables emit_plot_data(const Report& report) {
    PlotTables t;
    std::optional<PdcModelParams> model;
    if (report.fit) model = fit_params(*report.fit);
    for (const auto& row : report.diagnostics.table) {
        std::optional<double> m;
        if (model) m = pdc_off_probability(*model, row.eta);
        t.off_probability.push_back({row.eta, row.measured, row.predicted, m});
    }
    const auto& rho = report.reconstruction.rho;
    std::optional<PhotonDistribution> model_pmf;
    if (model) model_pmf = pdc_pmf(*model, rho.size() - 1).distribution;
    for (std::size_t n = 0; n < rho.size(); ++n) {
        std::optional<double> m;
        if (model_pmf) m = (*model_pmf)[n];
        t.distribution.push_back({n, rho[n], m});
    }
    return t;
}

std::string format_off_probability_table(const PlotTables& tables) {
    std::string s = "eta,measured,reconstructed,model\n";
    for (const auto& r : tables.off_probability) {
        s += format_real(r.eta) + "," + format_real(r.measured) + "," + format_real(r.reconstructed) +
             "," + csv_optional(r.model) + "\n";
    }
    return s;
}

std::string format_distribution_table(const PlotTables& tables) {
    std::string s = "n,reconstructed,model\n";
    for (const auto& r : tables.distribution) {
        s += std::to_string(r.n) + "," + format_real(r.reconstructed) + "," + csv_optional(r.model) + "\n";
    }
    return s;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Photon-number distributions from on/off detection", "onoff"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Simulate an on/off dataset");
    simulate->add_option("--model", sim.model, "regime:N_AVE,X,MODES | thermal:NBAR,MODES | fock:N | file:PATH")
        ->required();
    simulate->add_option("--grid", sim.grid, "N_POINTS,ETA_MAX")->capture_default_str();
    simulate->add_option("--windows", sim.windows, "Gated windows per point")->capture_default_str();
    simulate->add_option("--seed", sim.seed)->capture_default_str();
    simulate->add_option("--background", sim.background,
                         "Background-only dataset on the same grid; its no-click frequencies multiply p0")
        ->check(CLI::ExistingFile);
    simulate->add_option("--output", sim.output)->required();

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit-energy", "Fit N_ave and x to a dataset");
    fit_cmd->add_option("--input", fit.input)->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--modes", fit.modes, "Effective mode count")->required();
    fit_cmd->add_option("--background", fit.background, "Background dataset to divide out")
        ->check(CLI::ExistingFile);
    fit_cmd->add_option("--output", fit.output, "Fit result JSON");
    fit_cmd->add_flag("--strict", fit.strict, "Fail when the fit does not converge");

    ReconstructArgs rec;
    auto* rec_cmd = app.add_subcommand("reconstruct", "Maximum-likelihood reconstruction");
    rec_cmd->add_option("--input", rec.input)->required()->check(CLI::ExistingFile);
    rec_cmd->add_option("--output", rec.output, "Report JSON")->required();
    rec_cmd->add_option("--plot", rec.plot, "Also write PREFIX_offprob.csv and PREFIX_distribution.csv");
    rec_cmd->add_option("--background", rec.background, "Background dataset to divide out")
        ->check(CLI::ExistingFile);
    rec_cmd->add_option("--nmax", rec.n_max, "Truncation")->capture_default_str()->check(CLI::Range(1, 100000));
    auto* beta_opt = rec_cmd->add_option("--beta", rec.beta, "Fixed Lagrange multiplier")
                         ->check(CLI::NonNegativeNumber);
    auto* target_opt = rec_cmd->add_option("--target-energy", rec.target_energy, "Target mean photon number")
                           ->check(CLI::NonNegativeNumber);
    auto* from_fit_opt = rec_cmd->add_flag("--target-energy-from-fit", rec.target_from_fit,
                                           "Target the fitted N_ave (needs --modes)");
    beta_opt->excludes(target_opt)->excludes(from_fit_opt);
    target_opt->excludes(from_fit_opt);
    rec_cmd->add_option("--beta-tol", rec.beta_tol, "Relative tolerance on the target energy")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    rec_cmd->add_option("--modes", rec.modes, "Effective mode count for the energy fit");
    rec_cmd->add_option("--max-iter", rec.max_iter)->capture_default_str()->check(CLI::PositiveNumber);
    rec_cmd->add_option("--tol", rec.tol, "Stop when |dL| falls below this")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    rec_cmd->add_option("--init", rec.init)->capture_default_str()->check(CLI::IsMember({"uniform", "model"}));
    rec_cmd->add_option("--reference", rec.reference, "Model spec for the fidelity diagnostic");
    rec_cmd->add_flag("--strict", rec.strict, "Fail when the iteration does not converge");
    rec_cmd->add_flag("--quiet", rec.quiet, "No progress output");

    CompareArgs cmp;
    auto* cmp_cmd = app.add_subcommand("compare", "Fidelity and chi-square of a report against a model");
    cmp_cmd->add_option("--input", cmp.input, "Report JSON")->required()->check(CLI::ExistingFile);
    cmp_cmd->add_option("--reference", cmp.reference, "Model spec")->required();
    cmp_cmd->add_option("--output", cmp.output, "Per-n table CSV");

    ReportArgs rep;
    auto* rep_cmd = app.add_subcommand("report", "Plot tables from a report");
    rep_cmd->add_option("--input", rep.input, "Report JSON")->required()->check(CLI::ExistingFile);
    rep_cmd->add_option("--output", rep.output, "Prefix for the two CSV tables")->required();

    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (simulate->parsed()) return do_simulate(sim, out);
        if (fit_cmd->parsed()) return do_fit(fit, out, err);
        if (rec_cmd->parsed()) return do_reconstruct(rec, out, err);
        if (cmp_cmd->parsed()) return do_compare(cmp, out);
        if (rep_cmd->parsed()) return do_report(rep, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace onoff::cli
