#include "onoff/dataio.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

namespace onoff {

using Json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kDatasetHeader = "eta,windows,off_count";
constexpr std::string_view kDistributionHeader = "n,probability";

std::string describe(const std::string& source, std::size_t line, std::size_t column,
                     const std::string& reason) {
    std::string s = source;
    if (line > 0) {
        s += ":" + std::to_string(line);
        if (column > 0) s += ":" + std::to_string(column);
    }
    return s + ": " + reason;
}

struct Field {
    std::string_view text;
    std::size_t column;
};

std::vector<Field> split_fields(std::string_view line) {
    std::vector<Field> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        const auto end = comma == std::string_view::npos ? line.size() : comma;
        fields.push_back({line.substr(start, end - start), start + 1});
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

/// Splits on '\n'; a trailing '\r' is dropped from each line.
std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = nl + 1;
    }
    return lines;
}

double parse_real_field(const Field& f, const std::string& source, std::size_t line,
                        const char* name) {
    double value = 0.0;
    const char* first = f.text.data();
    const char* last = first + f.text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (f.text.empty() || ec != std::errc() || ptr != last) {
        throw ParseError(source, line, f.column,
                         std::string(name) + ": expected a decimal number, found '" +
                             std::string(f.text) + "'");
    }
    if (!std::isfinite(value)) {
        throw ParseError(source, line, f.column, std::string(name) + ": not finite");
    }
    return value;
}

std::uint64_t parse_count_field(const Field& f, const std::string& source, std::size_t line,
                                const char* name) {
    std::uint64_t value = 0;
    const char* first = f.text.data();
    const char* last = first + f.text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (f.text.empty() || ec != std::errc() || ptr != last) {
        throw ParseError(source, line, f.column,
                         std::string(name) + ": expected a nonnegative integer, found '" +
                             std::string(f.text) + "'");
    }
    return value;
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void check_single_line(const std::string& value, const char* what) {
    if (value.find_first_of("\r\n") != std::string::npos) {
        throw DomainError(std::string(what) + " must not contain line breaks");
    }
}

// JSON access with diagnostics naming the offending key path.

Json parse_json(std::string_view text, const std::string& source) {
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1;
        std::size_t column = 1;
        const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        for (std::size_t i = 0; i < stop; ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        throw ParseError(source, line, column, "malformed JSON");
    }
}

[[noreturn]] void json_fail(const std::string& source, const std::string& path,
                            const std::string& reason) {
    throw ParseError(source, 0, 0, path + ": " + reason);
}

const Json& member(const Json& obj, const char* key, const std::string& source,
                   const std::string& path) {
    if (!obj.is_object()) json_fail(source, path, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) json_fail(source, path + "." + key, "missing");
    return *it;
}

double get_real(const Json& obj, const char* key, const std::string& source, const std::string& path) {
    const Json& v = member(obj, key, source, path);
    if (!v.is_number()) json_fail(source, path + "." + key, "expected a number");
    return v.get<double>();
}

std::uint64_t get_count(const Json& obj, const char* key, const std::string& source,
                        const std::string& path) {
    const Json& v = member(obj, key, source, path);
    if (!v.is_number_unsigned()) json_fail(source, path + "." + key, "expected a nonnegative integer");
    return v.get<std::uint64_t>();
}

bool get_bool(const Json& obj, const char* key, const std::string& source, const std::string& path) {
    const Json& v = member(obj, key, source, path);
    if (!v.is_boolean()) json_fail(source, path + "." + key, "expected true or false");
    return v.get<bool>();
}

std::string get_string(const Json& obj, const char* key, const std::string& source,
                       const std::string& path) {
    const Json& v = member(obj, key, source, path);
    if (!v.is_string()) json_fail(source, path + "." + key, "expected a string");
    return v.get<std::string>();
}

template <class T, class Getter>
std::optional<T> get_optional(const Json& obj, const char* key, const std::string& source,
                              const std::string& path, Getter getter) {
    const Json& v = member(obj, key, source, path);
    if (v.is_null()) return std::nullopt;
    return getter(obj, key, source, path);
}

Json real_or_null(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw DomainError(std::string(what) + " is not finite");
}

Json fit_to_json(const ReportFit& fit) {
    require_finite(fit.total_thermal, "fit.total_thermal");
    require_finite(fit.alpha_sq, "fit.alpha_sq");
    require_finite(fit.residual, "fit.residual");
    Json j;
    j["total_thermal"] = fit.total_thermal;
    j["alpha_sq"] = fit.alpha_sq;
    j["modes"] = fit.modes;
    j["N_ave"] = fit.n_ave;
    j["x"] = fit.x;
    j["residual"] = fit.residual;
    j["converged"] = fit.converged;
    return j;
}

ReportFit fit_from_json(const Json& j, const std::string& source, const std::string& path) {
    ReportFit fit;
    fit.total_thermal = get_real(j, "total_thermal", source, path);
    fit.alpha_sq = get_real(j, "alpha_sq", source, path);
    fit.modes = get_count(j, "modes", source, path);
    fit.n_ave = get_real(j, "N_ave", source, path);
    fit.x = get_real(j, "x", source, path);
    fit.residual = get_real(j, "residual", source, path);
    fit.converged = get_bool(j, "converged", source, path);
    if (fit.total_thermal < 0.0 || fit.alpha_sq < 0.0) json_fail(source, path, "negative energy");
    if (fit.modes < 1) json_fail(source, path + ".modes", "must be >= 1");
    return fit;
}

}  // namespace

ParseError::ParseError(std::string source, std::size_t line, std::size_t column,
                       const std::string& reason)
    : std::runtime_error(describe(source, line, column, reason)),
      source_(std::move(source)),
      line_(line),
      column_(column) {}

std::string format_real(double value) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("read error on " + path.string());
    return std::move(buf).str();
}

void write_text_atomic(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ignored;
            std::filesystem::remove(tmp, ignored);
            throw IoError("write error on " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::error_code ignored;
        std::filesystem::remove(tmp, ignored);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

std::string format_dataset(const OnOffDataset& data, const DatasetMetadata& metadata) {
    check_single_line(metadata.label, "label");
    check_single_line(metadata.generator, "generator");
    std::string out;
    if (!metadata.label.empty()) out += "# label=" + metadata.label + "\n";
    if (metadata.seed) out += "# seed=" + std::to_string(*metadata.seed) + "\n";
    if (!metadata.generator.empty()) out += "# generator=" + metadata.generator + "\n";
    out += kDatasetHeader;
    out += '\n';
    for (const auto& r : data.records()) {
        out += format_real(r.eta);
        out += ',';
        out += std::to_string(r.windows);
        out += ',';
        out += std::to_string(r.off_count);
        out += '\n';
    }
    return out;
}

LoadedDataset parse_dataset(std::string_view text, const std::string& source) {
    const auto lines = split_lines(text);
    DatasetMetadata meta;
    bool header_seen = false;
    std::vector<OnOffRecord> records;
    std::map<double, std::size_t> seen;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t lineno = i + 1;
        const auto line = lines[i];
        if (line.empty()) continue;
        if (line.front() == '#') {
            auto body = line.substr(1);
            while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
            const auto eq = body.find('=');
            if (eq == std::string_view::npos) continue;
            const auto key = body.substr(0, eq);
            const auto value = body.substr(eq + 1);
            if (key == "label") {
                meta.label = std::string(value);
            } else if (key == "generator") {
                meta.generator = std::string(value);
            } else if (key == "seed") {
                const std::size_t col = static_cast<std::size_t>(value.data() - line.data()) + 1;
                meta.seed = parse_count_field({value, col}, source, lineno, "seed");
            }
            continue;
        }
        if (!header_seen) {
            if (line != kDatasetHeader) {
                throw ParseError(source, lineno, 1,
                                 "expected header '" + std::string(kDatasetHeader) + "', found '" +
                                     std::string(line) + "'");
            }
            header_seen = true;
            continue;
        }
        const auto fields = split_fields(line);
        if (fields.size() != 3) {
            throw ParseError(source, lineno, 0,
                             "expected 3 fields, found " + std::to_string(fields.size()));
        }
        OnOffRecord r;
        r.eta = parse_real_field(fields[0], source, lineno, "eta");
        r.windows = parse_count_field(fields[1], source, lineno, "windows");
        r.off_count = parse_count_field(fields[2], source, lineno, "off_count");
        if (!(r.eta > 0.0 && r.eta <= 1.0)) {
            throw ParseError(source, lineno, fields[0].column, "eta outside (0, 1]");
        }
        if (r.windows < 1) throw ParseError(source, lineno, fields[1].column, "windows must be >= 1");
        if (r.off_count > r.windows) {
            throw ParseError(source, lineno, fields[2].column, "off_count exceeds windows");
        }
        const auto [it, inserted] = seen.emplace(r.eta, lineno);
        if (!inserted) {
            throw ParseError(source, lineno, fields[0].column,
                             "eta duplicates line " + std::to_string(it->second));
        }
        records.push_back(r);
    }
    if (!header_seen) throw ParseError(source, 0, 0, "missing header '" + std::string(kDatasetHeader) + "'");
    return {OnOffDataset(std::move(records), meta.label), std::move(meta)};
}

void write_dataset(const OnOffDataset& data, const std::filesystem::path& path,
                   DatasetMetadata metadata) {
    if (metadata.label.empty()) metadata.label = data.label();
    write_text_atomic(path, format_dataset(data, metadata));
}

OnOffDataset read_dataset(const std::filesystem::path& path) {
    return read_dataset_with_metadata(path).data;
}

LoadedDataset read_dataset_with_metadata(const std::filesystem::path& path) {
    return parse_dataset(read_text(path), path.string());
}

std::string format_distribution(const PhotonDistribution& dist) {
    std::string out(kDistributionHeader);
    out += '\n';
    for (std::size_t n = 0; n < dist.size(); ++n) {
        out += std::to_string(n);
        out += ',';
        out += format_real(dist[n]);
        out += '\n';
    }
    return out;
}

PhotonDistribution parse_distribution(std::string_view text, const std::string& source) {
    const auto lines = split_lines(text);
    bool header_seen = false;
    std::vector<double> probs;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t lineno = i + 1;
        const auto line = lines[i];
        if (line.empty() || line.front() == '#') continue;
        if (!header_seen) {
            if (line != kDistributionHeader) {
                throw ParseError(source, lineno, 1,
                                 "expected header '" + std::string(kDistributionHeader) +
                                     "', found '" + std::string(line) + "'");
            }
            header_seen = true;
            continue;
        }
        const auto fields = split_fields(line);
        if (fields.size() != 2) {
            throw ParseError(source, lineno, 0,
                             "expected 2 fields, found " + std::to_string(fields.size()));
        }
        const auto n = parse_count_field(fields[0], source, lineno, "n");
        if (n != probs.size()) {
            throw ParseError(source, lineno, fields[0].column,
                             "expected n = " + std::to_string(probs.size()));
        }
        const double p = parse_real_field(fields[1], source, lineno, "probability");
        if (p < 0.0) throw ParseError(source, lineno, fields[1].column, "negative probability");
        probs.push_back(p);
    }
    if (!header_seen) {
        throw ParseError(source, 0, 0, "missing header '" + std::string(kDistributionHeader) + "'");
    }
    if (probs.empty()) throw ParseError(source, 0, 0, "empty distribution");
    try {
        return PhotonDistribution(std::move(probs));
    } catch (const DomainError& e) {
        throw ParseError(source, 0, 0, e.what());
    }
}

void write_distribution(const PhotonDistribution& dist, const std::filesystem::path& path) {
    write_text_atomic(path, format_distribution(dist));
}

PhotonDistribution read_distribution(const std::filesystem::path& path) {
    return parse_distribution(read_text(path), path.string());
}

std::string format_model_params(const PdcModelParams& params) {
    Json j;
    j["per_mode_thermal_mean"] = params.per_mode_thermal_mean();
    j["alpha_sq"] = params.alpha_sq();
    j["modes"] = params.modes();
    return j.dump(2) + "\n";
}

PdcModelParams parse_model_params(std::string_view text, const std::string& source) {
    const Json j = parse_json(text, source);
    const double nbar = get_real(j, "per_mode_thermal_mean", source, "$");
    const double a2 = get_real(j, "alpha_sq", source, "$");
    const auto modes = get_count(j, "modes", source, "$");
    try {
        return nbar == 0.0 ? PdcModelParams::from_totals(0.0, a2, modes)
                           : PdcModelParams(nbar, a2, modes);
    } catch (const DomainError& e) {
        throw ParseError(source, 0, 0, e.what());
    }
}

void write_model_params(const PdcModelParams& params, const std::filesystem::path& path) {
    write_text_atomic(path, format_model_params(params));
}

PdcModelParams read_model_params(const std::filesystem::path& path) {
    return parse_model_params(read_text(path), path.string());
}

std::string dataset_digest(const OnOffDataset& data) {
    return fnv1a_hex(format_dataset(data));
}

std::string format_report(const Report& report) {
    const auto& rec = report.reconstruction;
    if (rec.rho.empty()) throw DomainError("report distribution is empty");
    for (double p : rec.rho) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("report distribution has an invalid entry");
    }
    require_finite(rec.loglik, "reconstruction.loglik");
    require_finite(rec.mean_energy, "reconstruction.mean_energy");
    require_finite(report.diagnostics.chi_square, "diagnostics.chi_square");

    Json input;
    input["label"] = report.input.label;
    input["records"] = report.input.records;
    input["digest"] = report.input.digest;
    input["seed"] = report.input.seed ? Json(*report.input.seed) : Json(nullptr);
    input["generator"] = report.input.generator;

    const auto& c = report.config;
    Json beta_policy;
    beta_policy["mode"] = c.beta_mode;
    beta_policy["beta"] = c.beta;
    beta_policy["target_energy"] = real_or_null(c.target_energy);
    beta_policy["rel_tolerance"] = c.beta_rel_tolerance;
    Json stopping;
    stopping["max_iterations"] = c.max_iterations;
    stopping["loglik_tolerance"] = c.loglik_tolerance;
    Json config;
    config["n_max"] = c.n_max;
    config["beta_policy"] = beta_policy;
    config["stopping"] = stopping;
    config["init"] = c.init;
    config["modes"] = c.modes ? Json(*c.modes) : Json(nullptr);
    config["background"] = c.background ? Json(*c.background) : Json(nullptr);

    Json reconstruction;
    reconstruction["rho"] = rec.rho;
    reconstruction["rho_sum"] = compensated_sum(rec.rho);
    reconstruction["iterations"] = rec.iterations;
    reconstruction["converged"] = rec.converged;
    reconstruction["underdetermined"] = rec.underdetermined;
    reconstruction["beta_used"] = rec.beta_used;
    reconstruction["mean_energy"] = rec.mean_energy;
    reconstruction["loglik"] = rec.loglik;

    const auto& d = report.diagnostics;
    Json table = Json::array();
    for (const auto& row : d.table) {
        Json r;
        r["eta"] = row.eta;
        r["measured"] = row.measured;
        r["predicted"] = row.predicted;
        table.push_back(std::move(r));
    }
    Json diagnostics;
    diagnostics["chi_square"] = d.chi_square;
    diagnostics["fidelity"] = real_or_null(d.fidelity);
    diagnostics["reference"] = d.reference ? Json(*d.reference) : Json(nullptr);
    diagnostics["table"] = std::move(table);

    Json root;
    root["input"] = std::move(input);
    root["config"] = std::move(config);
    root["fit"] = report.fit ? fit_to_json(*report.fit) : Json(nullptr);
    root["reconstruction"] = std::move(reconstruction);
    root["diagnostics"] = std::move(diagnostics);
    return root.dump(2) + "\n";
}

Report parse_report(std::string_view text, const std::string& source) {
    const Json root = parse_json(text, source);
    Report r;

    const Json& input = member(root, "input", source, "$");
    r.input.label = get_string(input, "label", source, "$.input");
    r.input.records = get_count(input, "records", source, "$.input");
    r.input.digest = get_string(input, "digest", source, "$.input");
    r.input.seed = get_optional<std::uint64_t>(input, "seed", source, "$.input", get_count);
    r.input.generator = get_string(input, "generator", source, "$.input");

    const Json& config = member(root, "config", source, "$");
    const Json& bp = member(config, "beta_policy", source, "$.config");
    const Json& stop = member(config, "stopping", source, "$.config");
    auto& c = r.config;
    c.n_max = get_count(config, "n_max", source, "$.config");
    c.beta_mode = get_string(bp, "mode", source, "$.config.beta_policy");
    c.beta = get_real(bp, "beta", source, "$.config.beta_policy");
    c.target_energy = get_optional<double>(bp, "target_energy", source, "$.config.beta_policy", get_real);
    c.beta_rel_tolerance = get_real(bp, "rel_tolerance", source, "$.config.beta_policy");
    c.max_iterations = get_count(stop, "max_iterations", source, "$.config.stopping");
    c.loglik_tolerance = get_real(stop, "loglik_tolerance", source, "$.config.stopping");
    c.init = get_string(config, "init", source, "$.config");
    c.modes = get_optional<std::uint64_t>(config, "modes", source, "$.config", get_count);
    c.background = get_optional<std::string>(config, "background", source, "$.config", get_string);

    const Json& fit = member(root, "fit", source, "$");
    if (!fit.is_null()) r.fit = fit_from_json(fit, source, "$.fit");

    const Json& rec = member(root, "reconstruction", source, "$");
    const Json& rho = member(rec, "rho", source, "$.reconstruction");
    if (!rho.is_array()) json_fail(source, "$.reconstruction.rho", "expected an array");
    if (rho.empty()) json_fail(source, "$.reconstruction.rho", "empty distribution");
    for (std::size_t n = 0; n < rho.size(); ++n) {
        if (!rho[n].is_number()) {
            json_fail(source, "$.reconstruction.rho[" + std::to_string(n) + "]", "expected a number");
        }
        const double p = rho[n].get<double>();
        if (!(p >= 0.0)) {
            json_fail(source, "$.reconstruction.rho[" + std::to_string(n) + "]", "negative probability");
        }
        r.reconstruction.rho.push_back(p);
    }
    const double stated = get_real(rec, "rho_sum", source, "$.reconstruction");
    if (std::abs(stated - compensated_sum(r.reconstruction.rho)) > 1e-12 * std::max(1.0, stated)) {
        json_fail(source, "$.reconstruction.rho_sum", "does not match the array");
    }
    r.reconstruction.iterations = get_count(rec, "iterations", source, "$.reconstruction");
    r.reconstruction.converged = get_bool(rec, "converged", source, "$.reconstruction");
    r.reconstruction.underdetermined = get_bool(rec, "underdetermined", source, "$.reconstruction");
    r.reconstruction.beta_used = get_real(rec, "beta_used", source, "$.reconstruction");
    r.reconstruction.mean_energy = get_real(rec, "mean_energy", source, "$.reconstruction");
    r.reconstruction.loglik = get_real(rec, "loglik", source, "$.reconstruction");

    const Json& diag = member(root, "diagnostics", source, "$");
    r.diagnostics.chi_square = get_real(diag, "chi_square", source, "$.diagnostics");
    r.diagnostics.fidelity = get_optional<double>(diag, "fidelity", source, "$.diagnostics", get_real);
    r.diagnostics.reference =
        get_optional<std::string>(diag, "reference", source, "$.diagnostics", get_string);
    const Json& table = member(diag, "table", source, "$.diagnostics");
    if (!table.is_array()) json_fail(source, "$.diagnostics.table", "expected an array");
    for (std::size_t i = 0; i < table.size(); ++i) {
        const std::string path = "$.diagnostics.table[" + std::to_string(i) + "]";
        DiagnosticRow row;
        row.eta = get_real(table[i], "eta", source, path);
        row.measured = get_real(table[i], "measured", source, path);
        row.predicted = get_real(table[i], "predicted", source, path);
        if (row.measured < 0.0 || row.predicted < 0.0) json_fail(source, path, "negative probability");
        r.diagnostics.table.push_back(row);
    }
    return r;
}

void write_report(const Report& report, const std::filesystem::path& path) {
    write_text_atomic(path, format_report(report));
}

Report read_report(const std::filesystem::path& path) {
    return parse_report(read_text(path), path.string());
}

std::string format_fit(const ReportFit& fit) {
    return fit_to_json(fit).dump(2) + "\n";
}

ReportFit parse_fit(std::string_view text, const std::string& source) {
    return fit_from_json(parse_json(text, source), source, "$");
}

}  // namespace onoff
