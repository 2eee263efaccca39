#pragma once

// Text formats.
//
// Dataset CSV:
//   # label=<text>
//   # seed=<uint64>
//   # generator=<text>
//   eta,windows,off_count
//   0.0094666666666666672,200000,167213
//
// Distribution CSV: header `n,probability`, one row per n starting at 0.
// Model parameters and reports are JSON objects.
//
// Reals are written with 17 significant digits, newlines are `\n`, and
// nothing depends on the locale. Writers go through a temporary file in
// the destination directory followed by a rename.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "onoff/core.hpp"
#include "onoff/pdc_model.hpp"

namespace onoff {

class ParseError : public std::runtime_error {
public:
    ParseError(std::string source, std::size_t line, std::size_t column, const std::string& reason);

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }
    /// 1-based; 0 when the error concerns the whole line or file.
    std::size_t column() const noexcept { return column_; }

private:
    std::string source_;
    std::size_t line_;
    std::size_t column_;
};

/// File could not be opened, written or renamed.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DatasetMetadata {
    std::string label;
    std::optional<std::uint64_t> seed;
    std::string generator;

    friend bool operator==(const DatasetMetadata&, const DatasetMetadata&) = default;
};

struct LoadedDataset {
    OnOffDataset data;
    DatasetMetadata metadata;
};

/// 17 significant digits in `%.17g` layout, independent of the C locale;
/// reads back to the same double.
std::string format_real(double value);

std::string format_dataset(const OnOffDataset& data, const DatasetMetadata& metadata = {});
/// `source` names the input in diagnostics. The dataset label comes from the
/// `label` metadata line when present.
LoadedDataset parse_dataset(std::string_view text, const std::string& source = "<memory>");

/// The metadata label defaults to the dataset's own label.
void write_dataset(const OnOffDataset& data, const std::filesystem::path& path,
                   DatasetMetadata metadata = {});
OnOffDataset read_dataset(const std::filesystem::path& path);
LoadedDataset read_dataset_with_metadata(const std::filesystem::path& path);

std::string format_distribution(const PhotonDistribution& dist);
/// Rows must run n = 0, 1, 2, ... without gaps. The values are normalized.
PhotonDistribution parse_distribution(std::string_view text, const std::string& source = "<memory>");
void write_distribution(const PhotonDistribution& dist, const std::filesystem::path& path);
PhotonDistribution read_distribution(const std::filesystem::path& path);

/// {"per_mode_thermal_mean": ..., "alpha_sq": ..., "modes": ...}
std::string format_model_params(const PdcModelParams& params);
PdcModelParams parse_model_params(std::string_view text, const std::string& source = "<memory>");
void write_model_params(const PdcModelParams& params, const std::filesystem::path& path);
PdcModelParams read_model_params(const std::filesystem::path& path);

struct ReportInput {
    std::string label;
    std::size_t records = 0;
    /// FNV-1a 64 of the canonical dataset text (no metadata), hex.
    std::string digest;
    std::optional<std::uint64_t> seed;
    /// Pseudo-random source named in the dataset metadata, if any.
    std::string generator;

    friend bool operator==(const ReportInput&, const ReportInput&) = default;
};

struct ReportConfig {
    std::size_t n_max = 0;
    /// "fixed", "target_energy" or "target_energy_from_fit".
    std::string beta_mode = "fixed";
    double beta = 0.0;
    std::optional<double> target_energy;
    double beta_rel_tolerance = 0.0;
    std::size_t max_iterations = 0;
    double loglik_tolerance = 0.0;
    /// "uniform" or "model".
    std::string init = "uniform";
    std::optional<std::uint64_t> modes;
    std::optional<std::string> background;

    friend bool operator==(const ReportConfig&, const ReportConfig&) = default;
};

struct ReportFit {
    double total_thermal = 0.0;
    double alpha_sq = 0.0;
    std::uint64_t modes = 1;
    double n_ave = 0.0;
    double x = 0.0;
    double residual = 0.0;
    bool converged = false;

    friend bool operator==(const ReportFit&, const ReportFit&) = default;
};

struct ReportReconstruction {
    std::vector<double> rho;
    std::size_t iterations = 0;
    bool converged = false;
    bool underdetermined = false;
    double beta_used = 0.0;
    double mean_energy = 0.0;
    double loglik = 0.0;

    friend bool operator==(const ReportReconstruction&, const ReportReconstruction&) = default;
};

struct DiagnosticRow {
    double eta = 0.0;
    double measured = 0.0;
    double predicted = 0.0;

    friend bool operator==(const DiagnosticRow&, const DiagnosticRow&) = default;
};

struct ReportDiagnostics {
    double chi_square = 0.0;
    std::optional<double> fidelity;
    std::optional<std::string> reference;
    std::vector<DiagnosticRow> table;

    friend bool operator==(const ReportDiagnostics&, const ReportDiagnostics&) = default;
};

struct Report {
    ReportInput input;
    ReportConfig config;
    std::optional<ReportFit> fit;
    ReportReconstruction reconstruction;
    ReportDiagnostics diagnostics;

    friend bool operator==(const Report&, const Report&) = default;
};

std::string dataset_digest(const OnOffDataset& data);

/// Pretty-printed JSON, two-space indent, trailing newline.
std::string format_report(const Report& report);
/// Rejects missing sections, an empty or negative rho array and negative
/// probabilities in the diagnostics table.
Report parse_report(std::string_view text, const std::string& source = "<memory>");
void write_report(const Report& report, const std::filesystem::path& path);
Report read_report(const std::filesystem::path& path);

std::string format_fit(const ReportFit& fit);
ReportFit parse_fit(std::string_view text, const std::string& source = "<memory>");

/// Whole-file helpers. write_text_atomic writes `<path>.tmp` and renames it.
std::string read_text(const std::filesystem::path& path);
void write_text_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace onoff
