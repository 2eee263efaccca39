#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "onoff/cli.hpp"
#include "onoff/pdc_model.hpp"

using namespace onoff;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("onoff_cli_" + std::to_string(std::random_device{}()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "onoff");
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

const std::string kHighX = "regime:18.34,0.907,700000";

}  // namespace

TEST_CASE("model specs") {
    const auto r = cli::parse_model_spec(kHighX);
    const auto& p = std::get<PdcModelParams>(r.truth);
    CHECK(p.mean_energy() == doctest::Approx(18.34));
    CHECK(p.modes() == 700000);
    const auto t = cli::parse_model_spec("thermal:1,1");
    CHECK(std::get<PdcModelParams>(t.truth) == PdcModelParams(1.0, 0.0, 1));
    CHECK(std::get<PhotonDistribution>(cli::parse_model_spec("fock:2").truth)[2] == 1.0);

    CHECK_THROWS_AS(cli::parse_model_spec("regime:1,2"), cli::UsageError);
    CHECK_THROWS_AS(cli::parse_model_spec("regime:1,1.5,10"), cli::UsageError);
    CHECK_THROWS_AS(cli::parse_model_spec("thermal:a,1"), cli::UsageError);
    CHECK_THROWS_AS(cli::parse_model_spec("gauss:1"), cli::UsageError);
    CHECK_THROWS_AS(cli::parse_model_spec("file:/nonexistent.csv"), cli::UsageError);
    CHECK_THROWS_AS(cli::parse_model_spec("fock"), cli::UsageError);
}

TEST_CASE("simulate, reconstruct with and without the constraint") {
    TempDir dir;
    auto sim = run_cli({"simulate", "--model", kHighX, "--grid", "30,0.284", "--windows", "200000", "--seed", "7",
                        "--output", dir / "d.csv"});
    REQUIRE(sim.code == 0);
    CHECK(read_dataset(dir / "d.csv").size() == 30);

    auto free_run = run_cli({"reconstruct", "--input", dir / "d.csv", "--nmax", "80", "--beta", "0", "--reference",
                             kHighX, "--output", dir / "u.json"});
    REQUIRE(free_run.code == 0);
    auto constrained = run_cli({"reconstruct", "--input", dir / "d.csv", "--nmax", "80", "--target-energy-from-fit",
                                "--modes", "700000", "--reference", kHighX, "--output", dir / "c.json"});
    REQUIRE(constrained.code == 0);
    const auto u = read_report(dir / "u.json");
    const auto c = read_report(dir / "c.json");
    REQUIRE(u.diagnostics.fidelity);
    REQUIRE(c.diagnostics.fidelity);
    MESSAGE("fidelity unconstrained " << *u.diagnostics.fidelity << " constrained " << *c.diagnostics.fidelity);
    CHECK(*c.diagnostics.fidelity >= *u.diagnostics.fidelity);
    CHECK(c.fit.has_value());
    CHECK(c.config.beta_mode == "target_energy_from_fit");
    CHECK(c.input.seed == std::optional<std::uint64_t>(7));
    CHECK(c.reconstruction.rho.size() == 81);

    // Progress goes to the diagnostic stream only.
    CHECK(constrained.err.find("reconstruct:") != std::string::npos);
    CHECK(read_text(dir / "c.json").find("reconstruct:") == std::string::npos);

    SUBCASE("compare matches the core diagnostics") {
        auto cmp = run_cli({"compare", "--input", dir / "c.json", "--reference", kHighX, "--output", dir / "cmp.csv"});
        REQUIRE(cmp.code == 0);
        const PhotonDistribution rec(c.reconstruction.rho);
        const auto ref = cli::reference_distribution(cli::parse_model_spec(kHighX).truth, 80);
        std::vector<double> pred;
        std::vector<double> meas;
        for (const auto& row : c.diagnostics.table) {
            pred.push_back(row.predicted);
            meas.push_back(row.measured);
        }
        CHECK(cmp.out.find("fidelity=" + format_real(fidelity(rec, ref))) != std::string::npos);
        CHECK(cmp.out.find("chi_square=" + format_real(chi_square(pred, meas))) != std::string::npos);
        CHECK(fidelity(rec, ref) == *c.diagnostics.fidelity);
        CHECK(read_text(dir / "cmp.csv").find("n,reconstructed,reference\n") != std::string::npos);
    }

    SUBCASE("plot tables") {
        const auto tables = cli::emit_plot_data(c);
        REQUIRE(tables.off_probability.size() == 30);
        REQUIRE(tables.distribution.size() == 81);
        const auto params = PdcModelParams::from_totals(c.fit->total_thermal, c.fit->alpha_sq, c.fit->modes);
        for (const auto& row : tables.off_probability) {
            REQUIRE(row.model.has_value());
            CHECK(std::abs(*row.model - pdc_off_probability(params, row.eta)) <= 1e-12);
        }
        for (const auto& row : tables.distribution) CHECK(row.model.has_value());

        auto rep = run_cli({"report", "--input", dir / "c.json", "--output", dir / "plot"});
        REQUIRE(rep.code == 0);
        CHECK(read_text(dir / "plot_offprob.csv") == cli::format_off_probability_table(tables));
        CHECK(read_text(dir / "plot_distribution.csv") == cli::format_distribution_table(tables));
    }
}

TEST_CASE("vacuum report plots flat curves") {
    TempDir dir;
    REQUIRE(run_cli({"simulate", "--model", "fock:0", "--output", dir / "v.csv"}).code == 0);
    // The normalized likelihood is flat near vacuum, so the free run creeps
    // toward it; a small energy penalty closes the gap.
    for (const auto& [beta, tol] : {std::pair{"0", 5e-3}, std::pair{"1", 1e-6}}) {
        REQUIRE(run_cli({"reconstruct", "--input", dir / "v.csv", "--modes", "700000", "--beta", beta, "--quiet",
                         "--output", dir / "v.json"})
                    .code == 0);
        const auto tables = cli::emit_plot_data(read_report(dir / "v.json"));
        for (const auto& row : tables.off_probability) {
            CHECK(row.measured == 1.0);
            CHECK(std::abs(row.reconstructed - 1.0) <= tol);
            REQUIRE(row.model.has_value());
            CHECK(*row.model == 1.0);
        }
    }
}

TEST_CASE("identical invocations give identical files") {
    TempDir dir;
    for (const char* tag : {"a", "b"}) {
        const std::string t(tag);
        REQUIRE(run_cli({"simulate", "--model", "regime:7.23,0.507,700000", "--seed", "3", "--output",
                         dir / ("d" + t + ".csv")})
                    .code == 0);
        REQUIRE(run_cli({"reconstruct", "--input", dir / ("d" + t + ".csv"), "--nmax", "50",
                         "--target-energy-from-fit", "--modes", "700000", "--quiet", "--output",
                         dir / ("r" + t + ".json")})
                    .code == 0);
    }
    CHECK(read_text(dir / "da.csv") == read_text(dir / "db.csv"));
    CHECK(read_text(dir / "ra.json") == read_text(dir / "rb.json"));
}

TEST_CASE("exit codes") {
    TempDir dir;
    write_text_atomic(dir / "empty.csv", "eta,windows,off_count\n");
    auto r = run_cli({"fit-energy", "--input", dir / "empty.csv", "--modes", "700000"});
    CHECK(r.code == 1);
    CHECK(r.err.find("underdetermined") != std::string::npos);

    REQUIRE(run_cli({"simulate", "--model", "thermal:1,1", "--output", dir / "t.csv"}).code == 0);

    r = run_cli({"reconstruct", "--input", dir / "t.csv", "--beta", "1", "--target-energy", "2", "--output",
                 dir / "x.json"});
    CHECK(r.code == 2);
    CHECK(r.err.find("--beta") != std::string::npos);

    r = run_cli({"reconstruct", "--input", dir / "t.csv", "--init", "model", "--output", dir / "x.json"});
    CHECK(r.code == 2);
    CHECK(r.err.find("--modes") != std::string::npos);

    r = run_cli({"reconstruct", "--input", dir / "t.csv", "--target-energy-from-fit", "--output", dir / "x.json"});
    CHECK(r.code == 2);

    r = run_cli({"reconstruct", "--input", dir / "missing.csv", "--output", dir / "x.json"});
    CHECK(r.code == 2);
    CHECK(r.err.find("--input") != std::string::npos);

    r = run_cli({"reconstruct", "--input", dir / "t.csv", "--output", dir / "no/such/dir/x.json"});
    CHECK(r.code == 2);
    CHECK(r.err.find("--output") != std::string::npos);

    r = run_cli({"reconstruct", "--input", dir / "t.csv", "--max-iter", "2", "--strict", "--quiet", "--output",
                 dir / "x.json"});
    CHECK(r.code == 1);
    CHECK_FALSE(fs::exists(dir / "x.json"));

    r = run_cli({"simulate", "--model", "bogus:1", "--output", dir / "q.csv"});
    CHECK(r.code == 2);
    r = run_cli({"simulate", "--output", dir / "q.csv"});
    CHECK(r.code == 2);
    r = run_cli({"simulate", "--model", "fock:1", "--grid", "30", "--output", dir / "q.csv"});
    CHECK(r.code == 2);
    CHECK(r.err.find("--grid") != std::string::npos);
    r = run_cli({});
    CHECK(r.code == 2);
    r = run_cli({"--help"});
    CHECK(r.code == 0);

    write_text_atomic(dir / "bad.csv", "eta,windows,off_count\n0.5,1000,1001\n");
    r = run_cli({"fit-energy", "--input", dir / "bad.csv", "--modes", "7"});
    CHECK(r.code == 1);
    CHECK(r.err.find(":2:") != std::string::npos);
}

TEST_CASE("background flags") {
    TempDir dir;
    // Background-only acquisition on the default grid.
    REQUIRE(run_cli({"simulate", "--model", "fock:0", "--seed", "2", "--output", dir / "bg0.csv"}).code == 0);
    auto bg = read_dataset(dir / "bg0.csv");
    std::vector<OnOffRecord> recs(bg.records().begin(), bg.records().end());
    for (auto& rec : recs) rec.off_count = rec.windows * 95 / 100;
    write_dataset(OnOffDataset(recs), dir / "bg.csv");

    REQUIRE(run_cli({"simulate", "--model", "regime:7.23,0.507,700000", "--background", dir / "bg.csv", "--seed",
                     "5", "--output", dir / "d.csv"})
                .code == 0);
    auto fit = run_cli({"fit-energy", "--input", dir / "d.csv", "--modes", "700000", "--background", dir / "bg.csv",
                        "--output", dir / "fit.json"});
    REQUIRE(fit.code == 0);
    const auto f = parse_fit(read_text(dir / "fit.json"));
    CHECK(std::abs(f.n_ave - 7.23) / 7.23 < 0.02);

    auto rec = run_cli({"reconstruct", "--input", dir / "d.csv", "--background", dir / "bg.csv", "--quiet",
                        "--output", dir / "r.json"});
    REQUIRE(rec.code == 0);
    CHECK(read_report(dir / "r.json").config.background == std::optional<std::string>(dir / "bg.csv"));
}
