#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hdiv/cli.hpp"
#include "hdiv/demand.hpp"
#include "hdiv/error.hpp"
#include "hdiv/io.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace hdiv;
namespace fs = std::filesystem;

namespace {

const std::string kData = HDIV_TEST_DATA_DIR;

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun cli_run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch_dir() {
    auto dir = fs::temp_directory_path() / "hdiv_test_io";
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("csv: quoting, scientific notation, CRLF and error locations") {
    std::istringstream in("a,b,\"c,d\"\r\n1,2.5e-3,\"x\"\"y\"\r\n-3,+4,z\r\n\r\n");
    const auto t = io::parse_csv(in, "mem");
    CHECK(t.header == std::vector<std::string>{"a", "b", "c,d"});
    REQUIRE(t.row_count() == 2);
    CHECK(t.number(0, 1) == 2.5e-3);
    CHECK(t.number(1, 1) == 4.0);
    CHECK(t.rows[0][2] == "x\"y");
    CHECK_THROWS_WITH_AS(t.number(1, 2), doctest::Contains("row 2, column 'c,d'"), InputError);

    std::istringstream ragged("a,b\n1\n");
    CHECK_THROWS_AS(io::parse_csv(ragged), InputError);
    std::istringstream empty("");
    CHECK_THROWS_AS(io::parse_csv(empty), InputError);
}

TEST_CASE("number formatting") {
    CHECK(io::format_short(-0.185) == "-.185");
    CHECK(io::format_short(0.0214) == ".021");
    CHECK(io::format_short(1.5) == "1.500");
    CHECK(io::format_short(-0.0001) == ".000");
    for (double v : {0.1, -1.0 / 3.0, 1e-300, 123456.789, 6.02214076e23}) {
        CHECK(std::stod(io::format_full(v)) == v);
    }
}

TEST_CASE("schema parsing") {
    const auto s = io::CsvSchemaMap::parse("y=outcome, d:endogenous\n# comment\nhp=characteristic:hpwt,x=control");
    REQUIRE(s.entries.size() == 4);
    CHECK(s.entries[1].role == io::Role::Endogenous);
    CHECK(s.entries[2].role == io::Role::Characteristic);
    CHECK(s.entries[2].characteristic == "hpwt");
    CHECK(io::CsvSchemaMap::parse(s.serialize()).entries.size() == 4);
    CHECK_THROWS_AS(io::CsvSchemaMap::parse("y=target"), InputError);
    CHECK_THROWS_AS(io::CsvSchemaMap::parse("y=outcome,y=control"), InputError);
    CHECK_THROWS_AS(io::CsvSchemaMap::parse("y=outcome,w=outcome").single(io::Role::Outcome), InputError);
}

TEST_CASE("simulation config round trip and errors") {
    const auto c = io::parse_simulation_config("n = 50\np_x=12 # comment\nbeta_scale=-0.25\ndelta_scale=auto\n");
    CHECK(c.n == 50);
    CHECK(c.p_x == 12);
    CHECK(c.beta_scale == -0.25);
    CHECK_FALSE(c.delta_scale.has_value());
    std::string text;
    for (const auto& [k, v] : io::config_entries(c)) text += k + "=" + v + "\n";
    const auto again = io::parse_simulation_config(text);
    CHECK(io::config_entries(again) == io::config_entries(c));
    CHECK_THROWS_AS(io::parse_simulation_config("colour=red"), ConfigError);
    CHECK_THROWS_AS(io::parse_simulation_config("n=abc"), ConfigError);
    CHECK_THROWS_AS(io::parse_simulation_config("error_correlation=1.5"), ConfigError);
}

TEST_CASE("fit on the bundled fixture matches the just-identified IV oracle") {
    const std::string csv = kData + "/iv_fixture.csv";
    const auto run = cli_run({"fit", csv, "--schema", "y=outcome,d=endogenous,x=control,z=instrument", "--methods",
                              "double_selection,tsls_no_selection,ols", "--format", "json"});
    REQUIRE(run.code == 0);
    const auto j = nlohmann::json::parse(run.out);
    CHECK(j["schema_version"] == 1);

    const auto t = io::read_csv(csv);
    Eigen::MatrixXd w(t.row_count(), 2);
    w.col(0).setOnes();
    w.col(1) = t.numeric_column(2);
    const double ref = oracle::iv_slope(t.numeric_column(0), t.numeric_column(1), t.numeric_column(3), w);
    const auto& methods = j["methods"];
    CHECK(std::abs(methods[0]["alpha_hat"].get<double>() - ref) < 1e-10);
    CHECK(std::abs(methods[1]["alpha_hat"].get<double>() - ref) < 1e-10);
    CHECK(methods[0]["selection"]["first_stage_instruments"] == 1);

    // The table carries the same numbers at three decimals.
    const auto table = cli_run({"fit", csv, "--schema", "y=outcome,d=endogenous,x=control,z=instrument",
                                "--methods", "double_selection"});
    CHECK(table.out.find(io::format_short(methods[0]["alpha_hat"].get<double>())) != std::string::npos);
    CHECK(table.out.find(io::format_short(methods[0]["std_error"].get<double>())) != std::string::npos);

    const auto csv_out = cli_run({"fit", csv, "--schema", "y=outcome,d=endogenous,x=control,z=instrument",
                                  "--methods", "double_selection", "--format", "csv"});
    CHECK(csv_out.out.find(io::format_full(methods[0]["alpha_hat"].get<double>())) != std::string::npos);
}

TEST_CASE("fit input errors map to exit code 2, weak identification to 3") {
    const auto dir = scratch_dir();
    const std::string csv = kData + "/iv_fixture.csv";
    CHECK(cli_run({"fit", csv, "--schema", "y=outcome,missing=endogenous"}).code == 2);
    CHECK(cli_run({"fit", csv, "--schema", "y=outcome,d=endogenous", "--methods", "magic"}).code == 2);
    CHECK(cli_run({"fit", (dir / "nope.csv").string(), "--schema", "y=outcome,d=endogenous"}).code == 2);

    write_file(dir / "bad.csv", "y,d,z\n1,2,3\n4,x,6\n7,8,9\n");
    const auto bad = cli_run({"fit", (dir / "bad.csv").string(), "--schema", "y=outcome,d=endogenous,z=instrument"});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("row 2, column 'd'") != std::string::npos);

    write_file(dir / "short.csv", "y,d,z\n1,2,3\n4,5,6\n");
    CHECK(cli_run({"fit", (dir / "short.csv").string(), "--schema", "y=outcome,d=endogenous,z=instrument"}).code == 2);

    std::string noise = "y,d,z\n";
    for (int i = 0; i < 60; ++i) {
        noise += std::to_string((i * 37 % 11) - 5) + "," + std::to_string((i * 13 % 7) - 3) + "," +
                 std::to_string((i * 29 % 5) - 2) + "\n";
    }
    write_file(dir / "noise.csv", noise);
    CHECK(cli_run({"fit", (dir / "noise.csv").string(), "--schema", "y=outcome,d=endogenous,z=instrument"}).code == 3);
}

TEST_CASE("expand: counts, round trip and direct fit on the result") {
    const auto dir = scratch_dir();
    const std::string panel_csv = kData + "/panel_fixture.csv";
    const auto out = (dir / "expanded.csv").string();
    const auto run = cli_run({"expand", panel_csv, "--out", out});
    REQUIRE(run.code == 0);
    CHECK(run.out.find("controls: 24, instruments: 48") != std::string::npos);

    const auto base = cli_run({"expand", panel_csv, "--recipe", "base", "--out", (dir / "base.csv").string()});
    CHECK(base.out.find("controls: 5, instruments: 10") != std::string::npos);

    const auto panel = io::panel_from_csv(io::read_csv(panel_csv), io::CsvSchemaMap::blp_default());
    const auto x = demand::expand_characteristics(panel, demand::ExpansionRecipe::blp_expanded());
    const auto z = demand::build_sum_instruments(panel, x);
    const auto back = io::read_csv(out);
    for (Index k = 0; k < x.values.cols(); ++k) {
        CHECK(back.numeric_column(back.column(x.names[static_cast<std::size_t>(k)])) == x.values.col(k));
    }
    for (Index k = 0; k < z.values.cols(); ++k) {
        CHECK(back.numeric_column(back.column(z.names[static_cast<std::size_t>(k)])) == z.values.col(k));
    }
    CHECK(back.numeric_column(back.column("logit_share")) == demand::build_logit_outcome(panel));

    const auto fit = cli_run({"fit", (dir / "base.csv").string(), "--schema", (dir / "base.csv.schema").string(),
                              "--methods", "tsls_no_selection,ols", "--format", "json"});
    REQUIRE(fit.code == 0);
    const auto j = nlohmann::json::parse(fit.out);
    CHECK(j["p_x"] == 5);  // the const column serves as the intercept
    CHECK(j["methods"][0].contains("inelastic_count"));
    CHECK(j["methods"][0]["alpha_hat"].get<double>() < 0.0);
}

TEST_CASE("simulate is byte-deterministic and rejects bad configs before running") {
    const std::vector<std::string> args = {"simulate", "--set", "n=60", "--set", "p_x=20", "--set", "p_z=10",
                                           "--replications", "3", "--seed", "17", "--format", "json"};
    const auto a = cli_run(args);
    const auto b = cli_run(args);
    REQUIRE_MESSAGE(a.code == 0, a.err);
    CHECK(a.out == b.out);
    auto threaded = args;
    threaded.insert(threaded.end(), {"--threads", "2"});
    CHECK(cli_run(threaded).out == a.out);
    const auto j = nlohmann::json::parse(a.out);
    CHECK(j["estimators"].size() == 4);
    CHECK(j["config"]["seed"] == "17");

    const auto dir = scratch_dir();
    write_file(dir / "bad.cfg", "n = 50\nwhatever = 1\n");
    CHECK(cli_run({"simulate", "--config", (dir / "bad.cfg").string()}).code == 2);
    CHECK(cli_run({"simulate", "--methods", "lasso"}).code == 2);

    const auto table = cli_run({"simulate", "--set", "n=60", "--set", "p_x=20", "--set", "p_z=10",
                                "--replications", "1", "--seed", "17"});
    CHECK(table.out.find("Double-Selection") != std::string::npos);
    CHECK(table.out.find("Naive 1") != std::string::npos);
}

TEST_CASE("unknown subcommand and help") {
    CHECK(cli_run({"frobnicate"}).code == 2);
    CHECK(cli_run({"--help"}).code == 0);
}
