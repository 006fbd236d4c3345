#include "cvqkd/cli.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace cvqkd;
using nlohmann::json;

namespace {

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::istringstream in(line);
    std::string cell;
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    return cells;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("security-curve emits the fixed CSV schema") {
    auto run = cli({"security-curve", "--loss-db-min", "0", "--loss-db-max", "40", "--points",
                    "41", "--v", "1e6"});
    REQUIRE(run.code == kExitOk);
    auto lines = split_lines(run.out);
    REQUIRE(lines.size() == 43); // schema comment + header + 41 rows
    CHECK(lines[0] == "# cvqkd.security_curve.v1");
    CHECK(lines[1] == "loss_db,g,eps_max_dr,eps_max_rr_coh,eps_max_rr_epr,eps_entanglement");

    auto row0 = split_csv(lines[2]);
    REQUIRE(row0.size() == 6);
    CHECK(std::stod(row0[0]) == doctest::Approx(0.0));
    CHECK(std::stod(row0[2]) == doctest::Approx(1.0));          // DR at 0 dB
    CHECK(std::stod(row0[3]) == doctest::Approx(0.618).epsilon(1e-3)); // coherent RR
    CHECK(std::stod(row0[5]) == doctest::Approx(2.0));          // entanglement line

    auto row3db = split_csv(lines[5]); // 3 dB with 1 dB steps
    CHECK(std::stod(row3db[2]) == doctest::Approx(0.0).epsilon(0.01)); // DR crosses zero
    for (std::size_t i = 2; i < lines.size(); ++i)
        CHECK(split_csv(lines[i])[5] == row0[5]); // entanglement column constant

    SUBCASE("byte-stable output") {
        auto again = cli({"security-curve", "--loss-db-min", "0", "--loss-db-max", "40",
                          "--points", "41", "--v", "1e6"});
        CHECK(again.out == run.out);
    }
    SUBCASE("loss range is validated") {
        CHECK(cli({"security-curve", "--loss-db-max", "80"}).code == kExitValidation);
    }
    SUBCASE("json format carries the same rows") {
        auto jrun = cli({"security-curve", "--points", "5", "--format", "json"});
        REQUIRE(jrun.code == kExitOk);
        auto j = json::parse(jrun.out);
        CHECK(j["schema"] == "cvqkd.security_curve.v1");
        CHECK(j["rows"].size() == 5);
        CHECK(j["rows"][0][5].get<double>() == doctest::Approx(2.0));
    }
}

TEST_CASE("keyrate reports the headline numbers") {
    auto run = cli({"keyrate", "--loss-db", "20", "--v", "10", "--eps", "0",
                    "--mode", "coherent"});
    REQUIRE(run.code == kExitOk);
    auto j = json::parse(run.out);
    CHECK(j["schema"] == "cvqkd.report.v1");
    CHECK(j["delta_i_rr"].get<double>() == doctest::Approx(6.5e-3).epsilon(0.016));
    CHECK(j["i_ba"].get<double>() == doctest::Approx(6.2e-2).epsilon(0.01));
    CHECK(j["rr_secure"].get<bool>());
    CHECK_FALSE(j["dr_secure"].get<bool>());
    CHECK(j["entangled"].get<bool>());
    CHECK(j["config"]["g"].get<double>() == doctest::Approx(0.01));

    SUBCASE("degenerate channel has zero rates") {
        auto quiet = cli({"keyrate", "--g", "1", "--eps", "0", "--v", "1"});
        REQUIRE(quiet.code == kExitOk);
        auto q = json::parse(quiet.out);
        CHECK(q["i_ba"].get<double>() == doctest::Approx(0.0));
        CHECK(q["i_be"].get<double>() == doctest::Approx(0.0));
        CHECK(q["delta_i_rr"].get<double>() == doctest::Approx(0.0));
    }
    SUBCASE("the efficiency bracket around beta*") {
        auto good = cli({"keyrate", "--loss-db", "20", "--v", "10", "--eps", "0", "--beta", "0.9"});
        auto bad = cli({"keyrate", "--loss-db", "20", "--v", "10", "--eps", "0", "--beta", "0.85"});
        CHECK(json::parse(good.out)["practical_rate"].get<double>() > 0.0);
        CHECK(json::parse(bad.out)["practical_rate"].get<double>() <= 0.0);
    }
    SUBCASE("flag validation") {
        CHECK(cli({"keyrate", "--g", "0.5", "--loss-db", "3", "--v", "10"}).code ==
              kExitValidation);
        CHECK(cli({"keyrate", "--g", "0.5", "--eps", "-1"}).code == kExitValidation);
        CHECK(cli({"keyrate", "--nope", "1"}).code == kExitValidation);
        CHECK(cli({"bogus-command"}).code == kExitValidation);
        CHECK(cli({"keyrate", "--g", "0.5", "--format", "yaml"}).code == kExitValidation);
        CHECK(cli({"simulate", "--g", "0.5", "--format", "csv"}).code == kExitValidation);
    }
    SUBCASE("csv format emits one flat row") {
        auto run = cli({"keyrate", "--loss-db", "20", "--v", "10", "--eps", "0",
                        "--format", "csv"});
        REQUIRE(run.code == kExitOk);
        auto lines = split_lines(run.out);
        REQUIRE(lines.size() == 3);
        auto cells = split_csv(lines[2]);
        REQUIRE(cells.size() == 15);
        CHECK(std::stod(cells[9]) == doctest::Approx(6.5e-3).epsilon(0.016)); // delta_i_rr
    }
}

TEST_CASE("simulate honors the shot-noise unit") {
    auto unit = cli({"simulate", "--g", "0.5", "--eps", "0", "--v", "10", "--n", "50000",
                     "--seed", "5", "--n0", "1"});
    auto scaled = cli({"simulate", "--g", "0.5", "--eps", "0", "--v", "10", "--n", "50000",
                       "--seed", "5", "--n0", "4"});
    REQUIRE(unit.code == kExitOk);
    REQUIRE(scaled.code == kExitOk);
    auto ju = json::parse(unit.out), js = json::parse(scaled.out);
    // variances scale with n0, dimensionless informations do not
    CHECK(js["v_ba"]["empirical"].get<double>() ==
          doctest::Approx(4.0 * ju["v_ba"]["empirical"].get<double>()).epsilon(1e-12));
    CHECK(js["i_ba"]["empirical"].get<double>() ==
          doctest::Approx(ju["i_ba"]["empirical"].get<double>()).epsilon(1e-12));
    CHECK(std::abs(ju["i_ba"]["z"].get<double>()) < 5.0);

    SUBCASE("cloner attack reports Eve estimates") {
        auto run = cli({"simulate", "--g", "0.5", "--eps", "0", "--v", "10", "--attack", "cloner",
                        "--n", "50000", "--seed", "6"});
        REQUIRE(run.code == kExitOk);
        auto j = json::parse(run.out);
        REQUIRE(j.contains("v_be"));
        CHECK(std::abs(j["v_be"]["z"].get<double>()) < 5.0);
    }
}

TEST_CASE("verify gates on the z-scores") {
    std::vector<std::string> base = {"verify", "--g-list", "0.9,0.5", "--eps-list", "0.1",
                                     "--v-list", "8",       "--n",    "30000",      "--seed", "9"};
    auto run = cli(base);
    REQUIRE(run.code == kExitOk);
    auto lines = split_lines(run.out);
    CHECK(lines[0] == "# cvqkd.verify.v1");
    CHECK(lines.size() == 2 + 2 * 4); // two grid points, four quantities each

    SUBCASE("identical bytes for a fixed seed") {
        CHECK(cli(base).out == run.out);
    }
    SUBCASE("a corrupted analytic target trips the gate") {
        auto biased = base;
        biased.push_back("--bias");
        biased.push_back("0.25");
        CHECK(cli(biased).code == kExitStatisticalFailure);
    }
}

TEST_CASE("distill writes matching key files") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "cvqkd_cli_test";
    fs::create_directories(dir);
    const std::string prefix = (dir / "session").string();

    auto run = cli({"distill", "--g", "0.9", "--eps", "0", "--v", "10", "--n", "20000",
                    "--seed", "11", "--out", prefix});
    REQUIRE(run.code == kExitOk);
    auto j = json::parse(run.out);
    CHECK(j["schema"] == "cvqkd.session.v1");
    CHECK(j["status"] == "success");
    CHECK(j["keys_match"].get<bool>());
    CHECK(j["key_length"].get<std::size_t>() > 0);

    std::ifstream fa(prefix + ".alice.key"), fb(prefix + ".bob.key");
    REQUIRE(fa.good());
    REQUIRE(fb.good());
    std::string ka, kb;
    fa >> ka;
    fb >> kb;
    CHECK(ka == kb);
    CHECK(ka.size() == (j["key_length"].get<std::size_t>() + 3) / 4);

    SUBCASE("insecure DR session aborts with exit code 3") {
        auto abort = cli({"distill", "--g", "0.25", "--eps", "0", "--v", "10", "--direction",
                          "dr", "--n", "10000", "--seed", "12", "--out", prefix});
        CHECK(abort.code == kExitSecurityAbort);
        CHECK(abort.err.find("abort") != std::string::npos);
    }
    SUBCASE("message log serializes when requested") {
        const std::string log_path = (dir / "messages.jsonl").string();
        auto logged = cli({"distill", "--g", "0.9", "--eps", "0", "--v", "10", "--n", "20000",
                           "--seed", "11", "--out", prefix, "--log-messages", log_path});
        REQUIRE(logged.code == kExitOk);
        std::ifstream fl(log_path);
        REQUIRE(fl.good());
        std::string first;
        std::getline(fl, first);
        CHECK(json::parse(first).contains("direction"));
    }
    SUBCASE("single-quadrature protocol distills through sifting") {
        auto epr = cli({"distill", "--g", "0.8", "--eps", "0", "--v", "10", "--mode", "epr",
                        "--n", "30000", "--seed", "13", "--out", prefix});
        REQUIRE(epr.code == kExitOk);
        auto je = json::parse(epr.out);
        CHECK(je["status"] == "success");
        // random basis matching keeps about half of the symbols
        const auto used = je["symbols_used"].get<double>();
        CHECK(used > 0.4 * 30000 * 0.9);
        CHECK(used < 0.6 * 30000);
        CHECK(je["config"]["s"].get<double>() == doctest::Approx(0.1));
    }
    fs::remove_all(dir);
}

} // TEST_SUITE
