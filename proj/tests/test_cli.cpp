#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "resolveq/dataio.hpp"
#include "resolveq/fixtures.hpp"
#include "resolveq/spectral_fit.hpp"

using namespace resolveq;
using nlohmann::json;
using Catch::Approx;
namespace fs = std::filesystem;

namespace
{

struct CliResult
{
    int code = -1;
    std::string out;
    std::string err;
};

fs::path fresh_dir()
{
    static int counter = 0;
    const auto dir =
        fs::temp_directory_path() / ("resolveq_cli_" + std::to_string(::getpid()) + "_" +
                                     std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CliResult run_cli(const std::string &args, const fs::path &dir)
{
    const fs::path out_file = dir / "stdout.txt";
    const fs::path err_file = dir / "stderr.txt";
    const std::string cmd = std::string("'") + RESOLVEQ_CLI_PATH + "' " + args + " > '" +
                            out_file.string() + "' 2> '" + err_file.string() + "'";
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.code = WEXITSTATUS(raw);
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

} // namespace

TEST_CASE("cli lists bundled fixtures")
{
    const auto dir = fresh_dir();
    const auto r = run_cli("fixtures", dir);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("F4") != std::string::npos);
    CHECK(r.out.find("E4(sp)") != std::string::npos);
    CHECK(r.out.find("P_FWGMR") != std::string::npos);

    const auto dump = run_cli("fixtures F4", dir);
    REQUIRE(dump.code == 0);
    const json j = json::parse(dump.out);
    CHECK(j.at("device_id") == "F4");
    CHECK(j.at("modes").size() == 3);
}

TEST_CASE("cli extract reproduces device F4 and writes a manifest")
{
    const auto dir = fresh_dir();
    const auto r = run_cli("extract fixtures://F4 --seed 42 --out '" + dir.string() + "'", dir);
    INFO(r.err);
    REQUIRE(r.code == 0);

    const json out = json::parse(slurp(dir / "F4.extraction.json"));
    CHECK(out.at("device_id") == "F4");
    const auto &rs = out.at("channels").at("r_s");
    CHECK(rs.at("status") == "resolved");
    CHECK(std::abs(rs.at("estimate_uohm").get<double>() - 6.48) < 0.43);
    const auto &td = out.at("channels").at("tan_delta");
    CHECK(std::abs(td.at("estimate").get<double>() - 0.11) < 0.01);

    const json manifest = json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest.at("command") == "extract");
    CHECK(manifest.at("manifest_hash") == out.at("manifest_hash"));
    CHECK(manifest.contains("timestamp"));
}

TEST_CASE("cli extract is byte-identical for identical manifests")
{
    const auto dir1 = fresh_dir();
    const auto dir2 = fresh_dir();
    const std::string args = "extract fixtures://E1 --seed 7 --mc-samples 500";
    REQUIRE(run_cli(args + " --out '" + dir1.string() + "'", dir1).code == 0);
    REQUIRE(run_cli(args + " --out '" + dir2.string() + "'", dir2).code == 0);
    CHECK(slurp(dir1 / "E1.extraction.json") == slurp(dir2 / "E1.extraction.json"));

    const auto dir3 = fresh_dir();
    REQUIRE(run_cli("extract fixtures://E1 --seed 8 --mc-samples 500 --out '" + dir3.string() + "'",
                    dir3)
                .code == 0);
    CHECK(slurp(dir1 / "E1.extraction.json") != slurp(dir3 / "E1.extraction.json"));
}

TEST_CASE("cli eps-y overrides feed the extraction")
{
    const auto dir = fresh_dir();
    const auto r = run_cli("extract fixtures://F4 --eps-y 0.10 --mc-samples 500 --out '" +
                               dir.string() + "'",
                           dir);
    REQUIRE(r.code == 0);
    const json out = json::parse(slurp(dir / "F4.extraction.json"));
    // doubled eps doubles sigma relative to the 5% default
    CHECK(out.at("channels").at("r_s").at("sigma_uohm").get<double>() ==
          Approx(2.0 * 0.4216917).epsilon(1e-3));
}

TEST_CASE("cli error taxonomy maps to exit codes")
{
    const auto dir = fresh_dir();

    SECTION("validation error: exit 1")
    {
        const fs::path bad = dir / "bad.json";
        std::ofstream(bad) << R"({"device_id":"X","modes":[]})";
        const auto r = run_cli("extract '" + bad.string() + "'", dir);
        CHECK(r.code == 1);
        const json err = json::parse(r.err);
        CHECK(err.at("error").at("type") == "validation");
    }
    SECTION("solver error: exit 2")
    {
        DeviceRecord rec;
        rec.device_id = "degenerate";
        for (int i = 0; i < 3; ++i)
        {
            DeviceMode mode;
            mode.measurement.label = "m" + std::to_string(i);
            mode.measurement.frequency = 5e9;
            mode.measurement.q_int = 1e6;
            mode.participation = {0.1 * (i + 1), 1e-6 * (i + 1), 1e-4 * (i + 1)};
            rec.modes.push_back(mode);
        }
        const fs::path path = dir / "degenerate.json";
        std::ofstream(path) << device_to_json(rec).dump();
        const auto r = run_cli("extract '" + path.string() + "'", dir);
        CHECK(r.code == 2);
        CHECK(json::parse(r.err).at("error").at("type") == "solver");
    }
    SECTION("io error: exit 3")
    {
        const auto r = run_cli("extract '" + (dir / "missing.json").string() + "'", dir);
        CHECK(r.code == 3);
        CHECK(json::parse(r.err).at("error").at("type") == "io");
    }
    SECTION("usage error: exit 1")
    {
        const auto r = run_cli("frobnicate", dir);
        CHECK(r.code == 1);
    }
}

TEST_CASE("cli predict renders unbounded quality factors as inf")
{
    const auto dir = fresh_dir();
    const fs::path losses = dir / "zero.json";
    std::ofstream(losses) << R"({"r_s_uohm":0,"tan_delta":0,"r_seam_uohm_m":0})";
    const auto r = run_cli("predict fixtures://P_FWGMR '" + losses.string() + "' --out '" +
                               dir.string() + "'",
                           dir);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("inf") != std::string::npos);
    const json out = json::parse(slurp(dir / "P_FWGMR.predict.json"));
    for (const auto &row : out.at("predictions"))
        CHECK(row.at("q_int") == "inf");
}

TEST_CASE("cli budget emits fraction tables")
{
    const auto dir = fresh_dir();
    const fs::path losses = dir / "etched.json";
    std::ofstream(losses) << R"({"r_s_uohm":0.5,"tan_delta":0.033,"r_seam_uohm_m":26})";
    const auto r = run_cli("budget fixtures://P_FWGMR '" + losses.string() + "' --format csv --out '" +
                               dir.string() + "'",
                           dir);
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("mode,cond_fraction,ma_fraction,seam_fraction", 0) == 0);
    const json out = json::parse(slurp(dir / "P_FWGMR.budget.json"));
    for (const auto &row : out.at("budget"))
    {
        const double sum = row.at("cond_fraction").get<double>() +
                           row.at("ma_fraction").get<double>() +
                           row.at("seam_fraction").get<double>();
        CHECK(sum == Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("cli sensitivity writes grid and boundary with the published plateau")
{
    const auto dir = fresh_dir();
    const auto r = run_cli(
        "sensitivity fixtures://P_FWGMR --channel tan_delta --fixed r_seam=1e-4 --points 30 --out '" +
            dir.string() + "'",
        dir);
    INFO(r.err);
    REQUIRE(r.code == 0);

    const std::string boundary = slurp(dir / "P_FWGMR.tan_delta.boundary.csv");
    REQUIRE(boundary.rfind("# manifest_hash=", 0) == 0);
    std::istringstream lines(boundary);
    std::string line;
    std::getline(lines, line); // hash comment
    std::getline(lines, line); // header
    CHECK(line == "swept1,swept2");
    double min_crossing = 1e9;
    while (std::getline(lines, line))
    {
        const auto comma = line.find(',');
        REQUIRE(comma != std::string::npos);
        min_crossing = std::min(min_crossing, std::stod(line.substr(comma + 1)));
    }
    CHECK(min_crossing == Approx(1.5e-4).epsilon(0.20));

    const std::string grid = slurp(dir / "P_FWGMR.tan_delta.grid.csv");
    CHECK(grid.find("swept1,swept2,sigma_over_x") != std::string::npos);
}

TEST_CASE("cli fit-spectrum recovers synthetic parameters")
{
    const auto dir = fresh_dir();
    const double f0 = 6e9, q_int = 1e6, q_c = 2e6;
    const double ql = 1.0 / (1.0 / q_int + 1.0 / q_c);
    std::vector<double> grid;
    for (int i = 0; i < 201; ++i)
        grid.push_back(f0 - 5.0 * f0 / ql + 10.0 * f0 / ql * i / 200.0);
    const auto trace = synthesize_reflection(f0, q_int, q_c, 0.0, {0.9, 0.3, 10e-9}, 0.002, grid, 5);
    const fs::path trace_path = dir / "trace.csv";
    {
        std::ofstream out(trace_path);
        save_trace_csv(trace, out);
    }
    const auto r = run_cli("fit-spectrum '" + trace_path.string() + "' --out '" + dir.string() + "'",
                           dir);
    INFO(r.err);
    REQUIRE(r.code == 0);
    const json fit = json::parse(slurp(dir / "trace.fit.json"));
    CHECK(fit.at("q_int").get<double>() == Approx(q_int).epsilon(0.02));
    CHECK(fit.at("measurement").at("eps_y").get<double>() == Approx(0.05));
}

TEST_CASE("cli infer-gap on the bundled synthetic table")
{
    const auto dir = fresh_dir();
    const fs::path freqs = dir / "freqs.json";
    std::ofstream(freqs) << R"({"measured":[{"label":"DFM-1","freq_ghz":3.434},)"
                         << R"({"label":"DFM-2","freq_ghz":9.094}]})";
    const auto r = run_cli("infer-gap fixtures://gaptable '" + freqs.string() + "' --out '" +
                               dir.string() + "'",
                           dir);
    INFO(r.err);
    REQUIRE(r.code == 0);
    const json out = json::parse(slurp(dir / "freqs.gap.json"));
    CHECK(out.at("gap_um").get<double>() == Approx(100.0).epsilon(1e-4));
    CHECK(out.at("mismatch_flag") == false);
}

TEST_CASE("cli show-config prints defaults")
{
    const auto dir = fresh_dir();
    const auto r = run_cli("--show-config", dir);
    REQUIRE(r.code == 0);
    const json j = json::parse(r.out);
    CHECK(j.at("defaults").at("mc_samples") == 5000);
    CHECK(j.at("defaults").at("bound_rule") == "two_sigma_capped");
}

TEST_CASE("cli config file sits between defaults and flags")
{
    const auto dir = fresh_dir();
    const fs::path cfg = dir / "config.json";
    std::ofstream(cfg) << R"({"mc_samples": 700, "seed": 3})";

    const auto r1 = run_cli("--config '" + cfg.string() + "' --show-config", dir);
    REQUIRE(r1.code == 0);
    CHECK(json::parse(r1.out).at("mc_samples") == 700);
    CHECK(json::parse(r1.out).at("seed") == 3);

    const auto r2 = run_cli("--config '" + cfg.string() + "' --mc-samples 900 --show-config", dir);
    REQUIRE(r2.code == 0);
    CHECK(json::parse(r2.out).at("mc_samples") == 900); // flag wins
    CHECK(json::parse(r2.out).at("seed") == 3);         // file beats default
}
