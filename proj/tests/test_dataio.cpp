#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "resolveq/dataio.hpp"
#include "resolveq/fixtures.hpp"

using namespace resolveq;
using Catch::Approx;

namespace
{
std::filesystem::path temp_file(const std::string &name)
{
    return std::filesystem::temp_directory_path() / name;
}
} // namespace

TEST_CASE("bundled fixtures cover both published tables")
{
    const auto all = fixtures::builtin_fixtures();
    CHECK(all.size() == 16);
    int fwgmr = 0, ellip = 0;
    for (const auto &rec : all)
    {
        CHECK_NOTHROW(rec.validate());
        CHECK(rec.modes.size() == 3);
        CHECK(rec.participation_matrix().numerical_rank() == 3);
        (rec.device_id[0] == 'F' ? fwgmr : ellip) += 1;
    }
    CHECK(fwgmr == 9);
    CHECK(ellip == 7);
}

TEST_CASE("fixture values match the published tables digit for digit")
{
    const auto f4 = fixtures::builtin_device("F4");
    REQUIRE(f4.modes.size() == 3);
    CHECK(f4.modes[0].participation.inv_g == 0.28);
    CHECK(f4.modes[0].participation.p_ma == 3.8e-6);
    CHECK(f4.modes[0].participation.y_seam == 2.7e-4);
    CHECK(f4.modes[0].measurement.frequency == 5.858e9);
    CHECK(f4.gap.has_value());
    CHECK(*f4.gap == Approx(100e-6));

    const auto e3 = fixtures::builtin_device("E3(eb)");
    CHECK(e3.modes[2].measurement.label == "TE011");
    CHECK(e3.modes[2].measurement.q_int == 8.63e8);

    const auto e4sp = fixtures::builtin_device("E4(sp)");
    CHECK(e4sp.modes[2].measurement.q_int == 4.24e8);

    const auto f3 = fixtures::builtin_device("F3");
    CHECK(f3.modes[2].measurement.label == "CAV-2");
    CHECK(f3.modes[2].measurement.q_int_rel_sigma == 0.20);
    CHECK(f3.modes[0].measurement.q_int_rel_sigma == 0.05);

    CHECK_THROWS_AS(fixtures::builtin_device("F9"), ValidationError);
}

TEST_CASE("bundled participation matrices and catalogs")
{
    const auto fwgmr = fixtures::builtin_participation_matrix("P_FWGMR");
    CHECK(fwgmr.rows() == 3);
    CHECK(fwgmr.named_row(0).inv_g == 0.28);
    const auto ellip = fixtures::builtin_participation_matrix("P_ellip");
    CHECK(ellip.named_row(2).p_ma == 6.7e-10);
    CHECK_THROWS_AS(fixtures::builtin_participation_matrix("nope"), ValidationError);

    const auto cat_f = fixtures::builtin_mode_catalog("FWGMR");
    CHECK(cat_f.size() == 10);
    bool found_cav2 = false;
    for (const auto &m : cat_f)
    {
        if (m.label == "CAV-2")
        {
            found_cav2 = true;
            REQUIRE(m.p_diel.has_value());
            CHECK(*m.p_diel == 3.1e-1);
        }
    }
    CHECK(found_cav2);
    const auto cat_e = fixtures::builtin_mode_catalog("ellipsoidal");
    CHECK(cat_e.size() == 8);
    CHECK_FALSE(cat_e.front().p_diel.has_value());
}

TEST_CASE("device records round-trip through JSON bit-exactly")
{
    for (const auto &rec : fixtures::builtin_fixtures())
    {
        const auto loaded = device_from_json(device_to_json(rec));
        CHECK(loaded.device_id == rec.device_id);
        CHECK(loaded.material == rec.material);
        CHECK(loaded.treatment == rec.treatment);
        REQUIRE(loaded.gap.has_value() == rec.gap.has_value());
        if (rec.gap)
            CHECK(*loaded.gap == *rec.gap); // bitwise
        REQUIRE(loaded.modes.size() == rec.modes.size());
        for (std::size_t i = 0; i < rec.modes.size(); ++i)
        {
            CHECK(loaded.modes[i].measurement.label == rec.modes[i].measurement.label);
            CHECK(loaded.modes[i].measurement.frequency == rec.modes[i].measurement.frequency);
            CHECK(loaded.modes[i].measurement.q_int == rec.modes[i].measurement.q_int);
            CHECK(loaded.modes[i].measurement.q_int_rel_sigma ==
                  rec.modes[i].measurement.q_int_rel_sigma);
            REQUIRE(loaded.modes[i].measurement.q_c.has_value());
            CHECK(*loaded.modes[i].measurement.q_c == *rec.modes[i].measurement.q_c);
            CHECK(loaded.modes[i].participation.inv_g == rec.modes[i].participation.inv_g);
            CHECK(loaded.modes[i].participation.p_ma == rec.modes[i].participation.p_ma);
            CHECK(loaded.modes[i].participation.y_seam == rec.modes[i].participation.y_seam);
        }
    }
}

TEST_CASE("device files save and load")
{
    const auto path = temp_file("resolveq_test_device.json");
    const auto f4 = fixtures::builtin_device("F4");
    save_device(f4, path.string());
    const auto loaded = load_device(path.string());
    CHECK(loaded.device_id == "F4");
    CHECK(loaded.modes[0].participation.inv_g == 0.28);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_device(path.string()), IoError);
}

TEST_CASE("device schema violations carry their location")
{
    json j = device_to_json(fixtures::builtin_device("F4"));

    SECTION("empty mode list")
    {
        j["modes"] = json::array();
        CHECK_THROWS_AS(device_from_json(j), ValidationError);
    }
    SECTION("missing unit-tagged field")
    {
        j["modes"][1].erase("freq_ghz");
        try
        {
            device_from_json(j);
            FAIL("expected ValidationError");
        }
        catch (const ValidationError &e)
        {
            const std::string msg = e.what();
            CHECK(msg.find("modes[1]") != std::string::npos);
            CHECK(msg.find("freq_ghz") != std::string::npos);
        }
    }
    SECTION("untagged field is rejected")
    {
        j["modes"][0]["freq"] = 5.858;
        CHECK_THROWS_AS(device_from_json(j), ValidationError);
    }
    SECTION("malformed json file")
    {
        const auto path = temp_file("resolveq_bad.json");
        std::ofstream(path) << "{ not json";
        CHECK_THROWS_AS(load_device(path.string()), IoError);
        std::filesystem::remove(path);
    }
}

TEST_CASE("losses and participation matrices parse from JSON")
{
    const auto x = losses_from_json(json{{"r_s_uohm", 0.5}, {"tan_delta", 0.033}, {"r_seam_uohm_m", 26.0}});
    CHECK(x.r_s == Approx(0.5e-6));
    CHECK(x.tan_delta == Approx(0.033));
    CHECK(x.r_seam == Approx(26e-6));
    CHECK_THROWS_AS(losses_from_json(json{{"r_s", 0.5}}), ValidationError);

    const auto p = participation_from_json(participation_to_json(
        fixtures::builtin_participation_matrix("P_FWGMR"), "P_FWGMR"));
    CHECK(p.rows() == 3);
    CHECK(p.named_row(1).inv_g == 8.9e-3);
}

TEST_CASE("gap inference is exact at table nodes")
{
    const auto table = fixtures::builtin_gap_table();
    // g = 100 um is a node of the synthetic table
    const double f1 = 3.434e9 * std::sqrt(1.0);
    const double f2 = 9.094e9 * std::sqrt(1.0);
    const auto est = infer_gap(table, {{"DFM-1", f1}, {"DFM-2", f2}});
    CHECK(est.gap == Approx(100e-6).epsilon(1e-6));
    CHECK(est.rms_mismatch < 1e-7);
    CHECK_FALSE(est.mismatch_flag);
    REQUIRE(est.per_mode_mismatch.size() == 2);
    for (const auto &[label, mismatch] : est.per_mode_mismatch)
        CHECK(std::abs(mismatch) < 1e-7);
}

TEST_CASE("gap inference recovers interior points of a closed-form table")
{
    // f(g) = c / sqrt(g), sampled away from the queried gap
    GapFrequencyTable table;
    GapFrequencyTable::ModeCurve curve;
    curve.label = "DFM-like";
    const double c0 = 3.4e9 * std::sqrt(100e-6);
    for (int i = 0; i < 15; ++i)
    {
        const double g = 50e-6 + (200e-6 - 50e-6) * i / 14.0;
        curve.gap.push_back(g);
        curve.frequency.push_back(c0 / std::sqrt(g));
    }
    table.modes.push_back(curve);

    const double g_true = 100e-6;
    const double f_meas = c0 / std::sqrt(g_true);
    const auto est = infer_gap(table, {{"DFM-like", f_meas}});
    CHECK(std::abs(est.gap - g_true) / g_true < 0.005);
}

TEST_CASE("gap inference error paths")
{
    const auto table = fixtures::builtin_gap_table();

    SECTION("gap-insensitive modes only")
    {
        CHECK_THROWS_AS(infer_gap(table, {{"DWGM-1", 5.816e9}}), ValidationError);
    }
    SECTION("unknown mode label")
    {
        CHECK_THROWS_AS(infer_gap(table, {{"XYZ", 1e9}}), ValidationError);
    }
    SECTION("frequency outside every curve")
    {
        CHECK_THROWS_AS(infer_gap(table, {{"DFM-1", 40e9}}), ValidationError);
    }
    SECTION("empty request")
    {
        CHECK_THROWS_AS(infer_gap(table, {}), ValidationError);
    }
}

TEST_CASE("the mismatch flag trips at five percent rms")
{
    const auto table = fixtures::builtin_gap_table();
    const double f_dfm = 3.434e9; // at 100 um
    const double f_flat = 5.816e9;

    // error on the gap-insensitive mode cannot be absorbed by the gap; the
    // mismatch is normalized by the measured frequency, so injecting
    // f_meas = f/(1 - r sqrt(2)) puts the rms mismatch exactly at r
    SECTION("below threshold")
    {
        const double f_meas = f_flat / (1.0 - 0.049 * std::sqrt(2.0));
        const auto est = infer_gap(table, {{"DFM-1", f_dfm}, {"DWGM-1", f_meas}});
        CHECK(est.rms_mismatch < 0.05);
        CHECK_FALSE(est.mismatch_flag);
    }
    SECTION("above threshold")
    {
        const double f_meas = f_flat / (1.0 - 0.051 * std::sqrt(2.0));
        const auto est = infer_gap(table, {{"DFM-1", f_dfm}, {"DWGM-1", f_meas}});
        CHECK(est.rms_mismatch > 0.05);
        CHECK(est.mismatch_flag);
    }
}

TEST_CASE("gap estimates move continuously under small perturbations")
{
    const auto table = fixtures::builtin_gap_table();
    const double f1 = 3.434e9, f2 = 9.094e9;
    const auto base = infer_gap(table, {{"DFM-1", f1}, {"DFM-2", f2}});
    const double spacing = 20e-6; // synthetic table node spacing
    for (double rel : {0.002, 0.005, 0.009})
    {
        const auto moved =
            infer_gap(table, {{"DFM-1", f1 * (1.0 + rel)}, {"DFM-2", f2 * (1.0 + rel)}});
        CHECK(std::abs(moved.gap - base.gap) < spacing);
    }
}

TEST_CASE("gap table JSON round trip")
{
    const auto table = fixtures::builtin_gap_table();
    const json j = gap_table_to_json(table, true);
    CHECK(j.at("synthetic") == true);
    const auto loaded = gap_table_from_json(j);
    REQUIRE(loaded.modes.size() == table.modes.size());
    for (std::size_t m = 0; m < table.modes.size(); ++m)
    {
        CHECK(loaded.modes[m].label == table.modes[m].label);
        for (std::size_t i = 0; i < table.modes[m].gap.size(); ++i)
            CHECK(loaded.modes[m].frequency[i] == table.modes[m].frequency[i]);
    }
}

TEST_CASE("reflection traces load from CSV and JSON")
{
    ReflectionTrace trace;
    for (int i = 0; i < 64; ++i)
    {
        trace.frequency.push_back(6e9 + 1e4 * i);
        trace.s11.emplace_back(std::cos(0.1 * i) * 0.8, std::sin(0.1 * i) * 0.8);
    }

    SECTION("CSV round trip is exact")
    {
        std::ostringstream os;
        save_trace_csv(trace, os);
        std::istringstream is(os.str());
        const auto loaded = trace_from_csv(is, "test");
        REQUIRE(loaded.frequency.size() == trace.frequency.size());
        for (std::size_t i = 0; i < trace.frequency.size(); ++i)
        {
            CHECK(loaded.frequency[i] == trace.frequency[i]);
            CHECK(loaded.s11[i] == trace.s11[i]);
        }
    }
    SECTION("bad header is rejected")
    {
        std::istringstream is("freq,re,im\n1,2,3\n");
        CHECK_THROWS_AS(trace_from_csv(is, "test"), ValidationError);
    }
    SECTION("JSON array form")
    {
        json arr = json::array();
        for (std::size_t i = 0; i < trace.frequency.size(); ++i)
            arr.push_back({{"frequency_hz", trace.frequency[i]},
                           {"re_s11", trace.s11[i].real()},
                           {"im_s11", trace.s11[i].imag()}});
        const auto loaded = trace_from_json(arr);
        CHECK(loaded.frequency.size() == trace.frequency.size());
    }
}

TEST_CASE("fixture URIs")
{
    CHECK(fixtures::is_fixture_uri("fixtures://F4"));
    CHECK_FALSE(fixtures::is_fixture_uri("/tmp/F4.json"));
    CHECK(fixtures::fixture_name("fixtures://P_FWGMR") == "P_FWGMR");
    CHECK_THROWS_AS(fixtures::fixture_name("nope"), ValidationError);
}
