#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "resolveq/dataio.hpp"
#include "resolveq/errors.hpp"
#include "resolveq/loss_model.hpp"

// Bundled regression data: the measured multi-mode devices (nine FWGMRs,
// seven ellipsoidal cavities), the two canonical participation matrices, and
// the per-geometry mode catalogs. Values are embedded at published precision;
// SI conversions happen at construction.

namespace resolveq::fixtures
{

namespace detail
{

struct ModeSpec
{
    const char *label;
    double freq_ghz;
    double q_c_e6;   // coupling Q in units of 1e6
    double q_int_e6; // internal Q in units of 1e6
    double inv_g;
    double p_ma;
    double y_seam;
    double eps_y;
};

struct DeviceSpec
{
    const char *id;
    const char *material;
    const char *treatment;
    double gap_um; // < 0 when not applicable
    ModeSpec modes[3];
};

inline const std::vector<DeviceSpec> &device_specs()
{
    static const std::vector<DeviceSpec> specs = {
        {"F1", "5N5Al", "", 65.0,
         {{"DWGM-1", 5.590, 3.2, 0.047, 0.46, 6.4e-6, 2.4e-4, 0.05},
          {"DFM-2", 7.997, 0.36, 0.43, 1.1e-2, 5.9e-6, 8.0e-5, 0.05},
          {"CWGM-1", 10.862, 6.4, 1.74, 5.5e-3, 1.5e-7, 2.0e-3, 0.05}}},
        {"F1(e)", "5N5Al", "etched", 80.0,
         {{"DWGM-1", 5.756, 7.0, 3.2, 0.37, 5.1e-6, 4.0e-4, 0.05},
          {"DFWGM-1", 6.465, 1.5, 12.0, 6.9e-2, 1.8e-6, 2.2e-4, 0.05},
          {"CWGM-1", 10.879, 12.0, 59.0, 5.6e-3, 1.6e-7, 8.0e-4, 0.05}}},
        {"F2", "5N5Al", "", 155.0,
         {{"DWGM-1", 6.043, 0.44, 0.17, 0.16, 2.2e-6, 4.0e-4, 0.05},
          {"DFM-1", 3.696, 1.6, 0.96, 4.5e-2, 1.5e-6, 6.3e-4, 0.05},
          {"CWGM-1", 10.873, 5.7, 0.88, 5.4e-3, 2.0e-7, 1.8e-3, 0.05}}},
        {"F2(e)", "5N5Al", "etched", 150.0,
         {{"DWGM-1", 6.040, 4.1, 3.5, 0.17, 2.3e-6, 5.7e-4, 0.05},
          {"DFM-2", 10.562, 1.1e2, 8.7, 7.0e-3, 1.9e-6, 1.2e-4, 0.05},
          {"CAV-1", 8.698, 1.1e-2, 3.6e-2, 6.2e-3, 2.3e-7, 0.58, 0.05}}},
        {"F2(ed)", "5N5Al", "etched DT25", 68.0,
         {{"DWGM-1", 5.790, 5.5, 6.0, 0.46, 6.2e-6, 4.7e-4, 0.05},
          {"DFM-1", 3.208, 9.0, 13.0, 5.8e-2, 4.1e-6, 5.4e-4, 0.05},
          {"CWGM-1", 10.881, 37.0, 19.0, 5.3e-3, 1.4e-7, 6.9e-4, 0.05}}},
        {"F5(d)", "5N5Al", "DT150", 88.0,
         {{"DWGM-1", 5.734, 3.3, 2.1, 0.34, 4.6e-6, 1.4e-4, 0.05},
          {"DFM-2", 3.281, 23.0, 5.0, 5.3e-2, 3.3e-6, 3.4e-4, 0.05},
          {"CAV-1", 8.631, 7.8e-3, 2.4e-2, 6.1e-3, 2.4e-7, 0.28, 0.05}}},
        // CAV-2 of F3 carries extra uncertainty from the bulk dielectric loss
        // of the assembly screws; its eps_y is 20%.
        {"F3", "6061Al", "", 100.0,
         {{"DWGM-1", 5.802, 7.3, 0.56, 0.28, 3.8e-6, 2.7e-4, 0.05},
          {"DFM-1", 3.417, 15.0, 3.4, 5.1e-2, 2.7e-6, 6.4e-4, 0.05},
          {"CAV-2", 11.081, 2.1e-2, 6.5e-2, 3.8e-6, 8.2e-7, 1.0, 0.20}}},
        {"F3(d)", "6061Al", "DT25", 72.0,
         {{"DWGM-1", 5.784, 0.86, 0.77, 0.42, 5.7e-6, 1.7e-4, 0.05},
          {"DFM-1", 3.183, 3.0, 3.67, 5.7e-2, 4.2e-6, 5.7e-4, 0.05},
          {"CWGM-1", 10.865, 26.0, 7.97, 5.8e-3, 1.6e-7, 6.6e-4, 0.05}}},
        {"F4", "6061Al", "", 100.0,
         {{"DWGM-1", 5.858, 1.6, 0.45, 0.28, 3.8e-6, 2.7e-4, 0.05},
          {"DFM-2", 9.199, 14.0, 2.2, 8.9e-3, 3.5e-6, 7.1e-5, 0.05},
          {"CWGM-1", 10.863, 5.7, 7.4, 5.5e-3, 1.5e-7, 2.1e-3, 0.05}}},
        {"E1", "5N5Al", "", -1.0,
         {{"TM310", 11.556, 0.12, 0.21, 3.0e-3, 4.3e-8, 0.10, 0.05},
          {"TE111", 8.450, 46.0, 183.0, 2.8e-3, 0.8e-8, 1.5e-5, 0.05},
          {"TE011", 10.723, 2.4e4, 195.0, 1.8e-3, 6.7e-10, 1.6e-5, 0.05}}},
        {"E1(e)", "5N5Al", "etched", -1.0,
         {{"TM110", 7.225, 0.44, 0.43, 4.3e-3, 3.3e-8, 0.13, 0.05},
          {"TE211", 10.216, 92.0, 644.0, 2.5e-3, 1.6e-8, 5.2e-5, 0.05},
          {"TE011", 10.731, 7.0e3, 1.2e3, 1.8e-3, 6.7e-10, 1.6e-5, 0.05}}},
        {"E2", "6061Al", "", -1.0,
         {{"TM020", 10.001, 0.1, 0.29, 3.3e-3, 3.9e-8, 0.12, 0.05},
          {"TE111", 8.479, 37.0, 91.0, 2.8e-3, 0.8e-8, 1.5e-5, 0.05},
          {"TE011", 10.756, 1.1e3, 150.0, 1.8e-3, 6.7e-10, 1.6e-5, 0.05}}},
        {"E3(eb)", "6061Al", "HP ebAl", -1.0,
         {{"TM310", 11.588, 121.0, 108.0, 3.0e-3, 4.3e-8, 0.10, 0.05},
          {"TE211", 10.267, 795.0, 600.0, 2.5e-3, 1.6e-8, 5.2e-5, 0.05},
          {"TE011", 10.783, 4.7e3, 863.0, 1.8e-3, 6.7e-10, 1.6e-5, 0.05}}},
        {"E4(d)", "6061Al", "DT25", -1.0,
         {{"TM010", 4.839, 4.4e-2, 0.25, 6.1e-3, 2.8e-8, 0.15, 0.05},
          {"TE111", 8.482, 17.0, 32.0, 2.8e-3, 0.8e-8, 1.5e-5, 0.05},
          {"TE011", 10.759, 51.0, 55.0, 1.8e-3, 6.7e-10, 1.6e-5, 0.05}}},
        {"E4(eb)", "6061Al", "DT25 ebAl", -1.0,
         {{"TM310", 11.573, 3.8e3, 87.0, 3.0e-3, 4.3e-8, 0.10, 0.05},
          {"TE311", 12.002, 3.6e4, 302.0, 2.4e-3, 2.5e-8, 7.0e-5, 0.05},
          {"TE011", 10.759, 1.4e4, 249.0, 1.8e-3, 6.7e-10, 1.6e-5, 0.05}}},
        {"E4(sp)", "6061Al", "DT25 spAl", -1.0,
         {{"TM210", 9.457, 2.6e3, 536.0, 3.6e-3, 3.9e-8, 0.11, 0.05},
          {"TE311", 12.002, 2.9e3, 443.0, 2.4e-3, 2.5e-8, 7.0e-5, 0.05},
          {"TE011", 10.758, 4.5e3, 424.0, 1.8e-3, 6.7e-10, 1.6e-5, 0.05}}},
    };
    return specs;
}

inline DeviceRecord build(const DeviceSpec &spec)
{
    DeviceRecord rec;
    rec.device_id = spec.id;
    rec.material = spec.material;
    rec.treatment = spec.treatment;
    if (spec.gap_um > 0.0)
        rec.gap = spec.gap_um / 1e6;
    for (const auto &m : spec.modes)
    {
        DeviceMode mode;
        mode.measurement.label = m.label;
        mode.measurement.frequency = m.freq_ghz * 1e9;
        mode.measurement.q_int = m.q_int_e6 * 1e6;
        mode.measurement.q_c = m.q_c_e6 * 1e6;
        mode.measurement.q_int_rel_sigma = m.eps_y;
        mode.participation = {m.inv_g, m.p_ma, m.y_seam};
        rec.modes.push_back(mode);
    }
    rec.validate();
    return rec;
}

} // namespace detail

inline std::vector<DeviceRecord> builtin_fixtures()
{
    std::vector<DeviceRecord> out;
    for (const auto &spec : detail::device_specs())
        out.push_back(detail::build(spec));
    return out;
}

inline std::vector<std::string> device_ids()
{
    std::vector<std::string> ids;
    for (const auto &spec : detail::device_specs())
        ids.emplace_back(spec.id);
    return ids;
}

inline DeviceRecord builtin_device(const std::string &id)
{
    for (const auto &spec : detail::device_specs())
    {
        if (id == spec.id)
            return detail::build(spec);
    }
    throw ValidationError("no bundled device '" + id + "'");
}

// The two canonical three-mode systems: DWGM/DFM/CWGM of the 100 um FWGMR and
// SEAM/NON-SEAM/COND of the ellipsoidal cavity.
inline ParticipationMatrix builtin_participation_matrix(const std::string &name)
{
    ParticipationMatrix p;
    if (name == "P_FWGMR")
    {
        p.add_row("DWGM", ParticipationRow{0.28, 3.8e-6, 2.7e-4});
        p.add_row("DFM", ParticipationRow{8.9e-3, 3.5e-6, 7.1e-5});
        p.add_row("CWGM", ParticipationRow{5.5e-3, 1.5e-7, 2.1e-3});
        return p;
    }
    if (name == "P_ellip")
    {
        p.add_row("SEAM", ParticipationRow{4.3e-3, 3.3e-8, 1.3e-1});
        p.add_row("NON-SEAM", ParticipationRow{2.5e-3, 1.6e-8, 5.2e-5});
        p.add_row("COND", ParticipationRow{1.8e-3, 6.7e-10, 1.6e-5});
        return p;
    }
    throw ValidationError("no bundled participation matrix '" + name +
                          "' (expected P_FWGMR or P_ellip)");
}

struct CatalogMode
{
    std::string label;
    double frequency = 0.0; // Hz
    ParticipationRow participation;
    std::optional<double> p_diel; // bulk dielectric participation of assembly hardware
};

// Per-geometry mode catalogs (supplementary participation tables).
inline std::vector<CatalogMode> builtin_mode_catalog(const std::string &name)
{
    if (name == "FWGMR")
    {
        return {
            {"DFM-1", 3.434e9, {5.1e-2, 2.7e-6, 6.4e-4}, 1.7e-7},
            {"DFM-2", 9.094e9, {8.9e-3, 3.5e-6, 7.1e-5}, 2.3e-8},
            {"DWGM-1", 5.816e9, {2.8e-1, 3.8e-6, 2.7e-4}, 8.2e-8},
            {"DWGM-2", 11.506e9, {1.8e-1, 5.0e-6, 1.7e-4}, 7.9e-6},
            {"DFWGM-1", 6.480e9, {6.7e-2, 1.6e-6, 2.0e-4}, 3.2e-7},
            {"CWGM-1", 10.906e9, {5.5e-3, 1.5e-7, 2.1e-3}, 5.3e-5},
            {"CAV-1", 8.621e9, {6.7e-3, 2.7e-7, 3.2e-1}, 1.5e-3},
            {"CAV-2", 10.994e9, {2.1e-2, 8.2e-7, 1.0}, 3.1e-1},
            {"DIEL-1", 2.986e9, {5.2e-1, 3.7e-6, 2.8e-2}, 2.7e-1},
            {"DIEL-2", 3.779e9, {1.1e-1, 1.6e-6, 1.2e-2}, 1.1e-1},
        };
    }
    if (name == "ellipsoidal")
    {
        return {
            {"TM010", 4.843e9, {6.1e-3, 2.8e-8, 1.5e-1}, std::nullopt},
            {"TM110", 7.252e9, {4.6e-3, 3.5e-8, 1.3e-1}, std::nullopt},
            {"TM210", 9.475e9, {3.6e-3, 3.9e-8, 1.1e-1}, std::nullopt},
            {"TM020", 10.017e9, {3.3e-3, 3.9e-8, 1.2e-1}, std::nullopt},
            {"TM011", 10.464e9, {2.8e-3, 2.7e-8, 6.3e-5}, std::nullopt},
            {"TE111", 8.513e9, {2.8e-3, 0.8e-8, 1.5e-5}, std::nullopt},
            {"TE211", 10.260e9, {2.5e-3, 1.6e-8, 5.2e-5}, std::nullopt},
            {"TE011", 10.778e9, {1.8e-3, 6.7e-10, 1.6e-5}, std::nullopt},
        };
    }
    throw ValidationError("no bundled mode catalog '" + name + "' (expected FWGMR or ellipsoidal)");
}

// Synthetic frequency-vs-gap fixture (the measured curves are not published
// as numbers). Fork modes stiffen with gap as sqrt(g/g0); whispering-gallery
// and cavity modes are gap-insensitive.
inline GapFrequencyTable builtin_gap_table()
{
    GapFrequencyTable table;
    const double g0 = 100.0 / 1e6;
    auto sqrt_mode = [&](const std::string &label, double f_at_g0) {
        GapFrequencyTable::ModeCurve curve;
        curve.label = label;
        for (int i = 0; i <= 8; ++i)
        {
            const double g = (40.0 + 20.0 * i) / 1e6;
            curve.gap.push_back(g);
            curve.frequency.push_back(f_at_g0 * std::sqrt(g / g0));
        }
        return curve;
    };
    auto flat_mode = [&](const std::string &label, double f) {
        GapFrequencyTable::ModeCurve curve;
        curve.label = label;
        for (int i = 0; i <= 8; ++i)
        {
            curve.gap.push_back((40.0 + 20.0 * i) / 1e6);
            curve.frequency.push_back(f);
        }
        return curve;
    };
    table.modes.push_back(sqrt_mode("DFM-1", 3.434e9));
    table.modes.push_back(sqrt_mode("DFM-2", 9.094e9));
    table.modes.push_back(flat_mode("DWGM-1", 5.816e9));
    table.modes.push_back(flat_mode("CWGM-1", 10.906e9));
    table.validate();
    return table;
}

// fixtures:// URIs address bundled data without file paths.
inline bool is_fixture_uri(const std::string &s)
{
    return s.rfind("fixtures://", 0) == 0;
}

inline std::string fixture_name(const std::string &uri)
{
    if (!is_fixture_uri(uri))
        throw ValidationError("not a fixtures:// URI: '" + uri + "'");
    return uri.substr(std::string("fixtures://").size());
}

} // namespace resolveq::fixtures
