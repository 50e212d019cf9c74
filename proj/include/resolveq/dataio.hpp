#pragma once

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "resolveq/errors.hpp"
#include "resolveq/loss_model.hpp"
#include "resolveq/pchip.hpp"
#include "resolveq/spectral_fit.hpp"

namespace resolveq
{

using nlohmann::json;

// One measured+simulated mode of a device.
struct DeviceMode
{
    ModeMeasurement measurement;
    ParticipationRow participation;
};

// A characterized device: mode measurements aligned with participation rows.
struct DeviceRecord
{
    std::string device_id;
    std::string material;
    std::string treatment;       // surface-treatment tags, space separated
    std::optional<double> gap;   // planar-component separation, m
    std::vector<DeviceMode> modes;

    void validate() const
    {
        if (device_id.empty())
            throw ValidationError("device_id must not be empty");
        if (modes.empty())
            throw ValidationError("device '" + device_id + "': mode list is empty");
        for (std::size_t i = 0; i < modes.size(); ++i)
        {
            modes[i].measurement.validate();
            modes[i].participation.validate();
            for (std::size_t j = i + 1; j < modes.size(); ++j)
            {
                if (modes[i].measurement.label == modes[j].measurement.label)
                    throw ValidationError("device '" + device_id + "': duplicate mode label '" +
                                          modes[i].measurement.label + "'");
            }
        }
        if (gap && !(*gap > 0.0))
            throw ValidationError("device '" + device_id + "': gap must be > 0");
    }

    ParticipationMatrix participation_matrix() const
    {
        ParticipationMatrix p;
        for (const auto &m : modes)
            p.add_row(m.measurement.label, m.participation);
        return p;
    }

    std::vector<ModeMeasurement> measurements() const
    {
        std::vector<ModeMeasurement> out;
        out.reserve(modes.size());
        for (const auto &m : modes)
            out.push_back(m.measurement);
        return out;
    }
};

namespace detail
{

inline double require_number(const json &obj, const std::string &key, const std::string &where)
{
    if (!obj.contains(key))
        throw ValidationError(where + ": missing field '" + key + "' (unit-tagged name required)");
    const auto &v = obj.at(key);
    if (!v.is_number())
        throw ValidationError(where + ": field '" + key + "' must be a number");
    return v.get<double>();
}

inline void reject_unknown_keys(const json &obj, const std::vector<std::string> &allowed,
                                const std::string &where)
{
    for (auto it = obj.begin(); it != obj.end(); ++it)
    {
        bool known = false;
        for (const auto &k : allowed)
            known = known || it.key() == k;
        if (!known)
            throw ValidationError(where + ": unknown field '" + it.key() +
                                  "' (unit-tagged names required)");
    }
}

} // namespace detail

// ---- DeviceRecord JSON (canonical schema, units in the field names) -------
//
// {
//   "device_id": "F4", "material": "6061Al", "treatment": "",
//   "gap_um": 100.0,
//   "modes": [ { "label": "DWGM-1", "freq_ghz": 5.858, "q_int": 4.5e5,
//                "q_c": 1.6e6, "eps_y": 0.05, "photon_number": 1e4,
//                "inv_g_per_ohm": 0.28, "p_ma": 3.8e-6,
//                "y_seam_per_ohm_m": 2.7e-4 }, ... ]
// }

inline DeviceRecord device_from_json(const json &j)
{
    if (!j.is_object())
        throw ValidationError("device record: top level must be an object");
    detail::reject_unknown_keys(j, {"device_id", "material", "treatment", "gap_um", "modes"},
                                "device record");
    DeviceRecord rec;
    if (!j.contains("device_id") || !j.at("device_id").is_string())
        throw ValidationError("device record: missing string field 'device_id'");
    rec.device_id = j.at("device_id").get<std::string>();
    rec.material = j.value("material", std::string{});
    rec.treatment = j.value("treatment", std::string{});
    if (j.contains("gap_um"))
        rec.gap = detail::require_number(j, "gap_um", "device '" + rec.device_id + "'") / 1e6;
    if (!j.contains("modes") || !j.at("modes").is_array())
        throw ValidationError("device '" + rec.device_id + "': missing array field 'modes'");
    std::size_t idx = 0;
    for (const auto &jm : j.at("modes"))
    {
        const std::string where = "device '" + rec.device_id + "' modes[" + std::to_string(idx) + "]";
        detail::reject_unknown_keys(jm,
                                    {"label", "freq_ghz", "q_int", "q_c", "eps_y", "photon_number",
                                     "inv_g_per_ohm", "p_ma", "y_seam_per_ohm_m"},
                                    where);
        DeviceMode mode;
        if (!jm.contains("label") || !jm.at("label").is_string())
            throw ValidationError(where + ": missing string field 'label'");
        mode.measurement.label = jm.at("label").get<std::string>();
        mode.measurement.frequency = detail::require_number(jm, "freq_ghz", where) * 1e9;
        mode.measurement.q_int = detail::require_number(jm, "q_int", where);
        mode.measurement.q_int_rel_sigma = jm.contains("eps_y")
                                               ? detail::require_number(jm, "eps_y", where)
                                               : 0.05;
        if (jm.contains("q_c"))
            mode.measurement.q_c = detail::require_number(jm, "q_c", where);
        if (jm.contains("photon_number"))
            mode.measurement.photon_number = detail::require_number(jm, "photon_number", where);
        mode.participation.inv_g = detail::require_number(jm, "inv_g_per_ohm", where);
        mode.participation.p_ma = detail::require_number(jm, "p_ma", where);
        mode.participation.y_seam = detail::require_number(jm, "y_seam_per_ohm_m", where);
        rec.modes.push_back(mode);
        ++idx;
    }
    rec.validate();
    return rec;
}

inline json device_to_json(const DeviceRecord &rec)
{
    json j;
    j["device_id"] = rec.device_id;
    j["material"] = rec.material;
    j["treatment"] = rec.treatment;
    if (rec.gap)
        j["gap_um"] = *rec.gap * 1e6;
    j["modes"] = json::array();
    for (const auto &m : rec.modes)
    {
        json jm;
        jm["label"] = m.measurement.label;
        jm["freq_ghz"] = m.measurement.frequency / 1e9;
        jm["q_int"] = m.measurement.q_int;
        jm["eps_y"] = m.measurement.q_int_rel_sigma;
        if (m.measurement.q_c)
            jm["q_c"] = *m.measurement.q_c;
        if (m.measurement.photon_number)
            jm["photon_number"] = *m.measurement.photon_number;
        jm["inv_g_per_ohm"] = m.participation.inv_g;
        jm["p_ma"] = m.participation.p_ma;
        jm["y_seam_per_ohm_m"] = m.participation.y_seam;
        j["modes"].push_back(jm);
    }
    return j;
}

inline json load_json_file(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path + "'");
    json j;
    try
    {
        in >> j;
    }
    catch (const json::parse_error &e)
    {
        throw IoError("cannot parse '" + path + "': " + e.what());
    }
    return j;
}

inline DeviceRecord load_device(const std::string &path)
{
    return device_from_json(load_json_file(path));
}

inline void save_device(const DeviceRecord &rec, const std::string &path)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write '" + path + "'");
    out << device_to_json(rec).dump(2) << "\n";
}

// ---- Material losses JSON --------------------------------------------------
//
// { "r_s_uohm": 0.5, "tan_delta": 0.033, "r_seam_uohm_m": 26.0 }

inline MaterialLossVector losses_from_json(const json &j)
{
    detail::reject_unknown_keys(j, {"r_s_uohm", "tan_delta", "r_seam_uohm_m"}, "losses");
    MaterialLossVector x;
    x.r_s = detail::require_number(j, "r_s_uohm", "losses") / 1e6;
    x.tan_delta = detail::require_number(j, "tan_delta", "losses");
    x.r_seam = detail::require_number(j, "r_seam_uohm_m", "losses") / 1e6;
    x.validate();
    return x;
}

inline json losses_to_json(const MaterialLossVector &x)
{
    return {{"r_s_uohm", x.r_s * 1e6}, {"tan_delta", x.tan_delta}, {"r_seam_uohm_m", x.r_seam * 1e6}};
}

// ---- Participation matrix JSON ----------------------------------------------
//
// { "name": "P_FWGMR", "rows": [ { "label": "DWGM", "inv_g_per_ohm": ...,
//   "p_ma": ..., "y_seam_per_ohm_m": ... }, ... ] }

inline ParticipationMatrix participation_from_json(const json &j)
{
    if (!j.contains("rows") || !j.at("rows").is_array())
        throw ValidationError("participation matrix: missing array field 'rows'");
    ParticipationMatrix p;
    std::size_t idx = 0;
    for (const auto &jr : j.at("rows"))
    {
        const std::string where = "participation rows[" + std::to_string(idx) + "]";
        detail::reject_unknown_keys(jr, {"label", "inv_g_per_ohm", "p_ma", "y_seam_per_ohm_m"}, where);
        if (!jr.contains("label") || !jr.at("label").is_string())
            throw ValidationError(where + ": missing string field 'label'");
        ParticipationRow row;
        row.inv_g = detail::require_number(jr, "inv_g_per_ohm", where);
        row.p_ma = detail::require_number(jr, "p_ma", where);
        row.y_seam = detail::require_number(jr, "y_seam_per_ohm_m", where);
        p.add_row(jr.at("label").get<std::string>(), row);
        ++idx;
    }
    p.validate();
    return p;
}

inline json participation_to_json(const ParticipationMatrix &p, const std::string &name = {})
{
    json j;
    if (!name.empty())
        j["name"] = name;
    j["rows"] = json::array();
    for (int i = 0; i < p.rows(); ++i)
    {
        const ParticipationRow row = p.named_row(i);
        j["rows"].push_back({{"label", p.labels()[static_cast<std::size_t>(i)]},
                             {"inv_g_per_ohm", row.inv_g},
                             {"p_ma", row.p_ma},
                             {"y_seam_per_ohm_m", row.y_seam}});
    }
    return j;
}

// ---- Gap-frequency tables and gap inference ---------------------------------
//
// { "synthetic": true, "modes": [ { "label": "DFM-1",
//   "samples": [ { "gap_um": 50.0, "freq_ghz": 4.86 }, ... ] }, ... ] }

struct GapFrequencyTable
{
    struct ModeCurve
    {
        std::string label;
        std::vector<double> gap;       // m, strictly increasing
        std::vector<double> frequency; // Hz
    };
    std::vector<ModeCurve> modes;

    void validate() const
    {
        if (modes.empty())
            throw ValidationError("gap table has no modes");
        for (const auto &m : modes)
        {
            if (m.gap.size() < 2 || m.gap.size() != m.frequency.size())
                throw ValidationError("gap table mode '" + m.label + "' needs >= 2 aligned samples");
            for (std::size_t i = 0; i < m.gap.size(); ++i)
            {
                if (i > 0 && !(m.gap[i] > m.gap[i - 1]))
                    throw ValidationError("gap table mode '" + m.label + "': gaps must increase");
                if (!(m.frequency[i] > 0.0))
                    throw ValidationError("gap table mode '" + m.label + "': frequencies must be > 0");
            }
        }
    }

    const ModeCurve &curve(const std::string &label) const
    {
        for (const auto &m : modes)
        {
            if (m.label == label)
                return m;
        }
        throw ValidationError("gap table has no mode '" + label + "'");
    }
};

inline GapFrequencyTable gap_table_from_json(const json &j)
{
    if (!j.contains("modes") || !j.at("modes").is_array())
        throw ValidationError("gap table: missing array field 'modes'");
    GapFrequencyTable table;
    for (const auto &jm : j.at("modes"))
    {
        GapFrequencyTable::ModeCurve curve;
        if (!jm.contains("label") || !jm.at("label").is_string())
            throw ValidationError("gap table mode: missing string field 'label'");
        curve.label = jm.at("label").get<std::string>();
        if (!jm.contains("samples") || !jm.at("samples").is_array())
            throw ValidationError("gap table mode '" + curve.label + "': missing array 'samples'");
        for (const auto &js : jm.at("samples"))
        {
            const std::string where = "gap table mode '" + curve.label + "' sample";
            detail::reject_unknown_keys(js, {"gap_um", "freq_ghz"}, where);
            curve.gap.push_back(detail::require_number(js, "gap_um", where) / 1e6);
            curve.frequency.push_back(detail::require_number(js, "freq_ghz", where) * 1e9);
        }
        table.modes.push_back(std::move(curve));
    }
    table.validate();
    return table;
}

inline json gap_table_to_json(const GapFrequencyTable &table, bool synthetic = false)
{
    json j;
    if (synthetic)
        j["synthetic"] = true;
    j["modes"] = json::array();
    for (const auto &m : table.modes)
    {
        json jm;
        jm["label"] = m.label;
        jm["samples"] = json::array();
        for (std::size_t i = 0; i < m.gap.size(); ++i)
            jm["samples"].push_back({{"gap_um", m.gap[i] * 1e6}, {"freq_ghz", m.frequency[i] / 1e9}});
        j["modes"].push_back(jm);
    }
    return j;
}

struct GapEstimate
{
    double gap = 0.0;          // m
    double rms_mismatch = 0.0; // rms fractional frequency mismatch at the optimum
    std::vector<std::pair<std::string, double>> per_mode_mismatch; // (f_meas - f_model)/f_meas
    bool mismatch_flag = false; // rms mismatch above 5%
};

// Estimate the assembly gap by matching measured frequencies against the
// interpolated frequency-vs-gap curves. The objective is the rms fractional
// mismatch; curves are monotone piecewise-cubic.
inline GapEstimate infer_gap(const GapFrequencyTable &table,
                             const std::vector<std::pair<std::string, double>> &measured)
{
    table.validate();
    if (measured.empty())
        throw ValidationError("infer_gap: no measured frequencies");

    struct Entry
    {
        std::string label;
        double f_meas;
        MonotoneCubicInterpolator interp;
        bool sensitive;
    };
    std::vector<Entry> entries;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool any_sensitive = false;
    bool any_in_envelope = false;
    for (const auto &[label, f] : measured)
    {
        if (!(f > 0.0))
            throw ValidationError("infer_gap: measured frequency for '" + label + "' must be > 0");
        const auto &curve = table.curve(label);
        MonotoneCubicInterpolator interp(curve.gap, curve.frequency);
        const double fmin = interp.min_value(), fmax = interp.max_value();
        const double mid = 0.5 * (fmin + fmax);
        const bool sensitive = mid > 0.0 && (fmax - fmin) / mid > 0.01;
        any_sensitive = any_sensitive || sensitive;
        if (f >= fmin * 0.9 && f <= fmax * 1.1)
            any_in_envelope = true;
        lo = std::max(lo, interp.min_x());
        hi = std::min(hi, interp.max_x());
        entries.push_back({label, f, std::move(interp), sensitive});
    }
    if (!any_sensitive)
        throw ValidationError("infer_gap: no gap-sensitive mode (all curves vary <= 1% over the table)");
    if (!any_in_envelope)
        throw ValidationError("infer_gap: measured frequencies outside the interpolated range for all gaps");
    if (!(lo < hi))
        throw ValidationError("infer_gap: mode curves have no common gap range");

    auto rms_at = [&](double g) {
        double ss = 0.0;
        for (const auto &e : entries)
        {
            const double r = (e.f_meas - e.interp(g)) / e.f_meas;
            ss += r * r;
        }
        return std::sqrt(ss / static_cast<double>(entries.size()));
    };

    const int scan = 512;
    double best_g = lo, best = rms_at(lo);
    for (int i = 1; i <= scan; ++i)
    {
        const double g = lo + (hi - lo) * i / scan;
        const double r = rms_at(g);
        if (r < best)
        {
            best = r;
            best_g = g;
        }
    }
    // Golden-section polish inside the bracketing scan cells.
    double a = std::max(lo, best_g - (hi - lo) / scan);
    double b = std::min(hi, best_g + (hi - lo) / scan);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = rms_at(c), fd = rms_at(d);
    for (int it = 0; it < 120 && (b - a) > 1e-12 * (hi - lo); ++it)
    {
        if (fc < fd)
        {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = rms_at(c);
        }
        else
        {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = rms_at(d);
        }
    }
    GapEstimate est;
    est.gap = 0.5 * (a + b);
    if (rms_at(est.gap) > best)
        est.gap = best_g;
    est.rms_mismatch = rms_at(est.gap);
    for (const auto &e : entries)
        est.per_mode_mismatch.emplace_back(e.label, (e.f_meas - e.interp(est.gap)) / e.f_meas);
    est.mismatch_flag = est.rms_mismatch > 0.05;
    return est;
}

// ---- Reflection traces (CSV or JSON) ---------------------------------------

inline ReflectionTrace trace_from_csv(std::istream &in, const std::string &where)
{
    ReflectionTrace trace;
    std::string line;
    if (!std::getline(in, line))
        throw IoError(where + ": empty trace file");
    if (line != "frequency_hz,re_s11,im_s11" && line != "frequency_hz,re_s11,im_s11\r")
        throw ValidationError(where + ": expected header 'frequency_hz,re_s11,im_s11'");
    std::size_t row = 1;
    while (std::getline(in, line))
    {
        ++row;
        if (line.empty() || line == "\r")
            continue;
        std::istringstream ls(line);
        double f = 0.0, re = 0.0, im = 0.0;
        char c1 = 0, c2 = 0;
        if (!(ls >> f >> c1 >> re >> c2 >> im) || c1 != ',' || c2 != ',')
            throw ValidationError(where + " row " + std::to_string(row) + ": malformed CSV line");
        trace.frequency.push_back(f);
        trace.s11.emplace_back(re, im);
    }
    trace.validate();
    return trace;
}

inline ReflectionTrace trace_from_json(const json &j)
{
    const json &arr = j.is_array() ? j : j.at("points");
    if (!arr.is_array())
        throw ValidationError("trace JSON must be an array of points");
    ReflectionTrace trace;
    for (const auto &jp : arr)
    {
        detail::reject_unknown_keys(jp, {"frequency_hz", "re_s11", "im_s11"}, "trace point");
        trace.frequency.push_back(detail::require_number(jp, "frequency_hz", "trace point"));
        trace.s11.emplace_back(detail::require_number(jp, "re_s11", "trace point"),
                               detail::require_number(jp, "im_s11", "trace point"));
    }
    trace.validate();
    return trace;
}

inline ReflectionTrace load_trace(const std::string &path)
{
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
        return trace_from_json(load_json_file(path));
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path + "'");
    return trace_from_csv(in, path);
}

inline void save_trace_csv(const ReflectionTrace &trace, std::ostream &os)
{
    os << "frequency_hz,re_s11,im_s11\n";
    char buf[160];
    for (std::size_t k = 0; k < trace.frequency.size(); ++k)
    {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", trace.frequency[k],
                      trace.s11[k].real(), trace.s11[k].imag());
        os << buf;
    }
}

inline json resonance_fit_to_json(const ResonanceFit &fit)
{
    json j;
    j["f0_hz"] = fit.f0;
    j["q_loaded"] = fit.q_loaded;
    j["q_c_mag"] = fit.q_c_mag;
    j["mismatch_phase_rad"] = fit.mismatch_phase;
    j["q_int"] = fit.q_int;
    j["f0_err_hz"] = fit.f0_err;
    j["q_loaded_err"] = fit.q_loaded_err;
    j["q_c_err"] = fit.q_c_err;
    j["q_int_err"] = fit.q_int_err;
    j["cable_delay_s"] = fit.environment.cable_delay;
    j["amplitude"] = fit.environment.amplitude;
    j["global_phase_rad"] = fit.environment.global_phase;
    j["canonical_diameter"] = fit.canonical_diameter;
    j["residual_rms_rel"] = fit.residual_rms;
    json flags = json::array();
    if (fit.flagged(fit_flag_off_resonance_span))
        flags.push_back("off_resonance_span");
    if (fit.flagged(fit_flag_undercoupled_extreme))
        flags.push_back("undercoupled_extreme");
    if (fit.flagged(fit_flag_low_snr))
        flags.push_back("low_snr");
    if (fit.flagged(fit_flag_nonpositive_q_int))
        flags.push_back("nonpositive_q_int");
    j["diagnostics"] = flags;
    return j;
}

} // namespace resolveq
