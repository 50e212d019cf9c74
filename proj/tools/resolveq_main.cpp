// resolveq: extract material microwave-loss factors from multi-mode
// resonator measurements, map sensitivity, predict quality factors, fit
// reflection spectra, and infer assembly gaps.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "resolveq/dataio.hpp"
#include "resolveq/extraction.hpp"
#include "resolveq/fixtures.hpp"
#include "resolveq/loss_model.hpp"
#include "resolveq/manifest.hpp"
#include "resolveq/sensitivity.hpp"
#include "resolveq/spectral_fit.hpp"
#include "resolveq/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace resolveq;

namespace
{

struct GlobalOptions
{
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    int mc_samples = 5000;
    std::string bound_rule = "two_sigma_capped";
    double bound_percentile = 0.95;
    int threads = 0;
    std::string format = "json"; // stdout table format: json | csv
    double eps_global = 0.0;     // 0 = keep per-mode values
    std::map<std::string, double> eps_per_mode;

    ExtractionConfig extraction_config() const
    {
        ExtractionConfig cfg;
        cfg.mc_samples = mc_samples;
        cfg.seed = seed;
        cfg.bound_rule = bound_rule_from_string(bound_rule);
        cfg.bound_percentile = bound_percentile;
        cfg.threads = threads;
        cfg.validate();
        return cfg;
    }

    json to_json() const
    {
        json eps = json::object();
        for (const auto &[k, v] : eps_per_mode)
            eps[k] = v;
        return {{"out", out_dir},
                {"seed", seed},
                {"mc_samples", mc_samples},
                {"bound_rule", bound_rule},
                {"bound_percentile", bound_percentile},
                {"threads", threads},
                {"format", format},
                {"eps_y_global", eps_global},
                {"eps_y_per_mode", eps}};
    }
};

json default_config_json()
{
    return GlobalOptions{}.to_json();
}

void apply_config_file(GlobalOptions &opts, const std::string &path)
{
    const json j = load_json_file(path);
    if (j.contains("out"))
        opts.out_dir = j.at("out").get<std::string>();
    if (j.contains("seed"))
        opts.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("mc_samples"))
        opts.mc_samples = j.at("mc_samples").get<int>();
    if (j.contains("bound_rule"))
        opts.bound_rule = j.at("bound_rule").get<std::string>();
    if (j.contains("bound_percentile"))
        opts.bound_percentile = j.at("bound_percentile").get<double>();
    if (j.contains("threads"))
        opts.threads = j.at("threads").get<int>();
    if (j.contains("format"))
        opts.format = j.at("format").get<std::string>();
    if (j.contains("eps_y_global"))
        opts.eps_global = j.at("eps_y_global").get<double>();
    if (j.contains("eps_y_per_mode"))
        for (auto it = j.at("eps_y_per_mode").begin(); it != j.at("eps_y_per_mode").end(); ++it)
            opts.eps_per_mode[it.key()] = it.value().get<double>();
}

// --eps-y accepts either a bare number (all modes) or mode=value pairs.
void parse_eps_option(GlobalOptions &opts, const std::vector<std::string> &values)
{
    for (const auto &v : values)
    {
        const auto eq = v.find('=');
        if (eq == std::string::npos)
            opts.eps_global = std::stod(v);
        else
            opts.eps_per_mode[v.substr(0, eq)] = std::stod(v.substr(eq + 1));
    }
}

void apply_eps_overrides(std::vector<ModeMeasurement> &ms, const GlobalOptions &opts)
{
    for (auto &mm : ms)
    {
        if (opts.eps_global > 0.0)
            mm.q_int_rel_sigma = opts.eps_global;
        auto it = opts.eps_per_mode.find(mm.label);
        if (it != opts.eps_per_mode.end())
            mm.q_int_rel_sigma = it->second;
    }
}

DeviceRecord resolve_device(const std::string &arg)
{
    if (fixtures::is_fixture_uri(arg))
        return fixtures::builtin_device(fixtures::fixture_name(arg));
    return load_device(arg);
}

ParticipationMatrix resolve_participation(const std::string &arg)
{
    if (fixtures::is_fixture_uri(arg))
        return fixtures::builtin_participation_matrix(fixtures::fixture_name(arg));
    return participation_from_json(load_json_file(arg));
}

MaterialLossVector resolve_losses(const std::string &arg)
{
    return losses_from_json(load_json_file(arg));
}

std::string stem_of(const std::string &arg)
{
    if (fixtures::is_fixture_uri(arg))
        return fixtures::fixture_name(arg);
    return fs::path(arg).stem().string();
}

void write_text(const fs::path &path, const std::string &content)
{
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write '" + path.string() + "'");
    out << content;
}

void write_manifest(const RunManifest &manifest, const GlobalOptions &opts)
{
    RunManifest stamped = manifest;
    stamped.timestamp = RunManifest::now_utc();
    write_text(fs::path(opts.out_dir) / "manifest.json", stamped.to_json().dump(2) + "\n");
}

RunManifest make_manifest(const std::string &command, const GlobalOptions &opts,
                          std::vector<std::string> inputs, std::vector<std::string> outputs)
{
    RunManifest m;
    m.command = command;
    m.seed = opts.seed;
    m.inputs = std::move(inputs);
    m.outputs = std::move(outputs);
    m.config = opts.to_json();
    m.config.erase("out"); // artifact bytes must not depend on where they land
    return m;
}

double channel_scale_to_display(int channel)
{
    // table-friendly units: uOhm, dimensionless, uOhm*m
    return channel == 1 ? 1.0 : 1e6;
}

const char *channel_unit_suffix(int channel)
{
    switch (channel)
    {
    case 0: return "uohm";
    case 2: return "uohm_m";
    default: return "";
    }
}

std::string channel_key(int channel, const std::string &what)
{
    const std::string suffix = channel_unit_suffix(channel);
    return suffix.empty() ? what : what + "_" + suffix;
}

json classification_to_json(const ExtractionResult &result)
{
    json channels = json::object();
    for (int ch = 0; ch < 3; ++ch)
    {
        const auto &cls = result.classification[static_cast<std::size_t>(ch)];
        const double scale = channel_scale_to_display(ch);
        json entry;
        entry["status"] = cls.status == ChannelStatus::resolved ? "resolved" : "upper_bound";
        entry[channel_key(ch, "estimate")] = cls.estimate * scale;
        entry[channel_key(ch, "sigma")] = cls.sigma * scale;
        if (cls.upper_bound)
            entry[channel_key(ch, "upper_bound")] = *cls.upper_bound * scale;
        channels[kChannelNames[static_cast<std::size_t>(ch)]] = entry;
    }
    return channels;
}

json extraction_to_json(const std::string &device_id, const ExtractionResult &result,
                        const std::vector<ModeMeasurement> &ms, const ExtractionConfig &cfg,
                        const std::string &manifest_hash)
{
    json j;
    j["device_id"] = device_id;
    j["manifest_hash"] = manifest_hash;
    j["seed"] = cfg.seed;
    j["mc_samples"] = cfg.mc_samples;
    j["bound_rule"] = to_string(cfg.bound_rule);

    j["x_hat"] = losses_to_json(result.x_hat());
    j["x_unconstrained"] = {{"r_s_uohm", result.x_unconstrained[0] * 1e6},
                            {"tan_delta", result.x_unconstrained[1]},
                            {"r_seam_uohm_m", result.x_unconstrained[2] * 1e6}};

    json cov = json::array();
    for (int i = 0; i < result.covariance.rows(); ++i)
    {
        json row = json::array();
        for (int k = 0; k < result.covariance.cols(); ++k)
            row.push_back(result.covariance(i, k));
        cov.push_back(row);
    }
    j["covariance_si"] = cov;

    json mc;
    for (int ch = 0; ch < 3; ++ch)
    {
        const double scale = channel_scale_to_display(ch);
        const std::string name = kChannelNames[static_cast<std::size_t>(ch)];
        mc["mean"][name] = result.mc_mean[ch] * scale;
        mc["std"][name] = result.mc_std[ch] * scale;
        mc["mass_at_zero"][name] = result.mass_at_zero[ch];
        for (double p : {0.025, 0.05, 0.25, 0.50, 0.75, 0.95, 0.975})
            mc["percentiles"][name]["p" + std::to_string(p).substr(2, 3)] =
                result.mc_quantile(ch, p) * scale;
    }
    j["mc"] = mc;
    j["channels"] = classification_to_json(result);

    json residuals = json::array();
    for (std::size_t i = 0; i < ms.size(); ++i)
    {
        const double y = ms[i].loss_rate();
        const double predicted = y + result.residuals[static_cast<Eigen::Index>(i)];
        residuals.push_back({{"mode", ms[i].label},
                             {"measured_inv_q", y},
                             {"predicted_inv_q", predicted},
                             {"residual", result.residuals[static_cast<Eigen::Index>(i)]}});
    }
    j["residuals"] = residuals;
    return j;
}

void print_extraction_table(const std::string &device_id, const ExtractionResult &result)
{
    std::printf("device %s\n", device_id.c_str());
    const char *unit[] = {"uOhm", "", "uOhm*m"};
    for (int ch = 0; ch < 3; ++ch)
    {
        const auto &cls = result.classification[static_cast<std::size_t>(ch)];
        const double scale = channel_scale_to_display(ch);
        if (cls.status == ChannelStatus::resolved)
            std::printf("  %-10s %12.4g +- %.4g %s\n", kChannelNames[static_cast<std::size_t>(ch)],
                        cls.estimate * scale, cls.sigma * scale, unit[ch]);
        else
            std::printf("  %-10s <= %.4g %s\n", kChannelNames[static_cast<std::size_t>(ch)],
                        *cls.upper_bound * scale, unit[ch]);
    }
}

int run_extract(const std::string &device_arg, GlobalOptions &opts)
{
    const DeviceRecord device = resolve_device(device_arg);
    auto ms = device.measurements();
    apply_eps_overrides(ms, opts);
    const ExtractionConfig cfg = opts.extraction_config();

    const std::string stem = stem_of(device_arg);
    const std::string artifact = stem + ".extraction.json";
    RunManifest manifest = make_manifest("extract", opts, {device_arg}, {artifact});

    const auto result = monte_carlo_extract(device.participation_matrix(), ms, cfg);
    const json out = extraction_to_json(device.device_id, result, ms, cfg, manifest.hash_hex());
    write_text(fs::path(opts.out_dir) / artifact, out.dump(2) + "\n");
    write_manifest(manifest, opts);

    if (opts.format == "csv")
    {
        std::printf("channel,status,estimate,sigma,upper_bound\n");
        for (int ch = 0; ch < 3; ++ch)
        {
            const auto &cls = result.classification[static_cast<std::size_t>(ch)];
            const double scale = channel_scale_to_display(ch);
            std::printf("%s,%s,%.17g,%.17g,%s\n", kChannelNames[static_cast<std::size_t>(ch)],
                        cls.status == ChannelStatus::resolved ? "resolved" : "upper_bound",
                        cls.estimate * scale, cls.sigma * scale,
                        cls.upper_bound ? std::to_string(*cls.upper_bound * scale).c_str() : "");
        }
    }
    else
    {
        print_extraction_table(device.device_id, result);
    }
    return 0;
}

int run_predict(const std::string &pmatrix_arg, const std::string &losses_arg, GlobalOptions &opts,
                bool budget_mode)
{
    const ParticipationMatrix p = resolve_participation(pmatrix_arg);
    const MaterialLossVector x = resolve_losses(losses_arg);

    const std::string stem = stem_of(pmatrix_arg);
    const std::string artifact = stem + (budget_mode ? ".budget.json" : ".predict.json");
    RunManifest manifest = make_manifest(budget_mode ? "budget" : "predict", opts,
                                         {pmatrix_arg, losses_arg}, {artifact});

    json rows = json::array();
    if (budget_mode)
    {
        if (opts.format == "csv")
            std::printf("mode,cond_fraction,ma_fraction,seam_fraction\n");
        for (int i = 0; i < p.rows(); ++i)
        {
            const auto b = loss_budget(p.named_row(i), x);
            const std::string &label = p.labels()[static_cast<std::size_t>(i)];
            rows.push_back({{"mode", label},
                            {"cond_fraction", b.cond},
                            {"ma_fraction", b.ma},
                            {"seam_fraction", b.seam}});
            if (opts.format == "csv")
                std::printf("%s,%.17g,%.17g,%.17g\n", label.c_str(), b.cond, b.ma, b.seam);
            else
                std::printf("%-10s cond %.3f  ma %.3f  seam %.3f\n", label.c_str(), b.cond, b.ma,
                            b.seam);
        }
    }
    else
    {
        const auto q = predict_quality_factors(p, x);
        if (opts.format == "csv")
            std::printf("mode,q_int\n");
        for (const auto &[label, value] : q)
        {
            rows.push_back({{"mode", label}, {"q_int", std::isinf(value) ? json("inf") : json(value)}});
            if (opts.format == "csv")
                std::printf("%s,%s\n", label.c_str(),
                            std::isinf(value) ? "inf" : std::to_string(value).c_str());
            else
                std::printf("%-10s Q = %s\n", label.c_str(),
                            std::isinf(value) ? "inf" : std::to_string(value).c_str());
        }
    }
    json out;
    out["manifest_hash"] = manifest.hash_hex();
    out[budget_mode ? "budget" : "predictions"] = rows;
    out["losses"] = losses_to_json(x);
    write_text(fs::path(opts.out_dir) / artifact, out.dump(2) + "\n");
    write_manifest(manifest, opts);
    return 0;
}

int run_sensitivity(const std::string &pmatrix_arg, const std::string &channel_name,
                    const std::string &plane, const std::vector<std::string> &fixed,
                    const std::vector<std::string> &ranges, int points, GlobalOptions &opts)
{
    const ParticipationMatrix p = resolve_participation(pmatrix_arg);
    const int channel = channel_from_name(channel_name);

    SensitivityGridSpec spec;
    spec.channel_under_test = channel;
    // default plane: x-axis r_s (or tan_delta when scanning r_s), y-axis = channel
    if (plane.empty())
    {
        spec.sweep_channels = {channel == 0 ? 1 : 0, channel};
    }
    else
    {
        const auto comma = plane.find(',');
        if (comma == std::string::npos)
            throw ValidationError("--plane expects 'channel,channel'");
        spec.sweep_channels = {channel_from_name(plane.substr(0, comma)),
                               channel_from_name(plane.substr(comma + 1))};
    }

    // per-channel default sweep decades, wide enough to cover the published maps
    const double default_min[3] = {1e-9, 1e-6, 1e-10};
    const double default_max[3] = {1e-3, 1e0, 1e-2};
    for (int s = 0; s < 2; ++s)
    {
        spec.sweep_min[s] = default_min[spec.sweep_channels[s]];
        spec.sweep_max[s] = default_max[spec.sweep_channels[s]];
        spec.sweep_points[s] = points;
    }
    for (const auto &r : ranges)
    {
        // --range channel=lo:hi
        const auto eq = r.find('=');
        const auto colon = r.find(':', eq);
        if (eq == std::string::npos || colon == std::string::npos)
            throw ValidationError("--range expects 'channel=lo:hi'");
        const int rc = channel_from_name(r.substr(0, eq));
        for (int s = 0; s < 2; ++s)
        {
            if (spec.sweep_channels[s] == rc)
            {
                spec.sweep_min[s] = std::stod(r.substr(eq + 1, colon - eq - 1));
                spec.sweep_max[s] = std::stod(r.substr(colon + 1));
            }
        }
    }

    spec.fixed_values = default_fixed_values(channel);
    for (const auto &f : fixed)
    {
        const auto eq = f.find('=');
        if (eq == std::string::npos)
            throw ValidationError("--fixed expects 'channel=value'");
        spec.fixed_values[channel_from_name(f.substr(0, eq))] = std::stod(f.substr(eq + 1));
    }

    spec.eps_y = Eigen::VectorXd::Constant(p.rows(), opts.eps_global > 0.0 ? opts.eps_global : 0.05);
    for (int i = 0; i < p.rows(); ++i)
    {
        auto it = opts.eps_per_mode.find(p.labels()[static_cast<std::size_t>(i)]);
        if (it != opts.eps_per_mode.end())
            spec.eps_y[i] = it->second;
    }

    const std::string stem = stem_of(pmatrix_arg);
    const std::string grid_name = stem + "." + channel_name + ".grid.csv";
    const std::string boundary_name = stem + "." + channel_name + ".boundary.csv";
    RunManifest manifest = make_manifest("sensitivity", opts, {pmatrix_arg},
                                         {grid_name, boundary_name});

    const auto grid = sensitivity_grid(p, spec, opts.threads);

    std::ostringstream gcsv;
    gcsv << "# manifest_hash=" << manifest.hash_hex() << "\n";
    write_grid_csv(grid, gcsv);
    write_text(fs::path(opts.out_dir) / grid_name, gcsv.str());

    std::ostringstream bcsv;
    bcsv << "# manifest_hash=" << manifest.hash_hex() << "\n";
    write_boundary_csv(grid, bcsv);
    write_text(fs::path(opts.out_dir) / boundary_name, bcsv.str());
    write_manifest(manifest, opts);

    if (grid.boundary.empty())
    {
        std::printf("no resolvability boundary inside the scanned plane\n");
    }
    else
    {
        double min_crossing = std::numeric_limits<double>::infinity();
        for (const auto &pt : grid.boundary)
            min_crossing = std::min(min_crossing, pt[1]);
        std::printf("boundary points: %zu, smallest %s crossing: %.4g\n", grid.boundary.size(),
                    channel_name.c_str(), min_crossing);
    }
    return 0;
}

int run_fit_spectrum(const std::string &trace_arg, double eps_floor, GlobalOptions &opts)
{
    const ReflectionTrace trace = load_trace(trace_arg);
    const std::string stem = stem_of(trace_arg);
    const std::string artifact = stem + ".fit.json";
    RunManifest manifest = make_manifest("fit-spectrum", opts, {trace_arg}, {artifact});

    const ResonanceFit fit = circle_fit_resonance(trace);
    json out = resonance_fit_to_json(fit);
    out["manifest_hash"] = manifest.hash_hex();
    if (!fit.flagged(fit_flag_nonpositive_q_int))
    {
        const auto mm = fit_to_measurement(fit, stem, eps_floor);
        out["measurement"] = {{"label", mm.label},
                              {"freq_ghz", mm.frequency / 1e9},
                              {"q_int", mm.q_int},
                              {"eps_y", mm.q_int_rel_sigma}};
    }
    write_text(fs::path(opts.out_dir) / artifact, out.dump(2) + "\n");
    write_manifest(manifest, opts);

    std::printf("f0 = %.9g GHz, Q_loaded = %.6g, Q_c = %.6g, Q_int = %.6g (+- %.2g)\n",
                fit.f0 / 1e9, fit.q_loaded, fit.q_c_mag, fit.q_int, fit.q_int_err);
    return 0;
}

int run_infer_gap(const std::string &table_arg, const std::string &freqs_arg, GlobalOptions &opts)
{
    GapFrequencyTable table;
    if (fixtures::is_fixture_uri(table_arg))
    {
        if (fixtures::fixture_name(table_arg) != "gaptable")
            throw ValidationError("unknown gap-table fixture '" + table_arg + "'");
        table = fixtures::builtin_gap_table();
    }
    else
    {
        table = gap_table_from_json(load_json_file(table_arg));
    }
    const json jf = load_json_file(freqs_arg);
    if (!jf.contains("measured") || !jf.at("measured").is_array())
        throw ValidationError("frequencies file: missing array field 'measured'");
    std::vector<std::pair<std::string, double>> measured;
    for (const auto &jm : jf.at("measured"))
    {
        detail::reject_unknown_keys(jm, {"label", "freq_ghz"}, "measured entry");
        measured.emplace_back(jm.at("label").get<std::string>(),
                              detail::require_number(jm, "freq_ghz", "measured entry") * 1e9);
    }

    const std::string artifact = stem_of(freqs_arg) + ".gap.json";
    RunManifest manifest = make_manifest("infer-gap", opts, {table_arg, freqs_arg}, {artifact});

    const GapEstimate est = infer_gap(table, measured);
    json out;
    out["manifest_hash"] = manifest.hash_hex();
    out["gap_um"] = est.gap * 1e6;
    out["rms_mismatch"] = est.rms_mismatch;
    out["mismatch_flag"] = est.mismatch_flag;
    out["per_mode_mismatch"] = json::array();
    for (const auto &[label, mismatch] : est.per_mode_mismatch)
        out["per_mode_mismatch"].push_back({{"mode", label}, {"fractional_mismatch", mismatch}});
    write_text(fs::path(opts.out_dir) / artifact, out.dump(2) + "\n");
    write_manifest(manifest, opts);

    std::printf("gap = %.4g um, rms mismatch = %.3g%%%s\n", est.gap * 1e6, est.rms_mismatch * 100.0,
                est.mismatch_flag ? " [exceeds 5% match quality]" : "");
    return 0;
}

int run_fixtures(const std::string &name)
{
    if (name.empty())
    {
        for (const auto &id : fixtures::device_ids())
            std::printf("%s\n", id.c_str());
        std::printf("P_FWGMR\nP_ellip\ngaptable\n");
        return 0;
    }
    if (name == "P_FWGMR" || name == "P_ellip")
    {
        std::printf("%s\n",
                    participation_to_json(fixtures::builtin_participation_matrix(name), name)
                        .dump(2)
                        .c_str());
        return 0;
    }
    if (name == "gaptable")
    {
        std::printf("%s\n", gap_table_to_json(fixtures::builtin_gap_table(), true).dump(2).c_str());
        return 0;
    }
    std::printf("%s\n", device_to_json(fixtures::builtin_device(name)).dump(2).c_str());
    return 0;
}

void emit_error(const std::string &type, const std::string &message)
{
    json err;
    err["error"] = {{"type", type}, {"message", message}};
    std::cerr << err.dump() << "\n";
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"material microwave-loss extraction from multi-mode resonator data"};
    app.set_version_flag("--version", std::string(kVersion));
    app.fallthrough(); // global options may follow a subcommand

    GlobalOptions opts;
    std::string config_file;
    bool show_config = false;
    std::vector<std::string> eps_values;

    app.add_option("--config", config_file, "JSON config file (flags take precedence)");
    auto *out_opt = app.add_option("--out", opts.out_dir, "output directory");
    auto *seed_opt = app.add_option("--seed", opts.seed, "Monte-Carlo seed");
    auto *mc_opt = app.add_option("--mc-samples", opts.mc_samples, "Monte-Carlo sample count");
    auto *rule_opt = app.add_option("--bound-rule", opts.bound_rule,
                                    "two_sigma_capped | mc_percentile | sigma_crossing");
    auto *pct_opt = app.add_option("--bound-percentile", opts.bound_percentile,
                                   "percentile for mc_percentile bounds");
    auto *thr_opt = app.add_option("--threads", opts.threads, "worker threads (0 = hardware)");
    auto *fmt_opt = app.add_option("--format", opts.format, "stdout table format: json | csv");
    app.add_option("--eps-y", eps_values,
                   "relative loss-rate uncertainty: number (all modes) or MODE=value");
    app.add_flag("--show-config", show_config, "print the effective configuration and exit");

    std::string extract_device;
    auto *cmd_extract = app.add_subcommand("extract", "extract material loss factors from a device");
    cmd_extract->add_option("device", extract_device, "device JSON path or fixtures://ID")->required();

    std::string sens_pmatrix, sens_channel, sens_plane;
    std::vector<std::string> sens_fixed, sens_ranges;
    int sens_points = 50;
    auto *cmd_sens = app.add_subcommand("sensitivity", "map sigma_x/x over a loss-space plane");
    cmd_sens->add_option("pmatrix", sens_pmatrix, "participation JSON path or fixtures://P_*")
        ->required();
    cmd_sens->add_option("--channel", sens_channel, "channel under test: r_s | tan_delta | r_seam")
        ->required();
    cmd_sens->add_option("--plane", sens_plane, "swept channels, e.g. r_s,tan_delta");
    cmd_sens->add_option("--fixed", sens_fixed, "fixed channel values, e.g. r_seam=1e-4");
    cmd_sens->add_option("--range", sens_ranges, "sweep range override, e.g. r_s=1e-9:1e-3");
    cmd_sens->add_option("--points", sens_points, "grid points per axis");

    std::string predict_pmatrix, predict_losses;
    auto *cmd_predict = app.add_subcommand("predict", "predict per-mode quality factors");
    cmd_predict->add_option("pmatrix", predict_pmatrix, "participation JSON path or fixtures://P_*")
        ->required();
    cmd_predict->add_option("losses", predict_losses, "material losses JSON")->required();

    std::string budget_pmatrix, budget_losses;
    auto *cmd_budget = app.add_subcommand("budget", "per-mode loss-budget fractions");
    cmd_budget->add_option("pmatrix", budget_pmatrix, "participation JSON path or fixtures://P_*")
        ->required();
    cmd_budget->add_option("losses", budget_losses, "material losses JSON")->required();

    std::string fit_trace;
    double fit_eps_floor = 0.05;
    auto *cmd_fit = app.add_subcommand("fit-spectrum", "circle-fit a complex reflection trace");
    cmd_fit->add_option("trace", fit_trace, "trace CSV (frequency_hz,re_s11,im_s11) or JSON")
        ->required();
    cmd_fit->add_option("--eps-floor", fit_eps_floor, "uncertainty floor for the derived measurement");

    std::string gap_table, gap_freqs;
    auto *cmd_gap = app.add_subcommand("infer-gap", "infer assembly gap from mode frequencies");
    cmd_gap->add_option("gaptable", gap_table, "gap table JSON or fixtures://gaptable")->required();
    cmd_gap->add_option("freqs", gap_freqs, "measured frequencies JSON")->required();

    std::string fixture_name;
    auto *cmd_fixtures = app.add_subcommand("fixtures", "list or dump bundled data");
    cmd_fixtures->add_option("name", fixture_name, "fixture to dump (empty: list all)");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp &e)
    {
        return app.exit(e);
    }
    catch (const CLI::CallForVersion &e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError &e)
    {
        emit_error("usage", e.what());
        return 1;
    }

    try
    {
        // precedence: built-in defaults < config file < explicit flags
        if (!config_file.empty())
        {
            GlobalOptions defaults;
            GlobalOptions from_file = defaults;
            apply_config_file(from_file, config_file);
            if (out_opt->count() == 0)
                opts.out_dir = from_file.out_dir;
            if (seed_opt->count() == 0)
                opts.seed = from_file.seed;
            if (mc_opt->count() == 0)
                opts.mc_samples = from_file.mc_samples;
            if (rule_opt->count() == 0)
                opts.bound_rule = from_file.bound_rule;
            if (pct_opt->count() == 0)
                opts.bound_percentile = from_file.bound_percentile;
            if (thr_opt->count() == 0)
                opts.threads = from_file.threads;
            if (fmt_opt->count() == 0)
                opts.format = from_file.format;
            opts.eps_global = from_file.eps_global;
            opts.eps_per_mode = from_file.eps_per_mode;
        }
        parse_eps_option(opts, eps_values);

        if (show_config)
        {
            json j = opts.to_json();
            j["defaults"] = default_config_json();
            std::printf("%s\n", j.dump(2).c_str());
            return 0;
        }

        if (cmd_extract->parsed())
            return run_extract(extract_device, opts);
        if (cmd_sens->parsed())
            return run_sensitivity(sens_pmatrix, sens_channel, sens_plane, sens_fixed, sens_ranges,
                                   sens_points, opts);
        if (cmd_predict->parsed())
            return run_predict(predict_pmatrix, predict_losses, opts, false);
        if (cmd_budget->parsed())
            return run_predict(budget_pmatrix, budget_losses, opts, true);
        if (cmd_fit->parsed())
            return run_fit_spectrum(fit_trace, fit_eps_floor, opts);
        if (cmd_gap->parsed())
            return run_infer_gap(gap_table, gap_freqs, opts);
        if (cmd_fixtures->parsed())
            return run_fixtures(fixture_name);

        emit_error("usage", "no subcommand given; see --help");
        return 1;
    }
    catch (const ValidationError &e)
    {
        emit_error("validation", e.what());
        return 1;
    }
    catch (const SolverError &e)
    {
        emit_error("solver", e.what());
        return 2;
    }
    catch (const IoError &e)
    {
        emit_error("io", e.what());
        return 3;
    }
    catch (const std::exception &e)
    {
        emit_error("internal", e.what());
        return 2;
    }
}
