#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "resolveq/detail/parallel.hpp"
#include "resolveq/detail/rng.hpp"
#include "resolveq/errors.hpp"
#include "resolveq/loss_model.hpp"
#include "resolveq/nnls.hpp"

namespace resolveq
{

// How the value of an upper bound is computed for unresolved channels.
//
//  two_sigma_capped (default): min(max(x_wls, 0) + 2*sqrt(C_ii), ceiling)
//      where ceiling = min_j y_j / P_ji is the attribution ceiling implied by
//      y = P x with x >= 0 (no channel can exceed it without over-predicting
//      some mode's total loss). When the constrained fit leaves at most one
//      channel free, the remaining single-channel model typically misfits the
//      data and the Gaussian covariance is meaningless; every channel is then
//      reported as an upper bound at its attribution ceiling.
//  mc_percentile: percentile of the Monte-Carlo distribution. Collapses to 0
//      for hard-clamped channels.
//  sigma_crossing: smallest v with sqrt(C_ii(x; x_i=v)) = v, the resolvability
//      boundary evaluated at the extracted operating point.
enum class BoundRule
{
    two_sigma_capped,
    mc_percentile,
    sigma_crossing,
};

inline const char *to_string(BoundRule rule)
{
    switch (rule)
    {
    case BoundRule::two_sigma_capped: return "two_sigma_capped";
    case BoundRule::mc_percentile: return "mc_percentile";
    case BoundRule::sigma_crossing: return "sigma_crossing";
    }
    return "?";
}

inline BoundRule bound_rule_from_string(const std::string &name)
{
    if (name == "two_sigma_capped")
        return BoundRule::two_sigma_capped;
    if (name == "mc_percentile")
        return BoundRule::mc_percentile;
    if (name == "sigma_crossing")
        return BoundRule::sigma_crossing;
    throw ValidationError("unknown bound rule '" + name + "'");
}

struct ExtractionConfig
{
    int mc_samples = 5000;
    std::uint64_t seed = 0;
    BoundRule bound_rule = BoundRule::two_sigma_capped;
    double bound_percentile = 0.95;      // used by BoundRule::mc_percentile
    double rank_tolerance = 1e-10;       // relative to the largest singular value
    double mass_at_zero_threshold = 0.05;
    int nnls_iteration_factor = 3;       // insertion cap = factor * channels
    double nnls_tolerance = 1e-12;
    int threads = 0;                     // 0 = hardware; RESOLVEQ_THREADS caps

    void validate() const
    {
        if (mc_samples < 100)
            throw ValidationError("mc_samples must be >= 100");
        if (!(bound_percentile > 0.5 && bound_percentile < 1.0))
            throw ValidationError("bound percentile must lie in (0.5, 1)");
        if (!(rank_tolerance > 0.0))
            throw ValidationError("rank_tolerance must be > 0");
        if (!(mass_at_zero_threshold >= 0.0 && mass_at_zero_threshold < 1.0))
            throw ValidationError("mass_at_zero_threshold must lie in [0, 1)");
        if (nnls_iteration_factor < 1)
            throw ValidationError("nnls_iteration_factor must be >= 1");
    }
};

enum class ChannelStatus
{
    resolved,
    upper_bound,
};

struct ChannelClassification
{
    ChannelStatus status = ChannelStatus::resolved;
    double estimate = 0.0;              // constrained point estimate
    double sigma = 0.0;                 // sqrt(C_ii)
    std::optional<double> upper_bound;  // set when status == upper_bound
};

struct ExtractionResult
{
    std::vector<std::string> mode_labels;
    Eigen::VectorXd x_nnls;          // constrained point estimate
    Eigen::VectorXd x_unconstrained; // analytic solution, may be negative
    Eigen::MatrixXd covariance;      // (P~^T P~)^-1, SI units
    Eigen::VectorXd mc_mean;
    Eigen::VectorXd mc_std;
    Eigen::VectorXd mass_at_zero;    // fraction of samples clamped at 0 per channel
    std::vector<std::vector<double>> mc_sorted; // per-channel sorted samples
    std::vector<ChannelClassification> classification;
    Eigen::VectorXd residuals;       // P x_nnls - y, per mode

    MaterialLossVector x_hat() const { return MaterialLossVector::from_vector(x_nnls); }

    // Linear-interpolation quantile of the Monte-Carlo samples.
    double mc_quantile(int channel, double p) const
    {
        const auto &s = mc_sorted.at(static_cast<std::size_t>(channel));
        if (s.empty())
            throw ValidationError("no Monte-Carlo samples stored");
        if (p <= 0.0)
            return s.front();
        if (p >= 1.0)
            return s.back();
        const double pos = p * static_cast<double>(s.size() - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        if (lo + 1 >= s.size())
            return s.back();
        return s[lo] * (1.0 - frac) + s[lo + 1] * frac;
    }
};

namespace detail
{

struct WeightedSystem
{
    Eigen::MatrixXd p;       // raw participation rows
    Eigen::MatrixXd p_tilde; // rows divided by sigma_y
    Eigen::VectorXd y;       // measured loss rates 1/Q
    Eigen::VectorXd sigma_y;
    Eigen::VectorXd b;       // y / sigma_y
    Eigen::VectorXd eps_y;
    std::vector<std::string> labels;
};

inline WeightedSystem build_weighted_system(const ParticipationMatrix &p,
                                            const std::vector<ModeMeasurement> &measurements)
{
    p.validate();
    if (static_cast<int>(measurements.size()) != p.rows())
        throw ValidationError("got " + std::to_string(measurements.size()) + " measurements for " +
                              std::to_string(p.rows()) + " participation rows");
    if (p.rows() < p.channels())
        throw ValidationError("need at least " + std::to_string(p.channels()) + " modes, got " +
                              std::to_string(p.rows()));
    WeightedSystem sys;
    sys.p = p.matrix();
    sys.labels = p.labels();
    const int m = p.rows();
    sys.y.resize(m);
    sys.sigma_y.resize(m);
    sys.eps_y.resize(m);
    for (int i = 0; i < m; ++i)
    {
        const ModeMeasurement &mm = measurements[static_cast<std::size_t>(i)];
        mm.validate();
        if (mm.label != sys.labels[static_cast<std::size_t>(i)])
            throw ValidationError("measurement '" + mm.label + "' does not match participation row '" +
                                  sys.labels[static_cast<std::size_t>(i)] + "' (order must agree)");
        sys.y[i] = mm.loss_rate();
        sys.sigma_y[i] = mm.loss_rate_sigma();
        sys.eps_y[i] = mm.q_int_rel_sigma;
    }
    sys.p_tilde = sys.sigma_y.cwiseInverse().asDiagonal() * sys.p;
    sys.b = sys.y.cwiseQuotient(sys.sigma_y);
    return sys;
}

// Rank guard. On failure the message names the rows that are nearly
// linearly dependent (pairwise, by angle), or all rows if the deficiency
// is collective.
inline void require_full_rank(const Eigen::MatrixXd &weighted, const std::vector<std::string> &labels,
                              double rel_tolerance)
{
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(weighted);
    const auto &sv = svd.singularValues();
    const double cutoff = rel_tolerance * sv[0];
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        rank += sv[i] > cutoff ? 1 : 0;
    if (rank >= weighted.cols())
        return;

    std::string culprits;
    for (Eigen::Index i = 0; i < weighted.rows(); ++i)
    {
        for (Eigen::Index j = i + 1; j < weighted.rows(); ++j)
        {
            const double denom = weighted.row(i).norm() * weighted.row(j).norm();
            if (denom <= 0.0)
                continue;
            const double cosine = std::abs(weighted.row(i).dot(weighted.row(j))) / denom;
            if (cosine > 0.9999)
            {
                if (!culprits.empty())
                    culprits += ", ";
                culprits += "'" + labels[static_cast<std::size_t>(i)] + "'/'" +
                            labels[static_cast<std::size_t>(j)] + "'";
            }
        }
    }
    std::string msg = "weighted participation matrix is rank " + std::to_string(rank) + " < " +
                      std::to_string(weighted.cols());
    if (!culprits.empty())
        msg += "; nearly dependent rows: " + culprits;
    else
    {
        msg += "; rows {";
        for (std::size_t i = 0; i < labels.size(); ++i)
            msg += (i ? ", '" : "'") + labels[i] + "'";
        msg += "} are collectively rank-deficient";
    }
    throw SolverError(msg);
}

inline Eigen::MatrixXd covariance_from_weighted(const Eigen::MatrixXd &p_tilde)
{
    const Eigen::MatrixXd ptp = p_tilde.transpose() * p_tilde;
    return ptp.ldlt().solve(Eigen::MatrixXd::Identity(ptp.rows(), ptp.cols()));
}

} // namespace detail

// Analytic weighted least squares: x = C P~^T b, C = (P~^T P~)^-1.
// The solution is unconstrained and may contain negative components.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> weighted_lsq_solve(
    const ParticipationMatrix &p, const std::vector<ModeMeasurement> &measurements,
    double rank_tolerance = 1e-10)
{
    const auto sys = detail::build_weighted_system(p, measurements);
    detail::require_full_rank(sys.p_tilde, sys.labels, rank_tolerance);
    const Eigen::MatrixXd c = detail::covariance_from_weighted(sys.p_tilde);
    return {c * (sys.p_tilde.transpose() * sys.b), c};
}

// Covariance of Eq. (P~^T P~)^-1 evaluated at a hypothetical loss point x,
// with sigma_y,i = eps_y,i * (P x)_i. Every mode must have nonzero predicted
// loss at x.
inline Eigen::MatrixXd covariance_at(const ParticipationMatrix &p, const Eigen::VectorXd &eps_y,
                                     const Eigen::VectorXd &x, double rank_tolerance = 1e-10)
{
    p.validate();
    if (eps_y.size() != p.rows())
        throw ValidationError("eps_y needs one entry per mode");
    const Eigen::VectorXd y = forward_loss_rates(p, x);
    for (Eigen::Index i = 0; i < y.size(); ++i)
    {
        if (!(y[i] > 0.0))
            throw ValidationError("mode '" + p.labels()[static_cast<std::size_t>(i)] +
                                  "' has zero predicted loss at this point");
        if (!(eps_y[i] > 0.0))
            throw ValidationError("eps_y must be > 0");
    }
    const Eigen::VectorXd sigma = eps_y.cwiseProduct(y);
    const Eigen::MatrixXd p_tilde = sigma.cwiseInverse().asDiagonal() * p.matrix();
    detail::require_full_rank(p_tilde, p.labels(), rank_tolerance);
    return detail::covariance_from_weighted(p_tilde);
}

// Constrained solve of the weighted system: min ||P~ x - b|| s.t. x >= 0.
inline MaterialLossVector nnls_solve(const ParticipationMatrix &p,
                                     const std::vector<ModeMeasurement> &measurements,
                                     const ExtractionConfig &config = {})
{
    config.validate();
    const auto sys = detail::build_weighted_system(p, measurements);
    detail::require_full_rank(sys.p_tilde, sys.labels, config.rank_tolerance);
    NnlsOptions opt;
    opt.max_iterations = config.nnls_iteration_factor * p.channels();
    opt.tolerance = config.nnls_tolerance;
    return MaterialLossVector::from_vector(nnls(sys.p_tilde, sys.b, opt));
}

namespace detail
{

// Attribution ceiling for channel i: min_j y_j / P_ji over modes that
// participate. With x >= 0, predicted loss P_ji x_i alone may not exceed any
// mode's total measured loss.
inline double attribution_ceiling(const Eigen::MatrixXd &p, const Eigen::VectorXd &y, Eigen::Index channel)
{
    double ceiling = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < p.rows(); ++j)
    {
        if (p(j, channel) > 0.0)
            ceiling = std::min(ceiling, y[j] / p(j, channel));
    }
    return ceiling;
}

// Smallest v > 0 with sqrt(C_ii(x; x_i = v)) = v; other channels pinned at
// x_base. Returns nullopt if the crossing does not exist in the search range.
inline std::optional<double> sigma_crossing_bound(const ParticipationMatrix &p,
                                                  const Eigen::VectorXd &eps_y,
                                                  const Eigen::VectorXd &x_base, int channel,
                                                  double ceiling_hint)
{
    const double scale = std::isfinite(ceiling_hint) && ceiling_hint > 0.0 ? ceiling_hint : 1.0;
    const double lo_edge = scale * 1e-12;
    const double hi_edge = scale * 1e6;
    auto excess = [&](double v) -> std::optional<double> {
        Eigen::VectorXd x = x_base;
        x[channel] = v;
        try
        {
            const Eigen::MatrixXd c = covariance_at(p, eps_y, x);
            return std::sqrt(c(channel, channel)) / v - 1.0;
        }
        catch (const std::exception &)
        {
            return std::nullopt;
        }
    };
    const int scan = 200;
    double prev_v = 0.0;
    std::optional<double> prev_f;
    for (int i = 0; i <= scan; ++i)
    {
        const double v = lo_edge * std::pow(hi_edge / lo_edge, static_cast<double>(i) / scan);
        const auto f = excess(v);
        if (prev_f && f && *prev_f > 0.0 && *f <= 0.0)
        {
            double a = prev_v, b = v;
            for (int it = 0; it < 200 && b / a > 1.0 + 1e-12; ++it)
            {
                const double mid = std::sqrt(a * b);
                const auto fm = excess(mid);
                if (!fm)
                    break;
                (*fm > 0.0 ? a : b) = mid;
            }
            return std::sqrt(a * b);
        }
        prev_v = v;
        prev_f = f;
    }
    return std::nullopt;
}

} // namespace detail

// Classify each channel as resolved or upper-bounded and attach bound values.
// A channel is resolved iff sqrt(C_ii)/x_hat_i < 1 and the Monte-Carlo mass at
// zero stays below the configured threshold. Under the default rule, a fit
// that pins all but at most one channel reports every channel as a bound (see
// BoundRule).
inline void classify_and_bound(const ParticipationMatrix &p, const std::vector<ModeMeasurement> &measurements,
                               ExtractionResult &result, const ExtractionConfig &config = {})
{
    config.validate();
    const auto sys = detail::build_weighted_system(p, measurements);
    const int k = p.channels();
    result.classification.assign(static_cast<std::size_t>(k), {});

    int free_channels = 0;
    for (int i = 0; i < k; ++i)
        free_channels += result.x_nnls[i] > 0.0 ? 1 : 0;
    const bool degenerate_fit =
        config.bound_rule == BoundRule::two_sigma_capped && free_channels <= 1;

    for (int i = 0; i < k; ++i)
    {
        ChannelClassification &cls = result.classification[static_cast<std::size_t>(i)];
        cls.estimate = result.x_nnls[i];
        cls.sigma = std::sqrt(result.covariance(i, i));

        const bool sigma_resolved = cls.estimate > 0.0 && cls.sigma / cls.estimate < 1.0;
        const bool mc_resolved = result.mass_at_zero[i] < config.mass_at_zero_threshold;
        if (sigma_resolved && mc_resolved && !degenerate_fit)
        {
            cls.status = ChannelStatus::resolved;
            continue;
        }

        cls.status = ChannelStatus::upper_bound;
        const double ceiling = detail::attribution_ceiling(sys.p, sys.y, i);
        switch (config.bound_rule)
        {
        case BoundRule::two_sigma_capped:
        {
            if (degenerate_fit)
            {
                cls.upper_bound = ceiling;
                break;
            }
            const double gaussian = std::max(result.x_unconstrained[i], 0.0) + 2.0 * cls.sigma;
            cls.upper_bound = std::min(gaussian, ceiling);
            break;
        }
        case BoundRule::mc_percentile:
            cls.upper_bound = result.mc_quantile(i, config.bound_percentile);
            break;
        case BoundRule::sigma_crossing:
        {
            const auto crossing =
                detail::sigma_crossing_bound(p, sys.eps_y, result.x_nnls, i, ceiling);
            cls.upper_bound = crossing.value_or(ceiling);
            break;
        }
        }
    }
}

// Full extraction: analytic solution and covariance, constrained point
// estimate, Monte-Carlo distributions with per-sample seeding (bit-identical
// for a given seed regardless of thread count), classification and residuals.
inline ExtractionResult monte_carlo_extract(const ParticipationMatrix &p,
                                            const std::vector<ModeMeasurement> &measurements,
                                            const ExtractionConfig &config = {})
{
    config.validate();
    const auto sys = detail::build_weighted_system(p, measurements);
    detail::require_full_rank(sys.p_tilde, sys.labels, config.rank_tolerance);

    ExtractionResult result;
    result.mode_labels = sys.labels;
    const Eigen::MatrixXd c = detail::covariance_from_weighted(sys.p_tilde);
    result.covariance = c;
    result.x_unconstrained = c * (sys.p_tilde.transpose() * sys.b);

    NnlsOptions nnls_opt;
    nnls_opt.max_iterations = config.nnls_iteration_factor * p.channels();
    nnls_opt.tolerance = config.nnls_tolerance;
    result.x_nnls = nnls(sys.p_tilde, sys.b, nnls_opt);
    result.residuals = sys.p * result.x_nnls - sys.y;

    const int n = config.mc_samples;
    const int k = p.channels();
    const int m = static_cast<int>(sys.y.size());
    Eigen::MatrixXd samples(n, k);
    std::vector<unsigned char> failed(static_cast<std::size_t>(n), 0);

    detail::parallel_for(n, config.threads, [&](int s) {
        detail::NormalSampler normal(detail::engine_for(config.seed, static_cast<std::uint64_t>(s)));
        Eigen::VectorXd b_sample(m);
        bool ok = true;
        for (int i = 0; i < m && ok; ++i)
        {
            double y_draw = 0.0;
            int redraws = 0;
            do
            {
                y_draw = sys.y[i] + sys.sigma_y[i] * normal();
                if (++redraws > 1000)
                {
                    ok = false;
                    break;
                }
            } while (y_draw <= 0.0);
            b_sample[i] = y_draw / sys.sigma_y[i];
        }
        if (ok)
        {
            try
            {
                samples.row(s) = nnls(sys.p_tilde, b_sample, nnls_opt).transpose();
            }
            catch (const SolverError &)
            {
                ok = false;
            }
        }
        failed[static_cast<std::size_t>(s)] = ok ? 0 : 1;
    });

    int failures = 0;
    for (auto f : failed)
        failures += f;
    if (failures * 100 > n)
        throw SolverError("Monte-Carlo extraction: " + std::to_string(failures) + " of " +
                          std::to_string(n) + " samples failed (limit 1%)");

    const int good = n - failures;
    result.mc_mean = Eigen::VectorXd::Zero(k);
    result.mc_std = Eigen::VectorXd::Zero(k);
    result.mass_at_zero = Eigen::VectorXd::Zero(k);
    result.mc_sorted.assign(static_cast<std::size_t>(k), {});
    for (int j = 0; j < k; ++j)
        result.mc_sorted[static_cast<std::size_t>(j)].reserve(static_cast<std::size_t>(good));
    for (int s = 0; s < n; ++s)
    {
        if (failed[static_cast<std::size_t>(s)])
            continue;
        for (int j = 0; j < k; ++j)
            result.mc_sorted[static_cast<std::size_t>(j)].push_back(samples(s, j));
    }
    for (int j = 0; j < k; ++j)
    {
        auto &v = result.mc_sorted[static_cast<std::size_t>(j)];
        std::sort(v.begin(), v.end());
        double mean = 0.0;
        for (double s : v)
            mean += s;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double s : v)
            var += (s - mean) * (s - mean);
        var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
        result.mc_mean[j] = mean;
        result.mc_std[j] = std::sqrt(var);
        std::size_t zeros = 0;
        for (double s : v)
            zeros += s <= 0.0 ? 1 : 0;
        result.mass_at_zero[j] = static_cast<double>(zeros) / static_cast<double>(v.size());
    }

    classify_and_bound(p, measurements, result, config);
    return result;
}

// Independent extraction per power point; mode ordering must agree across
// points. Per-point seeds derive from (seed, point index).
inline std::vector<std::pair<double, ExtractionResult>> power_sweep_extract(
    const ParticipationMatrix &p,
    const std::vector<std::pair<double, std::vector<ModeMeasurement>>> &sweep,
    const ExtractionConfig &config = {})
{
    config.validate();
    if (sweep.empty())
        throw ValidationError("power sweep is empty");
    const auto &reference = sweep.front().second;
    for (const auto &[nbar, ms] : sweep)
    {
        if (ms.size() != reference.size())
            throw ValidationError("inconsistent mode sets across power points");
        for (std::size_t i = 0; i < ms.size(); ++i)
        {
            if (ms[i].label != reference[i].label)
                throw ValidationError("inconsistent mode ordering across power points: '" +
                                      ms[i].label + "' vs '" + reference[i].label + "'");
        }
    }
    std::vector<std::pair<double, ExtractionResult>> out;
    out.reserve(sweep.size());
    for (std::size_t i = 0; i < sweep.size(); ++i)
    {
        ExtractionConfig point_config = config;
        point_config.seed = detail::mix_seed(config.seed, 0x9d39247e33776d41ULL + i);
        out.emplace_back(sweep[i].first, monte_carlo_extract(p, sweep[i].second, point_config));
    }
    return out;
}

} // namespace resolveq
