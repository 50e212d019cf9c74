#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resolveq/detail/parallel.hpp"
#include "resolveq/errors.hpp"
#include "resolveq/extraction.hpp"
#include "resolveq/loss_model.hpp"

namespace resolveq
{

// Slice values quoted in the sensitivity-map captions, plus the plateau
// values at which each channel's resolvability boundary has flattened out
// (the contour is insensitive to further reduction of the other channels).
inline constexpr double kSliceSeamResistance = 1e-4;      // ohm*m, for R_s and tan_delta maps
inline constexpr double kSliceLossTangent = 5e-2;         // for r_seam maps
inline constexpr double kPlateauSurfaceResistance = 1e-8; // ohm
inline constexpr double kPlateauLossTangent = 1e-6;

// Canonical fixed values for a minimum-resolvable scan of `channel`.
inline Eigen::Vector3d default_fixed_values(int channel)
{
    switch (channel)
    {
    case 0: return {0.0, kPlateauLossTangent, kSliceSeamResistance};
    case 1: return {kPlateauSurfaceResistance, 0.0, kSliceSeamResistance};
    case 2: return {kPlateauSurfaceResistance, kSliceLossTangent, 0.0};
    default: throw ValidationError("channel index out of range");
    }
}

// Relative uncertainty sigma_x/x of one material loss factor at point x.
inline double relative_uncertainty_at(const ParticipationMatrix &p, const Eigen::VectorXd &eps_y,
                                      const Eigen::VectorXd &x, int channel)
{
    if (channel < 0 || channel >= p.channels())
        throw ValidationError("channel index out of range");
    if (!(x[channel] > 0.0))
        throw ValidationError("relative uncertainty undefined at x_i = 0");
    const Eigen::MatrixXd c = covariance_at(p, eps_y, x);
    return std::sqrt(c(channel, channel)) / x[channel];
}

struct SensitivityGridSpec
{
    int channel_under_test = 0;
    std::array<int, 2> sweep_channels{0, 1};
    std::array<double, 2> sweep_min{};
    std::array<double, 2> sweep_max{};
    std::array<int, 2> sweep_points{50, 50};
    Eigen::VectorXd fixed_values; // per channel; swept entries ignored
    Eigen::VectorXd eps_y;        // per mode

    void validate(int channels, int modes) const
    {
        if (channel_under_test < 0 || channel_under_test >= channels)
            throw ValidationError("channel_under_test out of range");
        if (sweep_channels[0] == sweep_channels[1])
            throw ValidationError("swept channels must be distinct");
        for (int s = 0; s < 2; ++s)
        {
            if (sweep_channels[s] < 0 || sweep_channels[s] >= channels)
                throw ValidationError("swept channel out of range");
            if (!(sweep_min[s] > 0.0 && sweep_min[s] < sweep_max[s]))
                throw ValidationError("sweep range must satisfy 0 < min < max");
            if (sweep_points[s] < 2)
                throw ValidationError("sweep needs >= 2 points per axis");
        }
        if (fixed_values.size() != channels)
            throw ValidationError("fixed_values needs one entry per channel");
        if (eps_y.size() != modes)
            throw ValidationError("eps_y needs one entry per mode");
    }
};

struct SensitivityGrid
{
    SensitivityGridSpec spec;
    std::vector<double> axis1; // log-spaced values of sweep_channels[0]
    std::vector<double> axis2; // log-spaced values of sweep_channels[1]
    Eigen::MatrixXd values;    // values(i1, i2) = sigma_x/x at (axis1[i1], axis2[i2])
    // sigma_x/x = 1 crossings: (axis1 value, root along axis2), one scan per
    // axis1 column, possibly several crossings each. Empty when the whole
    // plane is on one side.
    std::vector<std::array<double, 2>> boundary;
};

namespace detail
{

inline std::vector<double> log_axis(double lo, double hi, int n)
{
    std::vector<double> v(static_cast<std::size_t>(n));
    const double llo = std::log10(lo), lhi = std::log10(hi);
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = std::pow(10.0, llo + (lhi - llo) * i / (n - 1));
    return v;
}

} // namespace detail

// Evaluate sigma_x/x over a log-spaced plane and extract the resolvability
// boundary by per-column bisection (tolerance 1e-3 in log coordinate).
inline SensitivityGrid sensitivity_grid(const ParticipationMatrix &p, const SensitivityGridSpec &spec,
                                        int threads = 0)
{
    spec.validate(p.channels(), p.rows());
    SensitivityGrid grid;
    grid.spec = spec;
    grid.axis1 = detail::log_axis(spec.sweep_min[0], spec.sweep_max[0], spec.sweep_points[0]);
    grid.axis2 = detail::log_axis(spec.sweep_min[1], spec.sweep_max[1], spec.sweep_points[1]);
    const int n1 = spec.sweep_points[0];
    const int n2 = spec.sweep_points[1];
    grid.values.resize(n1, n2);

    auto value_at = [&](double v1, double v2) {
        Eigen::VectorXd x = spec.fixed_values;
        x[spec.sweep_channels[0]] = v1;
        x[spec.sweep_channels[1]] = v2;
        return relative_uncertainty_at(p, spec.eps_y, x, spec.channel_under_test);
    };

    detail::parallel_for(n1 * n2, threads, [&](int node) {
        const int i1 = node / n2;
        const int i2 = node % n2;
        grid.values(i1, i2) = value_at(grid.axis1[static_cast<std::size_t>(i1)],
                                       grid.axis2[static_cast<std::size_t>(i2)]);
    });

    for (int i1 = 0; i1 < n1; ++i1)
    {
        const double v1 = grid.axis1[static_cast<std::size_t>(i1)];
        for (int i2 = 0; i2 + 1 < n2; ++i2)
        {
            const double f_lo = grid.values(i1, i2) - 1.0;
            const double f_hi = grid.values(i1, i2 + 1) - 1.0;
            if (f_lo == 0.0)
            {
                grid.boundary.push_back({v1, grid.axis2[static_cast<std::size_t>(i2)]});
                continue;
            }
            if (f_lo * f_hi >= 0.0)
                continue;
            double a = grid.axis2[static_cast<std::size_t>(i2)];
            double b = grid.axis2[static_cast<std::size_t>(i2 + 1)];
            double fa = f_lo;
            double mid = std::sqrt(a * b);
            for (int it = 0; it < 200; ++it)
            {
                mid = std::sqrt(a * b);
                const double fm = value_at(v1, mid) - 1.0;
                if (std::log10(b / a) < 1e-3 && std::abs(fm) < 1e-3)
                    break;
                if ((fa > 0.0) == (fm > 0.0))
                {
                    a = mid;
                    fa = fm;
                }
                else
                {
                    b = mid;
                }
            }
            grid.boundary.push_back({v1, mid});
        }
    }
    return grid;
}

// Smallest value of `channel` with sigma_x/x = 1, other channels held at
// fixed_values (plateau slice). Root-found by bisection in log space to 0.1%.
// Returns nullopt when sigma/x - 1 never changes sign over the range (the
// channel is resolvable, or unresolvable, everywhere in range).
inline std::optional<double> minimum_resolvable(const ParticipationMatrix &p, const Eigen::VectorXd &eps_y,
                                                int channel, const Eigen::VectorXd &fixed_values,
                                                double search_lo, double search_hi)
{
    if (!(search_lo > 0.0 && search_lo < search_hi))
        throw ValidationError("search range must satisfy 0 < lo < hi");
    auto excess = [&](double v) {
        Eigen::VectorXd x = fixed_values;
        x[channel] = v;
        return relative_uncertainty_at(p, eps_y, x, channel) - 1.0;
    };
    const int decades = std::max(1, static_cast<int>(std::ceil(std::log10(search_hi / search_lo))));
    const int scan = std::max(64, 25 * decades);
    double prev_v = search_lo;
    double prev_f = excess(search_lo);
    for (int i = 1; i <= scan; ++i)
    {
        const double v = search_lo * std::pow(search_hi / search_lo, static_cast<double>(i) / scan);
        const double f = excess(v);
        if (prev_f > 0.0 && f <= 0.0)
        {
            double a = prev_v, b = v;
            while (b / a > 1.0 + 1e-3)
            {
                const double mid = std::sqrt(a * b);
                (excess(mid) > 0.0 ? a : b) = mid;
            }
            return std::sqrt(a * b);
        }
        prev_v = v;
        prev_f = f;
    }
    return std::nullopt;
}

inline std::optional<double> minimum_resolvable(const ParticipationMatrix &p, const Eigen::VectorXd &eps_y,
                                                int channel, double search_lo, double search_hi)
{
    return minimum_resolvable(p, eps_y, channel, Eigen::VectorXd(default_fixed_values(channel)),
                              search_lo, search_hi);
}

// CSV emitters consumed by external plotting.
inline void write_grid_csv(const SensitivityGrid &grid, std::ostream &os)
{
    os << "swept1,swept2,sigma_over_x\n";
    char buf[128];
    for (int i1 = 0; i1 < grid.values.rows(); ++i1)
    {
        for (int i2 = 0; i2 < grid.values.cols(); ++i2)
        {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n",
                          grid.axis1[static_cast<std::size_t>(i1)],
                          grid.axis2[static_cast<std::size_t>(i2)], grid.values(i1, i2));
            os << buf;
        }
    }
}

inline void write_boundary_csv(const SensitivityGrid &grid, std::ostream &os)
{
    os << "swept1,swept2\n";
    char buf[96];
    for (const auto &pt : grid.boundary)
    {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", pt[0], pt[1]);
        os << buf;
    }
}

} // namespace resolveq
