#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resolveq/detail/rng.hpp"
#include "resolveq/errors.hpp"
#include "resolveq/loss_model.hpp"

namespace resolveq
{

// Frequency-indexed complex reflection samples of one resonance.
struct ReflectionTrace
{
    std::vector<double> frequency; // Hz, strictly increasing
    std::vector<std::complex<double>> s11;
    std::optional<double> photon_number; // drive metadata

    void validate() const
    {
        if (frequency.size() != s11.size())
            throw ValidationError("trace: frequency and s11 lengths differ");
        if (frequency.size() < 32)
            throw ValidationError("trace needs >= 32 points");
        for (std::size_t i = 1; i < frequency.size(); ++i)
        {
            if (!(frequency[i] > frequency[i - 1]))
                throw ValidationError("trace frequencies must be strictly increasing");
        }
    }
};

struct EnvironmentParams
{
    double amplitude = 1.0;
    double global_phase = 0.0; // rad
    double cable_delay = 0.0;  // s
};

// Single-port reflection model:
//   S11(f) = a e^{i alpha} e^{-2 pi i f tau}
//            [1 - (2 Ql/|Qc|) e^{i phi} / (1 + 2i Ql (f - f0)/f0)]
// with 1/Ql = 1/Qint + cos(phi)/|Qc|. Additive complex Gaussian noise of
// noise_sigma per quadrature.
inline ReflectionTrace synthesize_reflection(double f0, double q_int, double q_c_mag,
                                             double mismatch_phase, const EnvironmentParams &env,
                                             double noise_sigma, const std::vector<double> &freq_grid,
                                             std::uint64_t seed = 0)
{
    if (!(q_int > 0.0) || !(q_c_mag > 0.0))
        throw ValidationError("synthesize_reflection: quality factors must be > 0");
    if (!(f0 > 0.0))
        throw ValidationError("synthesize_reflection: f0 must be > 0");
    if (noise_sigma < 0.0)
        throw ValidationError("synthesize_reflection: noise sigma must be >= 0");
    const double inv_ql = 1.0 / q_int + std::cos(mismatch_phase) / q_c_mag;
    if (!(inv_ql > 0.0))
        throw ValidationError("synthesize_reflection: loaded Q is not positive for these parameters");
    const double ql = 1.0 / inv_ql;

    ReflectionTrace trace;
    trace.frequency = freq_grid;
    trace.s11.resize(freq_grid.size());
    const std::complex<double> i1(0.0, 1.0);
    detail::NormalSampler normal(detail::engine_for(seed, 0x5f3c1e9aa72bd001ULL));
    for (std::size_t k = 0; k < freq_grid.size(); ++k)
    {
        const double f = freq_grid[k];
        const std::complex<double> denom = 1.0 + i1 * (2.0 * ql * (f - f0) / f0);
        std::complex<double> s = 1.0 - (2.0 * ql / q_c_mag) * std::exp(i1 * mismatch_phase) / denom;
        s *= env.amplitude * std::exp(i1 * env.global_phase) *
             std::exp(-i1 * (2.0 * std::numbers::pi * f * env.cable_delay));
        if (noise_sigma > 0.0)
            s += std::complex<double>(noise_sigma * normal(), noise_sigma * normal());
        trace.s11[k] = s;
    }
    return trace;
}

enum FitFlag : unsigned
{
    fit_flag_none = 0,
    fit_flag_off_resonance_span = 1u << 0,  // trace does not bracket/resolve the resonance
    fit_flag_undercoupled_extreme = 1u << 1, // resonance circle vanishingly small
    fit_flag_low_snr = 1u << 2,
    fit_flag_nonpositive_q_int = 1u << 3,   // mismatch correction drove Q_int <= 0
};

struct ResonanceFit
{
    double f0 = 0.0;
    double q_loaded = 0.0;
    double q_c_mag = 0.0;
    double mismatch_phase = 0.0; // impedance-mismatch angle phi
    double q_int = 0.0;          // 1/q_int = 1/q_loaded - cos(phi)/q_c_mag

    double f0_err = 0.0;
    double q_loaded_err = 0.0;
    double q_c_err = 0.0;
    double q_int_err = 0.0;

    EnvironmentParams environment; // amplitude, global phase, cable delay
    double canonical_diameter = 0.0; // 2 Ql/|Qc| in the delay/environment-removed frame
    double residual_rms = 0.0;       // radial scatter relative to circle diameter
    unsigned flags = fit_flag_none;

    bool flagged(FitFlag f) const { return (flags & f) != 0; }
};

namespace detail
{

struct CircleFit
{
    std::complex<double> center;
    double radius = 0.0;
    double rms = 0.0; // radial residual rms
};

// Taubin algebraic circle fit. Chosen over Kasa for its much smaller bias on
// partial arcs, which high-Q traces routinely are.
inline CircleFit taubin_circle(const std::vector<std::complex<double>> &pts)
{
    const auto n = static_cast<double>(pts.size());
    double mx = 0.0, my = 0.0;
    for (const auto &p : pts)
    {
        mx += p.real();
        my += p.imag();
    }
    mx /= n;
    my /= n;

    double zm = 0.0;
    std::vector<double> u(pts.size()), v(pts.size()), z(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k)
    {
        u[k] = pts[k].real() - mx;
        v[k] = pts[k].imag() - my;
        z[k] = u[k] * u[k] + v[k] * v[k];
        zm += z[k];
    }
    zm /= n;
    if (!(zm > 0.0))
        throw SolverError("circle fit: degenerate point cloud");
    const double zs = 2.0 * std::sqrt(zm);

    Eigen::MatrixXd m(static_cast<Eigen::Index>(pts.size()), 3);
    for (std::size_t k = 0; k < pts.size(); ++k)
    {
        m(static_cast<Eigen::Index>(k), 0) = (z[k] - zm) / zs;
        m(static_cast<Eigen::Index>(k), 1) = u[k];
        m(static_cast<Eigen::Index>(k), 2) = v[k];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
    const Eigen::Vector3d a = svd.matrixV().col(2);

    const double a_quad = a[0] / zs;
    const double d_coef = -zm * a[0] / zs;
    if (std::abs(a_quad) < 1e-14 / zs)
        throw SolverError("circle fit: points are collinear");
    const double cu = -a[1] / (2.0 * a_quad);
    const double cv = -a[2] / (2.0 * a_quad);
    const double r2 = cu * cu + cv * cv - d_coef / a_quad;
    if (!(r2 > 0.0))
        throw SolverError("circle fit: negative radius");

    CircleFit fit;
    fit.center = {mx + cu, my + cv};
    fit.radius = std::sqrt(r2);
    double ss = 0.0;
    for (const auto &p : pts)
    {
        const double d = std::abs(p - fit.center) - fit.radius;
        ss += d * d;
    }
    fit.rms = std::sqrt(ss / n);
    return fit;
}

inline double wrap_angle(double a)
{
    while (a > std::numbers::pi)
        a -= 2.0 * std::numbers::pi;
    while (a < -std::numbers::pi)
        a += 2.0 * std::numbers::pi;
    return a;
}

struct PhaseFit
{
    double f0 = 0.0;
    double q_loaded = 0.0;
    double theta0 = 0.0;
    double f0_var = 0.0;
    double ql_var = 0.0;
    double rms = 0.0;
};

// Fit theta(f) = theta0 + 2 atan(2 Ql (1 - f/f0)) to the center-referenced
// phases by damped Gauss-Newton on wrapped residuals.
inline PhaseFit fit_phase(const std::vector<double> &freq, const std::vector<double> &theta)
{
    const std::size_t n = freq.size();

    // Unwrapped copy for initialization only.
    std::vector<double> unwrapped(n);
    unwrapped[0] = theta[0];
    for (std::size_t k = 1; k < n; ++k)
        unwrapped[k] = unwrapped[k - 1] + wrap_angle(theta[k] - theta[k - 1]);

    std::size_t steepest = 1;
    double steepest_slope = 0.0;
    for (std::size_t k = 1; k + 1 < n; ++k)
    {
        const double slope = std::abs((unwrapped[k + 1] - unwrapped[k - 1]) / (freq[k + 1] - freq[k - 1]));
        if (slope > steepest_slope)
        {
            steepest_slope = slope;
            steepest = k;
        }
    }
    double f0 = freq[steepest];
    // At resonance d theta/df = -4 Ql / f0.
    double ql = steepest_slope > 0.0 ? steepest_slope * f0 / 4.0 : f0 / (freq.back() - freq.front());

    double theta0 = 0.0;
    {
        double cs = 0.0, sn = 0.0;
        for (std::size_t k = 0; k < n; ++k)
        {
            const double model = 2.0 * std::atan(2.0 * ql * (1.0 - freq[k] / f0));
            cs += std::cos(theta[k] - model);
            sn += std::sin(theta[k] - model);
        }
        theta0 = std::atan2(sn, cs);
    }

    auto ssr_of = [&](double p_f0, double p_ql, double p_t0) {
        double ssr = 0.0;
        for (std::size_t k = 0; k < n; ++k)
        {
            const double model = p_t0 + 2.0 * std::atan(2.0 * p_ql * (1.0 - freq[k] / p_f0));
            const double r = wrap_angle(theta[k] - model);
            ssr += r * r;
        }
        return ssr;
    };

    double lambda = 1e-3;
    double ssr = ssr_of(f0, ql, theta0);
    Eigen::Matrix3d jtj_last = Eigen::Matrix3d::Zero();
    for (int it = 0; it < 100; ++it)
    {
        Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
        Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
        for (std::size_t k = 0; k < n; ++k)
        {
            const double g = 2.0 * ql * (1.0 - freq[k] / f0);
            const double den = 1.0 + g * g;
            const double model = theta0 + 2.0 * std::atan(g);
            const double r = wrap_angle(theta[k] - model);
            Eigen::Vector3d j; // d model / d (f0, ql, theta0)
            j[0] = 4.0 * ql * freq[k] / (f0 * f0 * den);
            j[1] = 4.0 * (1.0 - freq[k] / f0) / den;
            j[2] = 1.0;
            jtj += j * j.transpose();
            jtr += j * r;
        }
        jtj_last = jtj;
        Eigen::Matrix3d damped = jtj;
        for (int d = 0; d < 3; ++d)
            damped(d, d) *= 1.0 + lambda;
        const Eigen::Vector3d step = damped.ldlt().solve(jtr);
        const double f0_new = f0 + step[0];
        const double ql_new = ql + step[1];
        const double t0_new = wrap_angle(theta0 + step[2]);
        if (!(f0_new > 0.0) || !(ql_new > 0.0))
        {
            lambda *= 10.0;
            continue;
        }
        const double ssr_new = ssr_of(f0_new, ql_new, t0_new);
        if (ssr_new <= ssr)
        {
            const double rel_improvement = (ssr - ssr_new) / std::max(ssr, 1e-300);
            f0 = f0_new;
            ql = ql_new;
            theta0 = t0_new;
            ssr = ssr_new;
            lambda = std::max(lambda * 0.3, 1e-12);
            if (rel_improvement < 1e-14)
                break;
        }
        else
        {
            lambda *= 10.0;
            if (lambda > 1e12)
                break;
        }
    }

    PhaseFit out;
    out.f0 = f0;
    out.q_loaded = ql;
    out.theta0 = theta0;
    out.rms = std::sqrt(ssr / static_cast<double>(n));
    const double dof = static_cast<double>(n) - 3.0;
    const double sigma2 = dof > 0.0 ? ssr / dof : 0.0;
    const Eigen::Matrix3d cov = jtj_last.ldlt().solve(Eigen::Matrix3d::Identity()) * sigma2;
    out.f0_var = std::max(cov(0, 0), 0.0);
    out.ql_var = std::max(cov(1, 1), 0.0);
    return out;
}

// Joint complex-model refinement. The staged pipeline (delay scan, circle
// fit, phase fit) is a good initializer but its delay estimate absorbs noise
// through a near-flat direction of the circle-scatter objective; polishing
// all parameters against the complex samples removes that bias and yields
// maximum-likelihood standard errors under per-quadrature Gaussian noise.
//
// Parameterization: s11(f) = a e^{i(alpha_ref - 2 pi (f - f_ref) tau)} B(f),
// B = 1 - d e^{i phi} / (1 + 2 i q_l (f - f0)/f0), with alpha_ref the
// environment phase at f_ref (the conditioned combination of alpha and tau).
struct JointFit
{
    double f0 = 0.0, q_l = 0.0, d = 0.0, phi = 0.0, a = 0.0, alpha_ref = 0.0, tau = 0.0;
    Eigen::Matrix<double, 7, 7> covariance = Eigen::Matrix<double, 7, 7>::Zero();
    double ssr = 0.0;
    int dof = 0;
};

inline JointFit refine_complex_model(const ReflectionTrace &trace, double f_ref, JointFit init)
{
    const std::size_t n = trace.frequency.size();
    JointFit fit = init;
    const std::complex<double> i1(0.0, 1.0);
    constexpr double two_pi = 2.0 * std::numbers::pi;

    auto residuals_and_jacobian = [&](const JointFit &p, Eigen::VectorXd *r, Eigen::MatrixXd *j) {
        double ssr = 0.0;
        for (std::size_t k = 0; k < n; ++k)
        {
            const double f = trace.frequency[k];
            const double w = two_pi * (f - f_ref);
            const double u = (f - p.f0) / p.f0;
            const std::complex<double> denom = 1.0 + i1 * (2.0 * p.q_l * u);
            const std::complex<double> big_l = 1.0 / denom;
            const std::complex<double> mismatch = p.d * std::exp(i1 * p.phi);
            const std::complex<double> b = 1.0 - mismatch * big_l;
            const std::complex<double> env = p.a * std::exp(i1 * (p.alpha_ref - w * p.tau));
            const std::complex<double> model = env * b;
            const std::complex<double> res = model - trace.s11[k];
            ssr += std::norm(res);
            if (r)
            {
                (*r)[static_cast<Eigen::Index>(2 * k)] = res.real();
                (*r)[static_cast<Eigen::Index>(2 * k + 1)] = res.imag();
            }
            if (j)
            {
                const std::complex<double> dz_df0 =
                    -env * mismatch * (2.0 * i1 * p.q_l * f / (p.f0 * p.f0)) * big_l * big_l;
                const std::complex<double> dz_dql = env * mismatch * (2.0 * i1 * u) * big_l * big_l;
                const std::complex<double> dz_dd = -env * std::exp(i1 * p.phi) * big_l;
                const std::complex<double> dz_dphi = -env * i1 * mismatch * big_l;
                const std::complex<double> dz_da = model / p.a;
                const std::complex<double> dz_dalpha = i1 * model;
                const std::complex<double> dz_dtau = -i1 * w * model;
                const std::complex<double> cols[7] = {dz_df0, dz_dql, dz_dd, dz_dphi,
                                                      dz_da, dz_dalpha, dz_dtau};
                for (int c = 0; c < 7; ++c)
                {
                    (*j)(static_cast<Eigen::Index>(2 * k), c) = cols[c].real();
                    (*j)(static_cast<Eigen::Index>(2 * k + 1), c) = cols[c].imag();
                }
            }
        }
        return ssr;
    };

    Eigen::VectorXd r(2 * n);
    Eigen::MatrixXd j(2 * n, 7);
    double ssr = residuals_and_jacobian(fit, &r, &j);
    double lambda = 1e-6;
    Eigen::Matrix<double, 7, 7> jtj_last = Eigen::Matrix<double, 7, 7>::Zero();
    for (int it = 0; it < 60; ++it)
    {
        const Eigen::Matrix<double, 7, 7> jtj = j.transpose() * j;
        const Eigen::Matrix<double, 7, 1> jtr = j.transpose() * r;
        jtj_last = jtj;
        Eigen::Matrix<double, 7, 7> damped = jtj;
        for (int c = 0; c < 7; ++c)
            damped(c, c) += lambda * std::max(jtj(c, c), 1e-300);
        const Eigen::Matrix<double, 7, 1> step = damped.ldlt().solve(jtr);
        JointFit trial = fit;
        trial.f0 -= step[0];
        trial.q_l -= step[1];
        trial.d -= step[2];
        trial.phi -= step[3];
        trial.a -= step[4];
        trial.alpha_ref -= step[5];
        trial.tau -= step[6];
        if (!(trial.f0 > 0.0) || !(trial.q_l > 0.0) || !(trial.d > 0.0) || !(trial.a > 0.0))
        {
            lambda *= 10.0;
            if (lambda > 1e12)
                break;
            continue;
        }
        const double ssr_trial = residuals_and_jacobian(trial, nullptr, nullptr);
        if (ssr_trial <= ssr)
        {
            const double improvement = (ssr - ssr_trial) / std::max(ssr, 1e-300);
            fit = trial;
            ssr = residuals_and_jacobian(fit, &r, &j);
            lambda = std::max(lambda * 0.3, 1e-12);
            if (improvement < 1e-14)
                break;
        }
        else
        {
            lambda *= 10.0;
            if (lambda > 1e12)
                break;
        }
    }

    fit.ssr = ssr;
    fit.dof = static_cast<int>(2 * n) - 7;
    const double sigma2 = fit.dof > 0 ? ssr / fit.dof : 0.0;
    fit.covariance = jtj_last.ldlt()
                         .solve(Eigen::Matrix<double, 7, 7>::Identity()) *
                     sigma2;
    return fit;
}

// Circle-fit residual as a function of trial cable delay. Rotation angles are
// taken relative to f_ref: the constant rotation exp(2 pi i f_ref tau) does
// not change circularity, and (f - f_ref) tau keeps the trig arguments small.
inline double delay_residual(const ReflectionTrace &trace, double f_ref, double tau,
                             std::vector<std::complex<double>> &scratch)
{
    scratch.resize(trace.s11.size());
    const std::complex<double> i1(0.0, 1.0);
    for (std::size_t k = 0; k < trace.s11.size(); ++k)
        scratch[k] = trace.s11[k] *
                     std::exp(i1 * (2.0 * std::numbers::pi * (trace.frequency[k] - f_ref) * tau));
    try
    {
        return taubin_circle(scratch).rms;
    }
    catch (const SolverError &)
    {
        return std::numeric_limits<double>::infinity();
    }
}

} // namespace detail

// Circle-fit pipeline: (1) cable-delay removal by minimizing circle-fit
// residual, (2) Taubin circle fit, (3) phase-vs-frequency fit for f0 and Ql,
// (4) environment normalization to the canonical frame for |Qc|, phi, Q_int.
inline ResonanceFit circle_fit_resonance(const ReflectionTrace &trace)
{
    trace.validate();
    const std::size_t n = trace.frequency.size();
    const double span = trace.frequency.back() - trace.frequency.front();

    // Initial delay guess from the mean phase slope of the trace edges; away
    // from resonance the model phase is -2 pi f tau + const.
    const std::size_t edge = std::max<std::size_t>(3, n / 10);
    auto edge_slope = [&](std::size_t begin, std::size_t end) {
        double sum_f = 0.0, sum_t = 0.0, sum_ff = 0.0, sum_ft = 0.0;
        double prev = 0.0, acc = 0.0;
        std::size_t count = 0;
        for (std::size_t k = begin; k < end; ++k)
        {
            const double ph = std::arg(trace.s11[k]);
            acc = count == 0 ? ph : acc + detail::wrap_angle(ph - prev);
            prev = ph;
            const double f = trace.frequency[k];
            sum_f += f;
            sum_t += acc;
            sum_ff += f * f;
            sum_ft += f * acc;
            ++count;
        }
        const double cnt = static_cast<double>(count);
        const double denom = cnt * sum_ff - sum_f * sum_f;
        return denom != 0.0 ? (cnt * sum_ft - sum_f * sum_t) / denom : 0.0;
    };
    const double slope = 0.5 * (edge_slope(0, edge) + edge_slope(n - edge, n));
    const double tau0 = -slope / (2.0 * std::numbers::pi);
    const double f_ref = trace.frequency.front();

    // The residual landscape repeats roughly every 1/span in tau (a full extra
    // phase wrap re-rolls the trace into another near-circle), so bracket the
    // true minimum with a coarse scan inside half a wrap before polishing.
    std::vector<std::complex<double>> scratch;
    const double window = 0.55 / span;
    const int coarse = 128;
    double best_tau = tau0;
    double best_res = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= coarse; ++i)
    {
        const double t = tau0 - window + 2.0 * window * i / coarse;
        const double r = detail::delay_residual(trace, f_ref, t, scratch);
        if (r < best_res)
        {
            best_res = r;
            best_tau = t;
        }
    }
    const double cell = 2.0 * window / coarse;
    double a = best_tau - cell, b = best_tau + cell;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - gr * (b - a);
    double d = a + gr * (b - a);
    double fc = detail::delay_residual(trace, f_ref, c, scratch);
    double fd = detail::delay_residual(trace, f_ref, d, scratch);
    for (int it = 0; it < 200 && (b - a) > 1e-12 / span; ++it)
    {
        if (fc < fd)
        {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = detail::delay_residual(trace, f_ref, c, scratch);
        }
        else
        {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = detail::delay_residual(trace, f_ref, d, scratch);
        }
    }
    const double tau = 0.5 * (a + b);

    // Delay-removed trace and its circle.
    std::vector<std::complex<double>> z(n);
    const std::complex<double> i1(0.0, 1.0);
    for (std::size_t k = 0; k < n; ++k)
        z[k] = trace.s11[k] *
               std::exp(i1 * (2.0 * std::numbers::pi * (trace.frequency[k] - f_ref) * tau));
    const detail::CircleFit circle = detail::taubin_circle(z);

    const double relative_scatter = circle.rms / (2.0 * circle.radius);
    if (relative_scatter > 0.1)
        throw SolverError("trace is not circular after delay removal (radial scatter " +
                          std::to_string(relative_scatter) + " of diameter)");

    // Phase fit around the circle center.
    std::vector<double> theta(n);
    for (std::size_t k = 0; k < n; ++k)
        theta[k] = std::arg(z[k] - circle.center);
    const detail::PhaseFit phase = detail::fit_phase(trace.frequency, theta);

    // Off-resonant point and canonical frame seed the joint refinement.
    const std::complex<double> z_off =
        circle.center - circle.radius * std::exp(i1 * phase.theta0);
    if (std::abs(z_off) <= 0.0)
        throw SolverError("degenerate environment: off-resonant point at origin");
    const std::complex<double> c_canon = circle.center / z_off;
    const double r_canon = circle.radius / std::abs(z_off);
    const double phi0 = std::arg(1.0 - c_canon);

    detail::JointFit seed;
    seed.f0 = phase.f0;
    seed.q_l = phase.q_loaded;
    seed.d = 2.0 * r_canon;
    seed.phi = phi0;
    seed.a = std::abs(z_off);
    seed.alpha_ref = std::arg(z_off);
    seed.tau = tau;
    const detail::JointFit joint = detail::refine_complex_model(trace, f_ref, seed);

    ResonanceFit fit;
    fit.f0 = joint.f0;
    fit.q_loaded = joint.q_l;
    fit.canonical_diameter = joint.d;
    fit.q_c_mag = 2.0 * joint.q_l / joint.d;
    fit.mismatch_phase = joint.phi;
    const double internal_rate = 1.0 - 0.5 * joint.d * std::cos(joint.phi); // = Ql/Qint
    fit.q_int = joint.q_l / internal_rate;
    fit.environment.cable_delay = joint.tau;
    fit.environment.amplitude = joint.a;
    // undo the f_ref-relative convention: S11 = a e^{i alpha} e^{-2 pi i f tau} [...]
    fit.environment.global_phase =
        detail::wrap_angle(joint.alpha_ref + 2.0 * std::numbers::pi * f_ref * joint.tau);
    fit.residual_rms =
        std::sqrt(joint.ssr / static_cast<double>(n)) / (joint.a * joint.d);

    // Standard errors from the joint-fit covariance; q_c and q_int by
    // first-order propagation through (q_l, d, phi).
    fit.f0_err = std::sqrt(std::max(joint.covariance(0, 0), 0.0));
    fit.q_loaded_err = std::sqrt(std::max(joint.covariance(1, 1), 0.0));
    {
        Eigen::Matrix<double, 7, 1> g = Eigen::Matrix<double, 7, 1>::Zero();
        g[1] = 2.0 / joint.d;
        g[2] = -2.0 * joint.q_l / (joint.d * joint.d);
        fit.q_c_err = std::sqrt(std::max(double(g.transpose() * joint.covariance * g), 0.0));

        const double denom = internal_rate;
        g.setZero();
        g[1] = 1.0 / denom;
        g[2] = joint.q_l * 0.5 * std::cos(joint.phi) / (denom * denom);
        g[3] = -joint.q_l * 0.5 * joint.d * std::sin(joint.phi) / (denom * denom);
        fit.q_int_err = std::sqrt(std::max(double(g.transpose() * joint.covariance * g), 0.0));
    }

    if (fit.f0 < trace.frequency.front() || fit.f0 > trace.frequency.back() ||
        span < 2.0 * fit.f0 / fit.q_loaded)
        fit.flags |= fit_flag_off_resonance_span;
    if (joint.d < 1e-2)
        fit.flags |= fit_flag_undercoupled_extreme;
    if (fit.residual_rms > 0.02)
        fit.flags |= fit_flag_low_snr;
    if (!(internal_rate > 0.0))
        fit.flags |= fit_flag_nonpositive_q_int; // reported as-is, not clamped

    return fit;
}

// Downstream adapter: resonance fit -> mode measurement, with the relative
// loss-rate uncertainty floored at eps_floor.
inline ModeMeasurement fit_to_measurement(const ResonanceFit &fit, const std::string &label,
                                          double eps_floor = 0.05)
{
    if (fit.flagged(fit_flag_nonpositive_q_int) || !(fit.q_int > 0.0))
        throw ValidationError("fit did not produce a positive internal quality factor");
    if (!(eps_floor >= 0.0 && eps_floor < 1.0))
        throw ValidationError("eps_floor must lie in [0, 1)");
    ModeMeasurement mm;
    mm.label = label;
    mm.frequency = fit.f0;
    mm.q_int = fit.q_int;
    const double statistical = fit.q_int_err / fit.q_int;
    mm.q_int_rel_sigma = std::max(statistical, eps_floor);
    if (!(mm.q_int_rel_sigma > 0.0 && mm.q_int_rel_sigma < 1.0))
        throw ValidationError("fit uncertainty is outside (0, 1); cannot form a measurement");
    mm.q_c = fit.q_c_mag;
    return mm;
}

} // namespace resolveq
