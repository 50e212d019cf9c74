#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resolveq/errors.hpp"

namespace resolveq
{

struct NnlsOptions
{
    int max_iterations = 0;   // 0 -> 3 * columns (active-set insertions)
    double tolerance = 1e-12; // dual feasibility tolerance, relative to max|A^T b|
};

// Lawson-Hanson active-set solver for  min ||A x - b||^2  s.t.  x >= 0.
// Components in the active set are exactly zero on return. Throws SolverError
// if the insertion cap is exceeded.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd &a, const Eigen::VectorXd &b,
                            const NnlsOptions &options = {})
{
    const Eigen::Index m = a.rows();
    const Eigen::Index n = a.cols();
    if (b.size() != m)
        throw ValidationError("nnls: rhs has " + std::to_string(b.size()) + " entries, matrix has " +
                              std::to_string(m) + " rows");

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<bool> passive(static_cast<std::size_t>(n), false);

    const double dual_scale = (a.transpose() * b).cwiseAbs().maxCoeff();
    if (dual_scale <= 0.0)
        return x; // gradient at 0 is non-positive everywhere
    const double dual_tol = options.tolerance * dual_scale;

    const int max_insertions = options.max_iterations > 0 ? options.max_iterations : 3 * static_cast<int>(n);

    // Least-squares over the passive columns; active components stay zero.
    auto solve_passive = [&](Eigen::VectorXd &z) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < n; ++j)
        {
            if (passive[static_cast<std::size_t>(j)])
                idx.push_back(j);
        }
        Eigen::MatrixXd ap(m, static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k)
            ap.col(static_cast<Eigen::Index>(k)) = a.col(idx[k]);
        const Eigen::VectorXd zp = ap.colPivHouseholderQr().solve(b);
        z.setZero(n);
        for (std::size_t k = 0; k < idx.size(); ++k)
            z[idx[k]] = zp[static_cast<Eigen::Index>(k)];
    };

    int insertions = 0;
    while (true)
    {
        const Eigen::VectorXd w = a.transpose() * (b - a * x);
        Eigen::Index candidate = -1;
        double w_max = dual_tol;
        for (Eigen::Index j = 0; j < n; ++j)
        {
            if (!passive[static_cast<std::size_t>(j)] && w[j] > w_max)
            {
                w_max = w[j];
                candidate = j;
            }
        }
        if (candidate < 0)
            break; // KKT: all active gradients non-positive within tolerance

        if (++insertions > max_insertions)
        {
            const double residual = (a * x - b).norm();
            throw SolverError("nnls did not converge within " + std::to_string(max_insertions) +
                              " active-set insertions (residual " + std::to_string(residual) + ")");
        }

        passive[static_cast<std::size_t>(candidate)] = true;
        Eigen::VectorXd z(n);
        solve_passive(z);

        auto infeasible = [&](const Eigen::VectorXd &v) {
            for (Eigen::Index j = 0; j < n; ++j)
            {
                if (passive[static_cast<std::size_t>(j)] && v[j] <= 0.0)
                    return true;
            }
            return false;
        };

        // Backtrack while the passive solution leaves the feasible region.
        while (infeasible(z))
        {
            double alpha = std::numeric_limits<double>::infinity();
            Eigen::Index blocking = -1;
            for (Eigen::Index j = 0; j < n; ++j)
            {
                if (passive[static_cast<std::size_t>(j)] && z[j] <= 0.0)
                {
                    const double t = x[j] / (x[j] - z[j]);
                    if (t < alpha)
                    {
                        alpha = t;
                        blocking = j;
                    }
                }
            }
            if (blocking < 0)
                break;
            for (Eigen::Index j = 0; j < n; ++j)
            {
                if (passive[static_cast<std::size_t>(j)])
                    x[j] += alpha * (z[j] - x[j]);
            }
            x[blocking] = 0.0;
            passive[static_cast<std::size_t>(blocking)] = false;
            for (Eigen::Index j = 0; j < n; ++j)
            {
                if (passive[static_cast<std::size_t>(j)] && x[j] <= 0.0)
                {
                    x[j] = 0.0;
                    passive[static_cast<std::size_t>(j)] = false;
                }
            }
            bool any_passive = false;
            for (Eigen::Index j = 0; j < n; ++j)
                any_passive = any_passive || passive[static_cast<std::size_t>(j)];
            if (!any_passive)
            {
                z.setZero(n);
                break;
            }
            solve_passive(z);
        }
        x = z;
        for (Eigen::Index j = 0; j < n; ++j)
        {
            if (!passive[static_cast<std::size_t>(j)])
                x[j] = 0.0;
        }
    }
    return x;
}

} // namespace resolveq
