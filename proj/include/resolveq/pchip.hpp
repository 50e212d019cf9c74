#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "resolveq/errors.hpp"

namespace resolveq
{

// Monotone piecewise-cubic Hermite interpolation (Fritsch-Carlson slopes).
// Preserves monotonicity of the data and never overshoots the sample range.
class MonotoneCubicInterpolator
{
public:
    MonotoneCubicInterpolator(std::vector<double> x, std::vector<double> y)
        : x_(std::move(x)), y_(std::move(y))
    {
        const std::size_t n = x_.size();
        if (n < 2 || y_.size() != n)
            throw ValidationError("interpolator needs >= 2 aligned samples");
        for (std::size_t i = 1; i < n; ++i)
        {
            if (!(x_[i] > x_[i - 1]))
                throw ValidationError("interpolation abscissae must be strictly increasing");
        }
        d_.resize(n);
        std::vector<double> h(n - 1), delta(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i)
        {
            h[i] = x_[i + 1] - x_[i];
            delta[i] = (y_[i + 1] - y_[i]) / h[i];
        }
        if (n == 2)
        {
            d_[0] = d_[1] = delta[0];
            return;
        }
        for (std::size_t i = 1; i + 1 < n; ++i)
        {
            if (delta[i - 1] * delta[i] <= 0.0)
            {
                d_[i] = 0.0;
            }
            else
            {
                const double w1 = 2.0 * h[i] + h[i - 1];
                const double w2 = h[i] + 2.0 * h[i - 1];
                d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d_[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
        d_[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }

    double operator()(double xq) const
    {
        if (xq < x_.front() || xq > x_.back())
            throw ValidationError("interpolation query " + std::to_string(xq) + " outside [" +
                                  std::to_string(x_.front()) + ", " + std::to_string(x_.back()) + "]");
        std::size_t lo = 0, hi = x_.size() - 1;
        while (hi - lo > 1)
        {
            const std::size_t mid = (lo + hi) / 2;
            (x_[mid] <= xq ? lo : hi) = mid;
        }
        const double h = x_[lo + 1] - x_[lo];
        const double t = (xq - x_[lo]) / h;
        const double t2 = t * t, t3 = t2 * t;
        const double h00 = 2 * t3 - 3 * t2 + 1;
        const double h10 = t3 - 2 * t2 + t;
        const double h01 = -2 * t3 + 3 * t2;
        const double h11 = t3 - t2;
        return h00 * y_[lo] + h10 * h * d_[lo] + h01 * y_[lo + 1] + h11 * h * d_[lo + 1];
    }

    double min_x() const { return x_.front(); }
    double max_x() const { return x_.back(); }

    double min_value() const
    {
        double m = y_.front();
        for (double v : y_)
            m = std::min(m, v);
        return m;
    }

    double max_value() const
    {
        double m = y_.front();
        for (double v : y_)
            m = std::max(m, v);
        return m;
    }

private:
    // Non-centered three-point estimate with the usual shape limiters.
    static double edge_slope(double h0, double h1, double delta0, double delta1)
    {
        double d = ((2.0 * h0 + h1) * delta0 - h0 * delta1) / (h0 + h1);
        if (d * delta0 <= 0.0)
            d = 0.0;
        else if (delta0 * delta1 < 0.0 && std::abs(d) > 3.0 * std::abs(delta0))
            d = 3.0 * delta0;
        return d;
    }

    std::vector<double> x_, y_, d_;
};

} // namespace resolveq
