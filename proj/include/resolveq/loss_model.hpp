#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "resolveq/errors.hpp"

namespace resolveq
{

// Canonical loss channels. Rows and loss vectors are stored as general
// k-channel Eigen vectors so extra channels (e.g. bulk dielectric) can be
// added without reshaping; the named types below cover the canonical three.
enum class LossChannel : int
{
    surface_resistance = 0, // R_s, ohm
    loss_tangent = 1,       // tan(delta), dimensionless (scaled to 3 nm / eps_r 10 oxide)
    seam_resistance = 2,    // r_seam, ohm*m
};

inline constexpr int kLossChannels = 3;
inline constexpr std::array<const char *, kLossChannels> kChannelNames{"r_s", "tan_delta", "r_seam"};

inline int channel_index(LossChannel c) { return static_cast<int>(c); }

// Parse a channel name ("r_s", "tan_delta", "r_seam") into its index.
inline int channel_from_name(const std::string &name)
{
    for (int i = 0; i < kLossChannels; ++i)
    {
        if (name == kChannelNames[static_cast<std::size_t>(i)])
            return i;
    }
    throw ValidationError("unknown loss channel name: '" + name + "'");
}

namespace detail
{
inline bool finite_nonnegative(double v) { return std::isfinite(v) && v >= 0.0; }
} // namespace detail

// The unknown x of the loss model: material loss factors, SI units.
struct MaterialLossVector
{
    double r_s = 0.0;       // surface resistance, ohm
    double tan_delta = 0.0; // scaled loss tangent of the surface oxide
    double r_seam = 0.0;    // seam resistance per unit length, ohm*m

    Eigen::Vector3d to_vector() const { return {r_s, tan_delta, r_seam}; }

    static MaterialLossVector from_vector(const Eigen::VectorXd &v)
    {
        if (v.size() < kLossChannels)
            throw ValidationError("loss vector needs at least 3 components");
        return {v[0], v[1], v[2]};
    }

    void validate() const
    {
        if (!detail::finite_nonnegative(r_s) || !detail::finite_nonnegative(tan_delta) ||
            !detail::finite_nonnegative(r_seam))
            throw ValidationError("material loss factors must be finite and >= 0");
    }
};

// One mode's loss participation factors (a row of the participation matrix).
struct ParticipationRow
{
    double inv_g = 0.0;  // inverse geometric factor, 1/ohm
    double p_ma = 0.0;   // metal-air surface dielectric participation
    double y_seam = 0.0; // seam admittance per unit length, 1/(ohm*m)

    Eigen::Vector3d to_vector() const { return {inv_g, p_ma, y_seam}; }

    void validate() const
    {
        if (!detail::finite_nonnegative(inv_g) || !detail::finite_nonnegative(p_ma) ||
            !detail::finite_nonnegative(y_seam))
            throw ValidationError("participation factors must be finite and >= 0");
        if (inv_g == 0.0 && p_ma == 0.0 && y_seam == 0.0)
            throw ValidationError("participation row must have at least one nonzero entry");
    }
};

// Ordered, labeled participation rows. Channels are fixed per matrix but the
// count is not hardcoded to 3.
class ParticipationMatrix
{
public:
    ParticipationMatrix() = default;

    explicit ParticipationMatrix(int channels) : channels_(channels)
    {
        if (channels < 1)
            throw ValidationError("participation matrix needs >= 1 channel");
    }

    void add_row(const std::string &label, const ParticipationRow &row)
    {
        row.validate();
        add_row(label, Eigen::VectorXd(row.to_vector()));
    }

    void add_row(const std::string &label, const Eigen::VectorXd &row)
    {
        if (row.size() != channels_)
            throw ValidationError("participation row for '" + label + "' has " +
                                  std::to_string(row.size()) + " channels, expected " +
                                  std::to_string(channels_));
        for (Eigen::Index j = 0; j < row.size(); ++j)
        {
            if (!detail::finite_nonnegative(row[j]))
                throw ValidationError("participation row for '" + label + "' must be finite and >= 0");
        }
        if (row.maxCoeff() <= 0.0)
            throw ValidationError("participation row for '" + label + "' must have a nonzero entry");
        for (const auto &existing : labels_)
        {
            if (existing == label)
                throw ValidationError("duplicate mode label '" + label + "'");
        }
        labels_.push_back(label);
        rows_.push_back(row);
    }

    int rows() const { return static_cast<int>(rows_.size()); }
    int channels() const { return channels_; }
    const std::vector<std::string> &labels() const { return labels_; }

    const Eigen::VectorXd &row(int i) const { return rows_.at(static_cast<std::size_t>(i)); }

    ParticipationRow named_row(int i) const
    {
        const Eigen::VectorXd &r = row(i);
        if (r.size() < kLossChannels)
            throw ValidationError("row has fewer than 3 channels");
        return {r[0], r[1], r[2]};
    }

    int row_index(const std::string &label) const
    {
        for (std::size_t i = 0; i < labels_.size(); ++i)
        {
            if (labels_[i] == label)
                return static_cast<int>(i);
        }
        throw ValidationError("no mode labeled '" + label + "'");
    }

    Eigen::MatrixXd matrix() const
    {
        Eigen::MatrixXd m(rows(), channels_);
        for (int i = 0; i < rows(); ++i)
            m.row(i) = rows_[static_cast<std::size_t>(i)].transpose();
        return m;
    }

    // Numerical rank of the row matrix: singular values above
    // rel_tolerance * sigma_max count.
    int numerical_rank(double rel_tolerance = 1e-10) const
    {
        if (rows_.empty())
            return 0;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(matrix());
        const auto &sv = svd.singularValues();
        const double cutoff = rel_tolerance * sv[0];
        int rank = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
        {
            if (sv[i] > cutoff)
                ++rank;
        }
        return rank;
    }

    void validate() const
    {
        if (rows_.empty())
            throw ValidationError("participation matrix must have at least one row");
    }

private:
    int channels_ = kLossChannels;
    std::vector<std::string> labels_;
    std::vector<Eigen::VectorXd> rows_;
};

// A measured resonant mode: frequency, internal quality factor, and the
// relative uncertainty eps_y of its loss rate 1/Q_int.
struct ModeMeasurement
{
    std::string label;
    double frequency = 0.0;         // Hz
    double q_int = 0.0;             // internal quality factor
    double q_int_rel_sigma = 0.05;  // eps_y = sigma_y / y
    std::optional<double> q_c;      // coupling quality factor
    std::optional<double> photon_number;

    double loss_rate() const { return 1.0 / q_int; }
    double loss_rate_sigma() const { return q_int_rel_sigma / q_int; }

    void validate() const
    {
        if (!(std::isfinite(frequency) && frequency > 0.0))
            throw ValidationError("mode '" + label + "': frequency must be > 0");
        if (!(std::isfinite(q_int) && q_int > 0.0))
            throw ValidationError("mode '" + label + "': q_int must be > 0");
        if (!(q_int_rel_sigma > 0.0 && q_int_rel_sigma < 1.0))
            throw ValidationError("mode '" + label + "': q_int_rel_sigma must be in (0, 1)");
        if (q_c && !(std::isfinite(*q_c) && *q_c > 0.0))
            throw ValidationError("mode '" + label + "': q_c must be > 0");
    }
};

// Oxide thickness/permittivity pair used to reference the scaled loss tangent.
struct OxideAssumptions
{
    double t_ma = 3e-9;  // m
    double eps_r = 10.0;

    void validate() const
    {
        if (!(std::isfinite(t_ma) && t_ma > 0.0))
            throw ValidationError("oxide thickness must be > 0");
        if (!(std::isfinite(eps_r) && eps_r >= 1.0))
            throw ValidationError("oxide relative permittivity must be >= 1");
    }
};

// y = P x: per-mode loss rates 1/Q from material loss factors.
inline Eigen::VectorXd forward_loss_rates(const ParticipationMatrix &p, const Eigen::VectorXd &x)
{
    p.validate();
    if (x.size() != p.channels())
        throw ValidationError("loss vector has " + std::to_string(x.size()) +
                              " channels, participation matrix has " + std::to_string(p.channels()));
    for (Eigen::Index j = 0; j < x.size(); ++j)
    {
        if (!detail::finite_nonnegative(x[j]))
            throw ValidationError("loss factors must be finite and >= 0");
    }
    return p.matrix() * x;
}

inline std::vector<double> forward_loss_rates(const ParticipationMatrix &p, const MaterialLossVector &x)
{
    const Eigen::VectorXd y = forward_loss_rates(p, Eigen::VectorXd(x.to_vector()));
    return {y.data(), y.data() + y.size()};
}

// Predicted internal quality factors Q = 1/y. A lossless mode (y = 0) is
// reported as infinite, not as an error.
inline std::vector<std::pair<std::string, double>> predict_quality_factors(const ParticipationMatrix &p,
                                                                           const MaterialLossVector &x)
{
    x.validate();
    const Eigen::VectorXd y = forward_loss_rates(p, Eigen::VectorXd(x.to_vector()));
    std::vector<std::pair<std::string, double>> out;
    out.reserve(static_cast<std::size_t>(y.size()));
    for (Eigen::Index i = 0; i < y.size(); ++i)
    {
        const double q = y[i] > 0.0 ? 1.0 / y[i] : std::numeric_limits<double>::infinity();
        out.emplace_back(p.labels()[static_cast<std::size_t>(i)], q);
    }
    return out;
}

// Fractional loss contributions of one mode: conductor, metal-air dielectric, seam.
struct LossBudget
{
    double cond = 0.0;
    double ma = 0.0;
    double seam = 0.0;
};

inline LossBudget loss_budget(const ParticipationRow &row, const MaterialLossVector &x)
{
    row.validate();
    x.validate();
    const double cond = row.inv_g * x.r_s;
    const double ma = row.p_ma * x.tan_delta;
    const double seam = row.y_seam * x.r_seam;
    const double total = cond + ma + seam;
    if (total <= 0.0)
        throw ValidationError("loss budget undefined: total loss is zero");
    return {cond / total, ma / total, seam / total};
}

// Eq.-of-reference conversion between the actual oxide loss tangent and the
// scaled loss tangent quoted against assumed thickness/permittivity.
inline double scale_loss_tangent(double tan_delta_actual, const OxideAssumptions &actual,
                                 const OxideAssumptions &assumed)
{
    actual.validate();
    assumed.validate();
    return tan_delta_actual * (actual.t_ma / assumed.t_ma) * (assumed.eps_r / actual.eps_r);
}

inline double unscale_loss_tangent(double tan_delta_scaled, const OxideAssumptions &actual,
                                   const OxideAssumptions &assumed)
{
    actual.validate();
    assumed.validate();
    return tan_delta_scaled * (assumed.t_ma / actual.t_ma) * (actual.eps_r / assumed.eps_r);
}

} // namespace resolveq
