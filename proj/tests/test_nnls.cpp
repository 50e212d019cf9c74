#include <catch2/catch_amalgamated.hpp>

#include <random>

#include <Eigen/Dense>

#include "resolveq/nnls.hpp"

using namespace resolveq;
using Catch::Approx;

namespace
{
Eigen::MatrixXd random_matrix(std::mt19937_64 &rng, int rows, int cols)
{
    std::uniform_real_distribution<double> unit(0.1, 1.0);
    Eigen::MatrixXd a(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            a(i, j) = unit(rng);
    return a;
}
} // namespace

TEST_CASE("nnls on the identity clamps negative components")
{
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
    Eigen::Vector3d b(1.0, -0.5, 2.0);
    const Eigen::VectorXd x = nnls(a, b);
    CHECK(x[0] == Approx(1.0));
    CHECK(x[1] == 0.0);
    CHECK(x[2] == Approx(2.0));
}

TEST_CASE("nnls with zero rhs returns zero")
{
    std::mt19937_64 rng(5);
    const Eigen::MatrixXd a = random_matrix(rng, 4, 3);
    const Eigen::VectorXd x = nnls(a, Eigen::VectorXd::Zero(4));
    CHECK(x.isZero());
}

TEST_CASE("nnls equals unconstrained least squares on interior solutions")
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unit(0.2, 1.0);
    for (int trial = 0; trial < 100; ++trial)
    {
        const Eigen::MatrixXd a = random_matrix(rng, 5, 3);
        Eigen::Vector3d x_true(unit(rng), unit(rng), unit(rng));
        const Eigen::VectorXd b = a * x_true;
        const Eigen::VectorXd x_free = a.colPivHouseholderQr().solve(b);
        if (x_free.minCoeff() < 0.0)
            continue;
        const Eigen::VectorXd x_nn = nnls(a, b);
        for (int j = 0; j < 3; ++j)
        {
            CHECK(x_nn[j] == Approx(x_free[j]).epsilon(1e-10));
            CHECK(x_nn[j] == Approx(x_true[j]).epsilon(1e-9));
        }
    }
}

TEST_CASE("nnls satisfies the KKT conditions")
{
    std::mt19937_64 rng(23);
    std::normal_distribution<double> noise(0.0, 0.3);
    for (int trial = 0; trial < 200; ++trial)
    {
        const Eigen::MatrixXd a = random_matrix(rng, 6, 4);
        Eigen::VectorXd b(6);
        for (int i = 0; i < 6; ++i)
            b[i] = noise(rng); // frequently infeasible, exercising the active set
        const Eigen::VectorXd x = nnls(a, b);
        REQUIRE(x.minCoeff() >= 0.0);
        const Eigen::VectorXd gradient = a.transpose() * (a * x - b);
        const double scale = std::max(1.0, (a.transpose() * b).cwiseAbs().maxCoeff());
        for (int j = 0; j < 4; ++j)
        {
            if (x[j] > 0.0)
                CHECK(std::abs(gradient[j]) <= 1e-10 * scale); // stationarity on free set
            else
                CHECK(gradient[j] >= -1e-10 * scale); // dual feasibility on active set
        }
    }
}

TEST_CASE("nnls reports non-convergence with the final residual")
{
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
    Eigen::Vector3d b(1.0, 1.0, 1.0);
    NnlsOptions opt;
    opt.max_iterations = 1; // needs three insertions
    CHECK_THROWS_AS(nnls(a, b, opt), SolverError);
    try
    {
        nnls(a, b, opt);
    }
    catch (const SolverError &e)
    {
        CHECK(std::string(e.what()).find("residual") != std::string::npos);
    }
}

TEST_CASE("nnls rejects mismatched shapes")
{
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(nnls(a, Eigen::VectorXd::Zero(4)), ValidationError);
}
