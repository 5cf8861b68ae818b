#include "doctest.h"

#include <random>

#include "hdiv/error.hpp"
#include "hdiv/lasso.hpp"
#include "hdiv/orthogonal_iv.hpp"
#include "hdiv/stats.hpp"
#include "oracles.hpp"

using namespace hdiv;

namespace {

ResidualTriple triple(std::initializer_list<double> ry, std::initializer_list<double> rd,
                      std::initializer_list<double> v) {
    ResidualTriple t;
    t.rho_y = Eigen::Map<const Eigen::VectorXd>(ry.begin(), static_cast<Index>(ry.size()));
    t.rho_d = Eigen::Map<const Eigen::VectorXd>(rd.begin(), static_cast<Index>(rd.size()));
    t.v = Eigen::Map<const Eigen::VectorXd>(v.begin(), static_cast<Index>(v.size()));
    return t;
}

// n rows; X = [1, x], one strong instrument.
IVDataset strong_iv(std::uint64_t seed, Index n = 100) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    IVDataset data;
    data.X.resize(n, 2);
    data.Z.resize(n, 1);
    data.y.resize(n);
    data.d.resize(n);
    for (Index i = 0; i < n; ++i) {
        const double x = z(rng), w = z(rng), u = z(rng), e = 0.5 * u + z(rng);
        data.X(i, 0) = 1.0;
        data.X(i, 1) = x;
        data.Z(i, 0) = w;
        data.d(i) = 1.0 + x + 2.0 * w + u;
        data.y(i) = 0.5 + data.d(i) + 1.5 * x + e;
    }
    data.intercept_index = 0;
    return data;
}

}  // namespace

TEST_CASE("moment_psi by substitution and hand enumeration") {
    const auto t = triple({1, 2, -1, 0.5}, {0.5, 1, 2, -1}, {2, -1, 1, 3});
    const Eigen::VectorXd at0 = moment_psi(0.0, t);
    for (Index i = 0; i < 4; ++i) CHECK(at0(i) == t.rho_y(i) * t.v(i));
    // alpha = 2: (1-1)*2, (2-2)*(-1), (-1-4)*1, (0.5+2)*3
    const Eigen::VectorXd at2 = moment_psi(2.0, t);
    CHECK(at2(0) == 0.0);
    CHECK(at2(1) == 0.0);
    CHECK(at2(2) == -5.0);
    CHECK(at2(3) == 7.5);
    CHECK(empirical_moment(2.0, t) == doctest::Approx(0.625));

    const auto same = triple({1, -2, 3}, {1, -2, 3}, {0.3, 0.1, 2});
    CHECK(empirical_moment(1.0, same) == 0.0);
}

TEST_CASE("solve_alpha: instrument equal to regressor gives the OLS slope") {
    const auto t = triple({1.0, 2.5, -0.5, 0.7, -1.9}, {0.8, 1.7, -0.2, 0.1, -1.5}, {0.8, 1.7, -0.2, 0.1, -1.5});
    const auto est = solve_alpha(t);
    CHECK(est.alpha_hat == doctest::Approx(t.rho_d.dot(t.rho_y) / t.rho_d.squaredNorm()).epsilon(1e-14));
    CHECK(score_statistic(est.alpha_hat, t) == doctest::Approx(0.0).epsilon(1e-20));
}

TEST_CASE("solve_alpha: exact fit flags a degenerate standard error") {
    const auto t = triple({3, -6, 1.5, 9}, {1, -2, 0.5, 3}, {0.2, 1, -1, 0.4});
    const auto est = solve_alpha(t);
    CHECK(est.alpha_hat == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(est.std_error == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(est.degenerate_std_error);
    CHECK_THROWS_AS(score_statistic(3.0, t), DegenerateStatisticError);
}

TEST_CASE("solve_alpha n=6 fixture matches an independent sandwich evaluation") {
    const auto t = triple({0.9, -1.2, 0.4, 2.2, -0.3, -1.1}, {0.5, -0.8, 0.1, 1.3, 0.2, -0.9},
                          {0.6, -0.4, 0.3, 1.1, 0.1, -0.7});
    const double n = 6;
    double svr = 0, svd = 0;
    for (Index i = 0; i < 6; ++i) {
        svr += t.v(i) * t.rho_y(i);
        svd += t.v(i) * t.rho_d(i);
    }
    const double a = svr / svd;
    double s2 = 0;
    for (Index i = 0; i < 6; ++i) {
        const double psi = (t.rho_y(i) - t.rho_d(i) * a) * t.v(i);
        s2 += psi * psi;
    }
    const double V = (s2 / n) / ((svd / n) * (svd / n));
    const double se = std::sqrt(V / n);
    const double q = oracle::normal_quantile(0.975);

    const auto est = solve_alpha(t);
    CHECK(std::abs(est.alpha_hat - a) < 1e-12);
    CHECK(std::abs(est.std_error - se) < 1e-12);
    CHECK(std::abs(est.variance_V - V) < 1e-12);
    CHECK(std::abs(est.ci_lower - (a - q * se)) < 1e-9);
    CHECK(std::abs(est.ci_upper - (a + q * se)) < 1e-9);
    CHECK(est.ci_lower < est.alpha_hat);
    CHECK(est.alpha_hat < est.ci_upper);
}

TEST_CASE("solve_alpha refuses an instrument with no first-stage signal") {
    const auto t = triple({1, 2, 3, 4}, {1, -1, 1, -1}, {1, 1, 1, 1});
    CHECK_THROWS_AS(solve_alpha(t), WeakIdentificationError);
}

TEST_CASE("score statistic and inverted confidence set") {
    const auto t = triple({0.9, -1.2, 0.4, 2.2, -0.3, -1.1, 0.8, 0.05}, {0.5, -0.8, 0.1, 1.3, 0.2, -0.9, 0.6, -0.2},
                          {0.6, -0.4, 0.3, 1.1, 0.1, -0.7, 0.4, 0.2});
    const auto est = solve_alpha(t);
    CHECK(score_statistic(est.alpha_hat, t) == doctest::Approx(0.0).epsilon(1e-20));
    CHECK(est.score_at(est.alpha_hat + 0.1) == doctest::Approx(score_statistic(est.alpha_hat + 0.1, t)));

    const double crit = stats::chi_square_critical(0.05, 1);
    CHECK(crit == doctest::Approx(3.841).epsilon(1e-3));
    const auto set = score_confidence_set(t, 0.95);
    CHECK(set.contains(est.alpha_hat));
    if (set.kind == ScoreSet::Kind::Interval) {
        CHECK(score_statistic(set.lower, t) == doctest::Approx(crit).epsilon(1e-8));
        CHECK(score_statistic(set.upper, t) == doctest::Approx(crit).epsilon(1e-8));
        CHECK_FALSE(set.contains(set.upper + 1e-3));
    }
}

TEST_CASE("double selection on a strong just-identified design equals the IV oracle") {
    const auto data = strong_iv(31);
    const auto est = estimate_double_selection(data);
    REQUIRE(est.selection.outcome_controls == 2);
    REQUIRE(est.selection.first_stage_controls == 2);
    REQUIRE(est.selection.first_stage_instruments == 1);
    REQUIRE(est.selection.projection_controls == 2);
    const double ref = oracle::iv_slope(data.y, data.d, data.Z.col(0), data.X);
    CHECK(std::abs(est.alpha_hat - ref) < 1e-10);

    // With every control kept, the controls term of the Naive 2 instrument is
    // orthogonal to both residuals, so it coincides with double selection.
    const auto naive2 = estimate_naive_nonorthogonal(data);
    CHECK(std::abs(naive2.alpha_hat - est.alpha_hat) < 1e-10);

    const auto tsls = two_stage_least_squares(data, {0, 1}, {0});
    CHECK(std::abs(tsls.alpha_hat - ref) < 1e-10);
    const auto uni = estimate_union_2sls(data);
    CHECK(std::abs(uni.alpha_hat - ref) < 1e-10);
    CHECK(uni.controls == std::vector<Index>{0, 1});
}

TEST_CASE("2SLS drops collinear instruments and reports them") {
    auto data = strong_iv(32);
    Eigen::MatrixXd z(data.n(), 2);
    z << data.Z, 2.0 * data.Z;
    data.Z = z;
    const auto r = two_stage_least_squares(data, {0, 1}, {0, 1});
    CHECK(r.instruments.size() == 1);
    CHECK(r.dropped_collinear_instruments.size() == 1);
}

TEST_CASE("exogenous mode reduces to partialling-out OLS") {
    for (std::uint64_t seed = 40; seed < 45; ++seed) {
        auto data = strong_iv(seed, 80);
        data.Z.resize(data.n(), 0);
        const auto est = estimate_double_selection(data);
        REQUIRE(est.selection.outcome_controls == 2);
        // each residual comes from its own selected set; the intercept is always kept
        auto selected = [&](const Eigen::VectorXd& response) {
            std::vector<Index> cols{0};
            for (Index j : fit_lasso(RegressionProblem::with_unpenalized(response, data.X, {0})).active_set) {
                if (j != 0) cols.push_back(j);
            }
            return cols;
        };
        const Eigen::VectorXd ry = oracle::ols_residuals(data.y, data.X, selected(data.y));
        const Eigen::VectorXd rd = oracle::ols_residuals(data.d, data.X, selected(data.d));
        CHECK(std::abs(est.alpha_hat - rd.dot(ry) / rd.squaredNorm()) < 1e-10);

        Eigen::MatrixXd dx(data.n(), 3);
        dx << data.d, data.X;
        const Eigen::VectorXd ols = (dx.transpose() * dx).ldlt().solve(dx.transpose() * data.y);
        CHECK(std::abs(estimate_ols_exogenous(data).alpha_hat - ols(0)) < 1e-10);
    }
}

TEST_CASE("irrelevant instruments trigger a weak-identification refusal") {
    std::mt19937_64 rng(50);
    std::normal_distribution<double> z;
    IVDataset data;
    const Index n = 100;
    data.X = Eigen::MatrixXd::Ones(n, 1);
    data.Z.resize(n, 3);
    data.y.resize(n);
    data.d.resize(n);
    for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < 3; ++k) data.Z(i, k) = z(rng);
        data.d(i) = z(rng);
        data.y(i) = data.d(i) + z(rng);
    }
    data.intercept_index = 0;
    CHECK_THROWS_AS(estimate_double_selection(data), WeakIdentificationError);
}

TEST_CASE("dataset validation") {
    auto data = strong_iv(51, 20);
    data.d.conservativeResize(19);
    CHECK_THROWS_AS(estimate_double_selection(data), InputError);
}
