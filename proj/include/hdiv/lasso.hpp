#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hdiv {

using Index = Eigen::Index;

// A least-squares problem. Columns with penalize[j] == false (typically the
// intercept) enter every fit without shrinkage.
struct RegressionProblem {
    Eigen::VectorXd response;
    Eigen::MatrixXd design;
    std::vector<bool> penalize;

    Index n() const { return design.rows(); }
    Index p() const { return design.cols(); }

    // Builds a problem with every column penalized except `unpenalized`.
    static RegressionProblem with_unpenalized(Eigen::VectorXd response, Eigen::MatrixXd design,
                                              const std::vector<Index>& unpenalized = {});

    // Throws InputError when shapes disagree or entries are non-finite.
    void validate() const;
};

// Tuning for the data-driven penalty level and the loading iteration.
//
// lambda = 2 c sqrt(n) Phi^{-1}(1 - gamma / (2 p)), with gamma defaulting to
// 0.1 / log(max(n, p)) when unset.
struct PenaltyRule {
    double c = 1.1;
    std::optional<double> gamma;
    int max_loading_iterations = 5;
    double loading_tolerance = 1e-4;

    // Bypasses compute_penalty_level (e.g. lambda = 0 reduces to OLS).
    std::optional<double> lambda_override;
    // Fixes the loadings instead of estimating them (length p; ignored for
    // unpenalized columns).
    std::optional<Eigen::VectorXd> fixed_loadings;

    int max_sweeps = 10000;
    double coefficient_tolerance = 1e-8;

    double resolved_gamma(Index n, Index p) const;
    void validate() const;
};

struct LassoFit {
    Eigen::VectorXd coefficients;
    std::vector<Index> active_set;  // indices with nonzero coefficients, ascending
    double lambda = 0.0;
    Eigen::VectorXd loadings;
    double objective = 0.0;
    int iterations = 0;          // coordinate-descent sweeps, all loading rounds
    int loading_iterations = 0;  // loading updates actually performed
    bool converged = false;
    double kkt_residual = 0.0;   // max KKT violation in units of (lambda/n) * max loading
    std::string warning;         // empty unless something needs attention
};

struct RefitResult {
    Eigen::VectorXd coefficients;
    std::vector<Index> support;  // columns used in the least-squares refit
    bool rank_deficient = false;
    bool empty_selection = false;
};

double compute_penalty_level(Index n, Index p, const PenaltyRule& rule);

// Penalized columns that are all-zero or constant are pinned to zero.
// Minimizes (1/n)||y - Xb||^2 + (lambda/n) sum_j loading_j |b_j|.
LassoFit fit_lasso(const RegressionProblem& problem, const PenaltyRule& rule = {});

// Coordinate descent at a fixed lambda and fixed loadings. `objective_trace`,
// when given, receives the objective after every sweep.
LassoFit solve_weighted_lasso(const RegressionProblem& problem, double lambda,
                              const Eigen::VectorXd& loadings, const PenaltyRule& rule = {},
                              std::vector<double>* objective_trace = nullptr);

// Smallest lambda (at the given loadings) for which every penalized
// coefficient is zero.
double lambda_max(const RegressionProblem& problem, const Eigen::VectorXd& loadings);

double lasso_objective(const RegressionProblem& problem, const Eigen::VectorXd& coefficients,
                       double lambda, const Eigen::VectorXd& loadings);

// Max KKT violation, scaled as in LassoFit::kkt_residual.
double kkt_violation(const RegressionProblem& problem, const Eigen::VectorXd& coefficients,
                     double lambda, const Eigen::VectorXd& loadings);

// OLS on the active set plus unpenalized columns; minimum-norm when the
// selected block is rank-deficient.
RefitResult post_lasso_refit(const RegressionProblem& problem, const LassoFit& fit);

// Least squares restricted to `columns` (zeros elsewhere).
RefitResult least_squares_on(const RegressionProblem& problem, std::vector<Index> columns);

}  // namespace hdiv
