#pragma once

#include <vector>

#include <Eigen/Dense>

#include "hdiv/lasso.hpp"

namespace hdiv {

struct OlsFit {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd residuals;
    Eigen::MatrixXd robust_covariance;     // HC0 sandwich
    Eigen::MatrixXd classical_covariance;  // s^2 (X'X)^{-1}, s^2 = RSS / (n - k)
    bool full_rank = true;
};

// Least squares on the full design (penalize flags are ignored).
OlsFit fit_ols(const RegressionProblem& problem);

// Forward/backward stepwise selection with classical t-test p-values.
struct StepwiseRule {
    double p_enter = 0.05;
    double p_remove = 0.10;
    int max_steps = 0;  // 0 means 2 * p

    void validate() const;
};

struct StepwiseResult {
    std::vector<Index> selected;           // ascending; always contains unpenalized columns
    std::vector<Index> skipped_collinear;  // candidates rejected for rank deficiency
    int steps = 0;
    bool hit_step_cap = false;
    std::vector<double> rss_path;          // RSS after every accepted addition
};

StepwiseResult stepwise_select(const RegressionProblem& problem, const StepwiseRule& rule = {});

}  // namespace hdiv
