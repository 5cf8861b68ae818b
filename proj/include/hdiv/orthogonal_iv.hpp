#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hdiv/baseline.hpp"
#include "hdiv/lasso.hpp"

namespace hdiv {

// Linear IV model y = alpha d + x'beta + eps, d = x'gamma + z'delta + u.
// Z may have zero columns (exogenous d, partialling-out mode).
struct IVDataset {
    Eigen::VectorXd y;
    Eigen::VectorXd d;
    Eigen::MatrixXd X;
    Eigen::MatrixXd Z;
    std::optional<Index> intercept_index;  // column of X excluded from the penalty

    Index n() const { return y.size(); }
    Index p_x() const { return X.cols(); }
    Index p_z() const { return Z.cols(); }
    void validate() const;
};

// Nuisance estimates: theta (y on X), vartheta (first stage fit on X),
// gamma/delta (d on X, Z).
struct NuisanceEstimates {
    Eigen::VectorXd theta;
    Eigen::VectorXd vartheta;
    Eigen::VectorXd gamma;
    Eigen::VectorXd delta;
};

// Per-regression selected-set sizes. Counts include unpenalized columns.
struct SelectionCounts {
    int first_stage_controls = 0;     // d on X, Z: controls
    int first_stage_instruments = 0;  // d on X, Z: instruments
    int outcome_controls = 0;         // y on X
    int projection_controls = 0;      // fitted d on X
    bool converged = true;            // every lasso fit converged
    std::vector<std::string> warnings;
};

struct ResidualTriple {
    Eigen::VectorXd rho_y;
    Eigen::VectorXd rho_d;
    Eigen::VectorXd v;

    Index size() const { return rho_y.size(); }
    void validate() const;
};

// Confidence set from inverting the score statistic. C(alpha) <= q is a
// quadratic inequality, so the set is an interval, the complement of an open
// interval, a half-line, or the whole line.
struct ScoreSet {
    enum class Kind { Interval, Complement, LowerRay, UpperRay, RealLine };
    Kind kind = Kind::RealLine;
    double lower = 0.0;
    double upper = 0.0;

    bool contains(double alpha) const;
    std::string describe() const;
};

struct AlphaEstimate {
    double alpha_hat = 0.0;
    double std_error = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double level = 0.95;
    double variance_V = 0.0;
    double first_stage_strength = 0.0;  // n^{-1} sum v_i rho^d_i
    bool degenerate_std_error = false;  // exact fit: psi vanishes at alpha_hat
    Index n = 0;
    SelectionCounts selection;
    NuisanceEstimates nuisance;
    ResidualTriple residuals;           // retained so the score can be evaluated later

    // C(alpha) for this estimate's residuals.
    double score_at(double alpha) const;
    ScoreSet score_set(double level) const;
};

struct PipelineOptions {
    PenaltyRule penalty;
    bool post_lasso = true;
    double level = 0.95;
    double weak_tolerance_factor = 1e-8;
    StepwiseRule stepwise;

    void validate() const;
};

// psi_i(alpha) = (rho_y_i - rho_d_i alpha) v_i.
Eigen::VectorXd moment_psi(double alpha, const ResidualTriple& residuals);

// Empirical moment: mean of moment_psi.
double empirical_moment(double alpha, const ResidualTriple& residuals);

// Exact root of the empirical moment with plug-in sandwich variance.
AlphaEstimate solve_alpha(const ResidualTriple& residuals, double level = 0.95,
                          double weak_tolerance_factor = 1e-8);

// C(alpha0) = n Mhat(alpha0)^2 / (n^{-1} sum psi_i(alpha0)^2); chi-square(1) under the null.
double score_statistic(double alpha0, const ResidualTriple& residuals);

// {alpha : C(alpha) <= chi-square(1) critical value at 1 - level}.
ScoreSet score_confidence_set(const ResidualTriple& residuals, double level = 0.95);

// Residual triple implied by a set of nuisance values.
ResidualTriple residuals_from(const IVDataset& data, const NuisanceEstimates& eta);

// Lasso (or Post-Lasso) fit with the dataset's intercept left unpenalized.
struct SelectedFit {
    Eigen::VectorXd coefficients;
    std::vector<Index> selected;  // penalized columns chosen by the selector
    bool converged = true;
    std::string warning;
};
SelectedFit lasso_select(const Eigen::VectorXd& response, const Eigen::MatrixXd& design,
                         std::optional<Index> unpenalized, const PipelineOptions& options);
SelectedFit stepwise_refit(const Eigen::VectorXd& response, const Eigen::MatrixXd& design,
                           std::optional<Index> unpenalized, const StepwiseRule& rule);

// Double-selection orthogonal-moment estimator.
AlphaEstimate estimate_double_selection(const IVDataset& data, const PipelineOptions& options = {});

// Same pipeline with each Lasso replaced by stepwise selection + OLS refit.
AlphaEstimate estimate_naive_stepwise(const IVDataset& data, const PipelineOptions& options = {});

// Post-Lasso nuisances, but the instrument is the fitted first stage
// x'gamma + z'delta without partialling out the controls.
AlphaEstimate estimate_naive_nonorthogonal(const IVDataset& data,
                                           const PipelineOptions& options = {});

struct TwoSlsResult {
    double alpha_hat = 0.0;
    double std_error = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    std::vector<Index> controls;     // columns of X used
    std::vector<Index> instruments;  // columns of Z used
    std::vector<Index> dropped_collinear_controls;
    std::vector<Index> dropped_collinear_instruments;
};

// 2SLS of y on d and X[:, controls] with instruments Z[:, instruments];
// heteroscedasticity-robust (HC0) standard error for the d coefficient.
TwoSlsResult two_stage_least_squares(const IVDataset& data, std::vector<Index> controls,
                                     std::vector<Index> instruments, double level = 0.95);

// Union-of-controls 2SLS built from three Lasso selections.
TwoSlsResult estimate_union_2sls(const IVDataset& data, const PipelineOptions& options = {});

// OLS of y on (d, X), robust standard error for d.
TwoSlsResult estimate_ols_exogenous(const IVDataset& data, double level = 0.95);

}  // namespace hdiv
