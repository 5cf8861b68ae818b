#include "hdiv/orthogonal_iv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hdiv/error.hpp"
#include "hdiv/stats.hpp"

namespace hdiv {

void IVDataset::validate() const {
    const Index n = y.size();
    if (n < 1) throw InputError("dataset has no observations");
    if (d.size() != n || X.rows() != n || (Z.cols() > 0 && Z.rows() != n)) {
        throw InputError("dataset row counts disagree across y, d, X, Z");
    }
    if (X.cols() < 1) throw InputError("dataset needs at least one control column");
    if (intercept_index && (*intercept_index < 0 || *intercept_index >= X.cols())) {
        throw InputError("intercept index out of range");
    }
    if (!y.allFinite() || !d.allFinite() || !X.allFinite() || (Z.size() > 0 && !Z.allFinite())) {
        throw InputError("dataset contains non-finite values");
    }
}

void ResidualTriple::validate() const {
    if (rho_y.size() == 0) throw InputError("residual triple is empty");
    if (rho_d.size() != rho_y.size() || v.size() != rho_y.size()) {
        throw InputError("residual triple components differ in length");
    }
}

void PipelineOptions::validate() const {
    penalty.validate();
    stepwise.validate();
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
    if (!(weak_tolerance_factor >= 0.0)) throw ConfigError("weak tolerance must be nonnegative");
}

bool ScoreSet::contains(double alpha) const {
    switch (kind) {
        case Kind::Interval: return alpha >= lower && alpha <= upper;
        case Kind::Complement: return alpha <= lower || alpha >= upper;
        case Kind::LowerRay: return alpha <= upper;
        case Kind::UpperRay: return alpha >= lower;
        case Kind::RealLine: return true;
    }
    return true;
}

std::string ScoreSet::describe() const {
    std::ostringstream os;
    os.precision(6);
    switch (kind) {
        case Kind::Interval: os << "[" << lower << ", " << upper << "]"; break;
        case Kind::Complement: os << "(-inf, " << lower << "] U [" << upper << ", inf)"; break;
        case Kind::LowerRay: os << "(-inf, " << upper << "]"; break;
        case Kind::UpperRay: os << "[" << lower << ", inf)"; break;
        case Kind::RealLine: os << "(-inf, inf)"; break;
    }
    return os.str();
}

Eigen::VectorXd moment_psi(double alpha, const ResidualTriple& residuals) {
    residuals.validate();
    return ((residuals.rho_y - alpha * residuals.rho_d).array() * residuals.v.array()).matrix();
}

double empirical_moment(double alpha, const ResidualTriple& residuals) {
    return moment_psi(alpha, residuals).mean();
}

namespace {

double sample_sd(const Eigen::VectorXd& x) {
    const double mean = x.mean();
    return std::sqrt((x.array() - mean).square().mean());
}

double two_sided_critical(double level) {
    return stats::normal_quantile(1.0 - (1.0 - level) / 2.0);
}

}  // namespace

AlphaEstimate solve_alpha(const ResidualTriple& residuals, double level,
                          double weak_tolerance_factor) {
    residuals.validate();
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
    const Index n = residuals.size();

    const double numerator = residuals.v.dot(residuals.rho_y) / static_cast<double>(n);
    const double denominator = residuals.v.dot(residuals.rho_d) / static_cast<double>(n);
    const double tolerance =
        weak_tolerance_factor * sample_sd(residuals.rho_d) * sample_sd(residuals.v);
    if (!(std::abs(denominator) > tolerance) || denominator == 0.0) {
        throw WeakIdentificationError(
            "instrument is numerically uncorrelated with the partialled-out regressor; "
            "use score-based (weak-identification robust) inference");
    }

    AlphaEstimate est;
    est.n = n;
    est.level = level;
    est.alpha_hat = numerator / denominator;
    est.first_stage_strength = denominator;

    const Eigen::VectorXd psi = moment_psi(est.alpha_hat, residuals);
    const double psi_sq = psi.squaredNorm() / static_cast<double>(n);
    est.variance_V = psi_sq / (denominator * denominator);
    est.std_error = std::sqrt(est.variance_V / static_cast<double>(n));

    const double scale = (residuals.rho_y.array() * residuals.v.array()).matrix().norm() /
                         std::sqrt(static_cast<double>(n));
    est.degenerate_std_error = std::sqrt(psi_sq) <= 1e-12 * std::max(scale, 1e-300);

    const double z = two_sided_critical(level);
    est.ci_lower = est.alpha_hat - z * est.std_error;
    est.ci_upper = est.alpha_hat + z * est.std_error;
    est.residuals = residuals;
    return est;
}

double score_statistic(double alpha0, const ResidualTriple& residuals) {
    const Eigen::VectorXd psi = moment_psi(alpha0, residuals);
    const double n = static_cast<double>(psi.size());
    const double mean_sq = psi.squaredNorm() / n;
    if (!(mean_sq > 0.0)) throw DegenerateStatisticError("score statistic: all moments are zero");
    const double mean = psi.mean();
    return n * mean * mean / mean_sq;
}

ScoreSet score_confidence_set(const ResidualTriple& residuals, double level) {
    residuals.validate();
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
    const double n = static_cast<double>(residuals.size());
    const double q = stats::chi_square_critical(1.0 - level, 1.0);

    const Eigen::ArrayXd ry = residuals.rho_y.array();
    const Eigen::ArrayXd rd = residuals.rho_d.array();
    const Eigen::ArrayXd v = residuals.v.array();
    const Eigen::ArrayXd v2 = v.square();
    const double a = (v * ry).mean();
    const double b = (v * rd).mean();
    const double sa = (v2 * ry * ry).mean();
    const double sb = (v2 * ry * rd).mean();
    const double sc = (v2 * rd * rd).mean();

    // f(alpha) = n (a - b alpha)^2 - q s(alpha); the set is {f <= 0}.
    const double c2 = n * b * b - q * sc;
    const double c1 = -2.0 * (n * a * b - q * sb);
    const double c0 = n * a * a - q * sa;
    auto f = [&](double x) { return (c2 * x + c1) * x + c0; };

    // Fallback for boundaries the closed form cannot resolve: bisection from an
    // interior point (the estimate, where f <= 0) outward.
    auto bisect_boundary = [&](double inside, double direction) {
        double step = 1.0 + std::abs(inside);
        double outside = inside + direction * step;
        for (int i = 0; i < 200 && f(outside) <= 0.0; ++i) {
            step *= 2.0;
            outside = inside + direction * step;
        }
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (inside + outside);
            if (f(mid) <= 0.0) inside = mid; else outside = mid;
        }
        return inside;
    };

    ScoreSet set;
    const double magnitude = n * b * b + q * sc;
    if (std::abs(c2) <= 1e-12 * magnitude) {
        if (c1 > 0.0) {
            set.kind = ScoreSet::Kind::LowerRay;
            set.upper = -c0 / c1;
        } else if (c1 < 0.0) {
            set.kind = ScoreSet::Kind::UpperRay;
            set.lower = -c0 / c1;
        } else {
            set.kind = ScoreSet::Kind::RealLine;
        }
        return set;
    }

    const double disc = c1 * c1 - 4.0 * c2 * c0;
    if (c2 < 0.0 && disc <= 0.0) {
        set.kind = ScoreSet::Kind::RealLine;
        return set;
    }
    const double root_disc = std::sqrt(std::max(disc, 0.0));
    const double half = -0.5 * (c1 + (c1 >= 0.0 ? root_disc : -root_disc));
    double r1 = half / c2;
    double r2 = half != 0.0 ? c0 / half : r1;
    if (r1 > r2) std::swap(r1, r2);

    if (c2 > 0.0) {
        set.kind = ScoreSet::Kind::Interval;
        const double centre = b != 0.0 ? a / b : 0.5 * (r1 + r2);
        if (!std::isfinite(r1)) r1 = bisect_boundary(centre, -1.0);
        if (!std::isfinite(r2)) r2 = bisect_boundary(centre, 1.0);
    } else {
        set.kind = ScoreSet::Kind::Complement;
    }
    set.lower = r1;
    set.upper = r2;
    return set;
}

double AlphaEstimate::score_at(double alpha) const {
    return score_statistic(alpha, residuals);
}

ScoreSet AlphaEstimate::score_set(double set_level) const {
    return score_confidence_set(residuals, set_level);
}

ResidualTriple residuals_from(const IVDataset& data, const NuisanceEstimates& eta) {
    ResidualTriple r;
    const Eigen::VectorXd x_vartheta = data.X * eta.vartheta;
    r.rho_y = data.y - data.X * eta.theta;
    r.rho_d = data.d - x_vartheta;
    r.v = data.X * eta.gamma - x_vartheta;
    if (data.p_z() > 0) r.v += data.Z * eta.delta;
    return r;
}

SelectedFit lasso_select(const Eigen::VectorXd& response, const Eigen::MatrixXd& design,
                         std::optional<Index> unpenalized, const PipelineOptions& options) {
    std::vector<Index> free_cols;
    if (unpenalized) free_cols.push_back(*unpenalized);
    const RegressionProblem problem =
        RegressionProblem::with_unpenalized(response, design, free_cols);
    const LassoFit fit = fit_lasso(problem, options.penalty);

    SelectedFit out;
    out.converged = fit.converged;
    out.warning = fit.warning;
    for (Index j : fit.active_set) {
        if (problem.penalize[static_cast<std::size_t>(j)]) out.selected.push_back(j);
    }
    out.coefficients = options.post_lasso ? post_lasso_refit(problem, fit).coefficients
                                          : fit.coefficients;
    return out;
}

SelectedFit stepwise_refit(const Eigen::VectorXd& response, const Eigen::MatrixXd& design,
                           std::optional<Index> unpenalized, const StepwiseRule& rule) {
    std::vector<Index> free_cols;
    if (unpenalized) free_cols.push_back(*unpenalized);
    const RegressionProblem problem =
        RegressionProblem::with_unpenalized(response, design, free_cols);
    const StepwiseResult step = stepwise_select(problem, rule);

    SelectedFit out;
    for (Index j : step.selected) {
        if (problem.penalize[static_cast<std::size_t>(j)]) out.selected.push_back(j);
    }
    out.coefficients = least_squares_on(problem, step.selected).coefficients;
    if (step.hit_step_cap) out.warning = "stepwise selection hit its step cap";
    return out;
}

namespace {

enum class Selector { Lasso, Stepwise };
enum class Instrument { Orthogonal, FittedFirstStage };

int count_controls(const std::vector<Index>& selected, Index limit, bool with_intercept) {
    const auto c = std::count_if(selected.begin(), selected.end(), [&](Index j) { return j < limit; });
    return static_cast<int>(c) + (with_intercept ? 1 : 0);
}

void absorb(SelectionCounts& counts, const SelectedFit& fit) {
    counts.converged = counts.converged && fit.converged;
    if (!fit.warning.empty()) counts.warnings.push_back(fit.warning);
}

AlphaEstimate run_pipeline(const IVDataset& data, const PipelineOptions& options,
                           Selector selector, Instrument instrument) {
    data.validate();
    options.validate();

    auto select = [&](const Eigen::VectorXd& response, const Eigen::MatrixXd& design) {
        return selector == Selector::Lasso
                   ? lasso_select(response, design, data.intercept_index, options)
                   : stepwise_refit(response, design, data.intercept_index, options.stepwise);
    };

    const Index px = data.p_x();
    const Index pz = data.p_z();
    const bool with_intercept = data.intercept_index.has_value();
    NuisanceEstimates eta;
    SelectionCounts counts;
    ResidualTriple triple;

    if (pz == 0) {
        if (instrument == Instrument::FittedFirstStage) {
            throw InputError("the non-orthogonal estimator needs at least one instrument");
        }
        // Exogenous d: partial X out of both y and d, and instrument d by its own residual.
        const SelectedFit first = select(data.d, data.X);
        const SelectedFit outcome = select(data.y, data.X);
        absorb(counts, first);
        absorb(counts, outcome);
        eta.gamma = first.coefficients;
        eta.vartheta = first.coefficients;
        eta.theta = outcome.coefficients;
        eta.delta = Eigen::VectorXd::Zero(0);
        counts.first_stage_controls = count_controls(first.selected, px, with_intercept);
        counts.projection_controls = counts.first_stage_controls;
        counts.outcome_controls = count_controls(outcome.selected, px, with_intercept);
        triple.rho_y = data.y - data.X * eta.theta;
        triple.rho_d = data.d - data.X * eta.vartheta;
        triple.v = triple.rho_d;
    } else {
        Eigen::MatrixXd xz(data.n(), px + pz);
        xz << data.X, data.Z;
        const SelectedFit first = select(data.d, xz);
        absorb(counts, first);
        counts.first_stage_controls = count_controls(first.selected, px, with_intercept);
        counts.first_stage_instruments = static_cast<int>(
            std::count_if(first.selected.begin(), first.selected.end(), [&](Index j) { return j >= px; }));
        if (counts.first_stage_instruments == 0) {
            throw WeakIdentificationError(
                "no instruments selected in the first stage; use weak-identification robust "
                "score inference");
        }
        eta.gamma = first.coefficients.head(px);
        eta.delta = first.coefficients.tail(pz);

        const SelectedFit outcome = select(data.y, data.X);
        absorb(counts, outcome);
        eta.theta = outcome.coefficients;
        counts.outcome_controls = count_controls(outcome.selected, px, with_intercept);

        const Eigen::VectorXd d_hat = data.X * eta.gamma + data.Z * eta.delta;
        const SelectedFit projection = select(d_hat, data.X);
        absorb(counts, projection);
        eta.vartheta = projection.coefficients;
        counts.projection_controls = count_controls(projection.selected, px, with_intercept);

        triple.rho_y = data.y - data.X * eta.theta;
        triple.rho_d = data.d - data.X * eta.vartheta;
        triple.v = instrument == Instrument::Orthogonal ? Eigen::VectorXd(d_hat - data.X * eta.vartheta)
                                                        : d_hat;
    }

    AlphaEstimate est = solve_alpha(triple, options.level, options.weak_tolerance_factor);
    est.selection = std::move(counts);
    est.nuisance = std::move(eta);
    return est;
}

// Columns of `candidates` (indices into `pool`) that are linearly independent
// of `base` and of each other, in order; the rest are reported in `dropped`.
std::vector<Index> independent_columns(const Eigen::MatrixXd& base, const Eigen::MatrixXd& pool,
                                       const std::vector<Index>& candidates,
                                       std::vector<Index>& dropped, Eigen::MatrixXd& basis) {
    const Index n = pool.rows();
    basis.resize(n, 0);
    auto try_add = [&](Eigen::VectorXd col) {
        const double original = col.squaredNorm();
        if (original == 0.0) return false;
        for (int pass = 0; pass < 2 && basis.cols() > 0; ++pass) {
            col -= basis * (basis.transpose() * col);
        }
        const double remaining = col.squaredNorm();
        if (!(remaining > 1e-10 * original)) return false;
        basis.conservativeResize(n, basis.cols() + 1);
        basis.col(basis.cols() - 1) = col / std::sqrt(remaining);
        return true;
    };
    for (Index j = 0; j < base.cols(); ++j) try_add(base.col(j));
    std::vector<Index> kept;
    for (Index j : candidates) {
        if (try_add(pool.col(j))) kept.push_back(j); else dropped.push_back(j);
    }
    return kept;
}

}  // namespace

AlphaEstimate estimate_double_selection(const IVDataset& data, const PipelineOptions& options) {
    return run_pipeline(data, options, Selector::Lasso, Instrument::Orthogonal);
}

AlphaEstimate estimate_naive_stepwise(const IVDataset& data, const PipelineOptions& options) {
    return run_pipeline(data, options, Selector::Stepwise, Instrument::Orthogonal);
}

AlphaEstimate estimate_naive_nonorthogonal(const IVDataset& data, const PipelineOptions& options) {
    if (data.p_z() < 1) throw InputError("the non-orthogonal estimator needs at least one instrument");
    return run_pipeline(data, options, Selector::Lasso, Instrument::FittedFirstStage);
}

TwoSlsResult two_stage_least_squares(const IVDataset& data, std::vector<Index> controls,
                                     std::vector<Index> instruments, double level) {
    data.validate();
    std::sort(controls.begin(), controls.end());
    controls.erase(std::unique(controls.begin(), controls.end()), controls.end());
    std::sort(instruments.begin(), instruments.end());
    instruments.erase(std::unique(instruments.begin(), instruments.end()), instruments.end());

    TwoSlsResult out;
    Eigen::MatrixXd basis;
    out.controls = independent_columns(Eigen::MatrixXd(data.n(), 0), data.X, controls,
                                       out.dropped_collinear_controls, basis);
    Eigen::MatrixXd xc(data.n(), static_cast<Index>(out.controls.size()));
    for (std::size_t k = 0; k < out.controls.size(); ++k) xc.col(static_cast<Index>(k)) = data.X.col(out.controls[k]);

    out.instruments = independent_columns(xc, data.Z, instruments,
                                          out.dropped_collinear_instruments, basis);
    if (out.instruments.empty()) {
        throw WeakIdentificationError("2SLS has no usable excluded instruments");
    }

    const Index kc = xc.cols();
    Eigen::MatrixXd regressors(data.n(), 1 + kc);
    regressors << data.d, xc;
    // basis spans [controls, instruments]; project the regressors onto it.
    const Eigen::MatrixXd fitted = basis * (basis.transpose() * regressors);
    const Eigen::MatrixXd gram = fitted.transpose() * fitted;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
    if (qr.rank() < gram.cols()) {
        throw WeakIdentificationError("excluded instruments carry no signal for the endogenous regressor");
    }
    const Eigen::MatrixXd bread = qr.inverse();
    const Eigen::VectorXd coef = bread * (fitted.transpose() * data.y);
    const Eigen::VectorXd resid = data.y - regressors * coef;
    const Eigen::MatrixXd weighted = fitted.array().colwise() * resid.array();
    const Eigen::MatrixXd cov = bread * (weighted.transpose() * weighted) * bread;

    out.alpha_hat = coef(0);
    out.std_error = std::sqrt(cov(0, 0));
    const double z = two_sided_critical(level);
    out.ci_lower = out.alpha_hat - z * out.std_error;
    out.ci_upper = out.alpha_hat + z * out.std_error;
    return out;
}

TwoSlsResult estimate_union_2sls(const IVDataset& data, const PipelineOptions& options) {
    data.validate();
    options.validate();
    if (data.p_z() < 1) throw InputError("union 2SLS needs at least one instrument");
    const Index px = data.p_x();

    PipelineOptions selection_only = options;
    selection_only.post_lasso = false;

    Eigen::MatrixXd xz(data.n(), px + data.p_z());
    xz << data.X, data.Z;
    const SelectedFit first = lasso_select(data.d, xz, data.intercept_index, selection_only);
    const SelectedFit reduced = lasso_select(data.d, data.X, data.intercept_index, selection_only);
    const SelectedFit outcome = lasso_select(data.y, data.X, data.intercept_index, selection_only);

    std::vector<Index> controls;
    std::vector<Index> instruments;
    for (Index j : first.selected) {
        if (j < px) controls.push_back(j); else instruments.push_back(j - px);
    }
    controls.insert(controls.end(), reduced.selected.begin(), reduced.selected.end());
    controls.insert(controls.end(), outcome.selected.begin(), outcome.selected.end());
    if (data.intercept_index) controls.push_back(*data.intercept_index);
    if (instruments.empty()) {
        throw WeakIdentificationError("no instruments selected in the first stage");
    }
    return two_stage_least_squares(data, std::move(controls), std::move(instruments), options.level);
}

TwoSlsResult estimate_ols_exogenous(const IVDataset& data, double level) {
    data.validate();
    Eigen::MatrixXd design(data.n(), 1 + data.p_x());
    design << data.d, data.X;
    const RegressionProblem problem = RegressionProblem::with_unpenalized(data.y, design, {});
    const OlsFit fit = fit_ols(problem);

    TwoSlsResult out;
    out.alpha_hat = fit.coefficients(0);
    out.std_error = std::sqrt(fit.robust_covariance(0, 0));
    const double z = two_sided_critical(level);
    out.ci_lower = out.alpha_hat - z * out.std_error;
    out.ci_upper = out.alpha_hat + z * out.std_error;
    for (Index j = 0; j < data.p_x(); ++j) out.controls.push_back(j);
    return out;
}

}  // namespace hdiv
