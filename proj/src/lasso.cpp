#include "hdiv/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hdiv/error.hpp"
#include "hdiv/stats.hpp"

namespace hdiv {

RegressionProblem RegressionProblem::with_unpenalized(Eigen::VectorXd response,
                                                      Eigen::MatrixXd design,
                                                      const std::vector<Index>& unpenalized) {
    RegressionProblem problem{std::move(response), std::move(design), {}};
    problem.penalize.assign(static_cast<std::size_t>(problem.design.cols()), true);
    for (Index j : unpenalized) {
        if (j < 0 || j >= problem.design.cols()) {
            throw InputError("unpenalized column index out of range");
        }
        problem.penalize[static_cast<std::size_t>(j)] = false;
    }
    return problem;
}

void RegressionProblem::validate() const {
    if (design.cols() < 1) throw InputError("regression design has no columns");
    if (design.rows() < 1) throw InputError("regression design has no rows");
    if (response.size() != design.rows()) {
        throw InputError("response length does not match design row count");
    }
    if (static_cast<Index>(penalize.size()) != design.cols()) {
        throw InputError("penalize flags length does not match design column count");
    }
    if (!design.allFinite()) throw InputError("design contains non-finite entries");
    if (!response.allFinite()) throw InputError("response contains non-finite entries");
}

double PenaltyRule::resolved_gamma(Index n, Index p) const {
    if (gamma) return *gamma;
    return 0.1 / std::log(static_cast<double>(std::max<Index>({n, p, 3})));
}

void PenaltyRule::validate() const {
    if (!(c > 1.0)) throw ConfigError("penalty slack constant c must exceed 1");
    if (gamma && !(*gamma > 0.0 && *gamma < 1.0)) {
        throw ConfigError("penalty confidence gamma must lie in (0, 1)");
    }
    if (max_loading_iterations < 0) throw ConfigError("max_loading_iterations must be >= 0");
    if (!(loading_tolerance > 0.0)) throw ConfigError("loading_tolerance must be positive");
    if (max_sweeps < 1) throw ConfigError("max_sweeps must be positive");
    if (lambda_override && !(*lambda_override >= 0.0)) {
        throw ConfigError("lambda override must be nonnegative");
    }
}

double compute_penalty_level(Index n, Index p, const PenaltyRule& rule) {
    rule.validate();
    if (n < 2 || p < 1) throw ConfigError("penalty level needs n >= 2 and p >= 1");
    const double gamma = rule.resolved_gamma(n, p);
    const double q = stats::normal_quantile(1.0 - gamma / (2.0 * static_cast<double>(p)));
    return 2.0 * rule.c * std::sqrt(static_cast<double>(n)) * q;
}

namespace {

double soft_threshold(double value, double threshold) {
    if (value > threshold) return value - threshold;
    if (value < -threshold) return value + threshold;
    return 0.0;
}

// Coordinate descent on the penalized block after partialling out the
// unpenalized columns (exact for the Lasso since they carry no penalty). The
// unpenalized coefficients are recovered by least squares at the end. Penalized
// columns are standardized to unit second moment after partialling.
class CoordinateDescent {
public:
    explicit CoordinateDescent(const RegressionProblem& problem)
        : problem_(problem),
          n_(problem.n()),
          p_(problem.p()),
          scale_(Eigen::VectorXd::Ones(p_)),
          pinned_(static_cast<std::size_t>(p_), false),
          design_(problem.design),
          response_(problem.response) {
        for (Index j = 0; j < p_; ++j) {
            const auto col = problem.design.col(j);
            if (problem.penalize[static_cast<std::size_t>(j)]) {
                penalized_.push_back(j);
            } else if (col.squaredNorm() > 0.0) {
                free_.push_back(j);
            } else {
                pinned_[static_cast<std::size_t>(j)] = true;
            }
        }
        if (!free_.empty()) {
            Eigen::MatrixXd w(n_, static_cast<Index>(free_.size()));
            for (std::size_t k = 0; k < free_.size(); ++k) w.col(static_cast<Index>(k)) = problem.design.col(free_[k]);
            free_qr_.compute(w);
            const Eigen::MatrixXd q = free_qr_.householderQ() * Eigen::MatrixXd::Identity(n_, free_qr_.rank());
            design_ -= q * (q.transpose() * design_);
            response_ -= q * (q.transpose() * response_);
        }
        for (Index j : penalized_) {
            const auto raw = problem.design.col(j);
            auto col = design_.col(j);
            const double s = std::sqrt(col.squaredNorm() / static_cast<double>(n_));
            const bool constant = raw.maxCoeff() == raw.minCoeff();
            // a column inside the span of the unpenalized block cannot move the fit
            const bool absorbed = col.norm() <= 1e-10 * raw.norm();
            if (s == 0.0 || constant || absorbed) {
                pinned_[static_cast<std::size_t>(j)] = true;
                col.setZero();
            } else {
                scale_(j) = s;
                col /= s;
            }
        }
    }

    bool pinned(Index j) const { return pinned_[static_cast<std::size_t>(j)]; }

    // Column j with the unpenalized block partialled out, original units.
    Eigen::VectorXd partialled_column(Index j) const { return design_.col(j) * scale_(j); }

    // Works in standardized coordinates; `beta` is both warm start and output.
    // Only penalized entries are touched. Returns the number of sweeps and
    // whether the tolerance was met.
    std::pair<int, bool> solve(double lambda, const Eigen::VectorXd& loadings, Eigen::VectorXd& beta,
                               const PenaltyRule& rule, int sweep_budget,
                               std::vector<double>* trace) const {
        const double n = static_cast<double>(n_);
        Eigen::VectorXd threshold = Eigen::VectorXd::Zero(p_);
        for (Index j : penalized_) threshold(j) = 0.5 * lambda * loadings(j) / scale_(j);
        Eigen::VectorXd residual = response_;
        for (Index j : penalized_) {
            if (beta(j) != 0.0) residual.noalias() -= beta(j) * design_.col(j);
        }

        auto objective = [&] {
            double pen = 0.0;
            for (Index j : penalized_) pen += 2.0 * threshold(j) * std::abs(beta(j));
            return (residual.squaredNorm() + pen) / n;
        };

        // One pass over `columns`; returns the largest coefficient change.
        auto sweep = [&](const std::vector<Index>& columns) {
            double max_change = 0.0;
            for (Index j : columns) {
                const double old = beta(j);
                const double rho = design_.col(j).dot(residual) + n * old;
                const double updated = soft_threshold(rho, threshold(j)) / n;
                if (updated != old) {
                    residual.noalias() -= (updated - old) * design_.col(j);
                    beta(j) = updated;
                    max_change = std::max(max_change, std::abs(updated - old));
                }
            }
            return max_change;
        };
        auto tolerance = [&] {
            return rule.coefficient_tolerance * (1.0 + beta.cwiseAbs().maxCoeff());
        };

        std::vector<Index> all;
        for (Index j : penalized_) {
            if (!pinned(j)) all.push_back(j);
        }
        if (all.empty()) {
            if (trace) trace->push_back(objective());
            return {0, true};
        }

        int sweeps = 0;
        while (sweeps < sweep_budget) {
            const double change = sweep(all);
            ++sweeps;
            if (trace) trace->push_back(objective());
            if (change < tolerance()) return {sweeps, true};

            std::vector<Index> active;
            for (Index j : all) {
                if (beta(j) != 0.0) active.push_back(j);
            }
            while (sweeps < sweep_budget) {
                const double inner = sweep(active);
                ++sweeps;
                if (trace) trace->push_back(objective());
                if (inner < tolerance()) break;
            }
        }
        return {sweeps, false};
    }

    // Penalized entries unscaled; unpenalized ones by least squares on what the
    // penalized part leaves over.
    Eigen::VectorXd to_original(const Eigen::VectorXd& beta) const {
        Eigen::VectorXd coef = Eigen::VectorXd::Zero(p_);
        for (Index j : penalized_) coef(j) = beta(j) / scale_(j);
        if (!free_.empty()) {
            const Eigen::VectorXd rest = problem_.response - problem_.design * coef;
            const Eigen::VectorXd w = free_qr_.solve(rest);
            for (std::size_t k = 0; k < free_.size(); ++k) coef(free_[k]) = w(static_cast<Index>(k));
        }
        return coef;
    }

private:
    const RegressionProblem& problem_;
    Index n_;
    Index p_;
    Eigen::VectorXd scale_;
    std::vector<bool> pinned_;
    std::vector<Index> penalized_;
    std::vector<Index> free_;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> free_qr_;
    Eigen::MatrixXd design_;
    Eigen::VectorXd response_;
};

Eigen::VectorXd residual_loadings(const RegressionProblem& problem, const Eigen::VectorXd& resid,
                                  const CoordinateDescent& cd) {
    const Eigen::VectorXd e2 = resid.array().square();
    const double n = static_cast<double>(problem.n());
    Eigen::VectorXd loadings = Eigen::VectorXd::Zero(problem.p());
    for (Index j = 0; j < problem.p(); ++j) {
        if (!problem.penalize[static_cast<std::size_t>(j)] || cd.pinned(j)) continue;
        // partialled column: the penalty only acts on this direction, so the
        // loading does not change when a regressor is shifted by a constant
        loadings(j) = std::sqrt(cd.partialled_column(j).array().square().matrix().dot(e2) / n);
    }
    return loadings;
}

std::vector<Index> nonzero_indices(const Eigen::VectorXd& v) {
    std::vector<Index> idx;
    for (Index j = 0; j < v.size(); ++j) {
        if (v(j) != 0.0) idx.push_back(j);
    }
    return idx;
}

void finalize(LassoFit& fit, const RegressionProblem& problem) {
    fit.active_set = nonzero_indices(fit.coefficients);
    fit.objective = lasso_objective(problem, fit.coefficients, fit.lambda, fit.loadings);
    fit.kkt_residual = kkt_violation(problem, fit.coefficients, fit.lambda, fit.loadings);
    if (!fit.converged) {
        fit.warning = "coordinate descent hit the sweep cap before converging";
    }
}

}  // namespace

double lasso_objective(const RegressionProblem& problem, const Eigen::VectorXd& coefficients,
                       double lambda, const Eigen::VectorXd& loadings) {
    const double n = static_cast<double>(problem.n());
    double penalty = 0.0;
    for (Index j = 0; j < problem.p(); ++j) {
        if (problem.penalize[static_cast<std::size_t>(j)]) {
            penalty += loadings(j) * std::abs(coefficients(j));
        }
    }
    return (problem.response - problem.design * coefficients).squaredNorm() / n +
           lambda / n * penalty;
}

double kkt_violation(const RegressionProblem& problem, const Eigen::VectorXd& coefficients,
                     double lambda, const Eigen::VectorXd& loadings) {
    const double n = static_cast<double>(problem.n());
    const Eigen::VectorXd gradient =
        -2.0 / n * (problem.design.transpose() * (problem.response - problem.design * coefficients));
    double max_loading = 0.0;
    double worst = 0.0;
    for (Index j = 0; j < problem.p(); ++j) {
        const bool penalized = problem.penalize[static_cast<std::size_t>(j)];
        const double bound = penalized ? lambda / n * loadings(j) : 0.0;
        if (penalized) max_loading = std::max(max_loading, loadings(j));
        double violation;
        if (coefficients(j) != 0.0) {
            const double sign = coefficients(j) > 0.0 ? 1.0 : -1.0;
            violation = std::abs(gradient(j) + sign * bound);
        } else if (penalized) {
            violation = std::max(0.0, std::abs(gradient(j)) - bound);
        } else {
            // Unpenalized columns pinned to zero are degenerate (all-zero).
            violation = std::abs(gradient(j));
        }
        worst = std::max(worst, violation);
    }
    const double scale = lambda / n * max_loading;
    return scale > 0.0 ? worst / scale : worst;
}

double lambda_max(const RegressionProblem& problem, const Eigen::VectorXd& loadings) {
    problem.validate();
    // Residual after fitting the unpenalized block alone.
    std::vector<Index> free_cols;
    for (Index j = 0; j < problem.p(); ++j) {
        if (!problem.penalize[static_cast<std::size_t>(j)]) free_cols.push_back(j);
    }
    Eigen::VectorXd resid = problem.response;
    if (!free_cols.empty()) {
        resid -= problem.design * least_squares_on(problem, free_cols).coefficients;
    }
    double out = 0.0;
    for (Index j = 0; j < problem.p(); ++j) {
        if (!problem.penalize[static_cast<std::size_t>(j)] || loadings(j) <= 0.0) continue;
        out = std::max(out, 2.0 * std::abs(problem.design.col(j).dot(resid)) / loadings(j));
    }
    return out;
}

LassoFit solve_weighted_lasso(const RegressionProblem& problem, double lambda,
                              const Eigen::VectorXd& loadings, const PenaltyRule& rule,
                              std::vector<double>* objective_trace) {
    problem.validate();
    rule.validate();
    if (loadings.size() != problem.p()) throw InputError("loadings length must equal p");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");

    CoordinateDescent cd(problem);
    Eigen::VectorXd used = loadings;
    for (Index j = 0; j < problem.p(); ++j) {
        if (!problem.penalize[static_cast<std::size_t>(j)] || cd.pinned(j)) used(j) = 0.0;
    }
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(problem.p());
    auto [sweeps, converged] = cd.solve(lambda, used, beta, rule, rule.max_sweeps, objective_trace);

    LassoFit fit;
    fit.coefficients = cd.to_original(beta);
    fit.lambda = lambda;
    fit.loadings = used;
    fit.iterations = sweeps;
    fit.converged = converged;
    finalize(fit, problem);
    return fit;
}

LassoFit fit_lasso(const RegressionProblem& problem, const PenaltyRule& rule) {
    problem.validate();
    rule.validate();

    const Index n = problem.n();
    const Index p = problem.p();
    const Index penalized_count = static_cast<Index>(
        std::count(problem.penalize.begin(), problem.penalize.end(), true));

    CoordinateDescent cd(problem);

    double lambda = 0.0;
    if (rule.lambda_override) {
        lambda = *rule.lambda_override;
    } else {
        if (n < 2) throw InputError("lasso needs at least two observations");
        lambda = compute_penalty_level(n, std::max<Index>(penalized_count, 1), rule);
    }

    Eigen::VectorXd loadings;
    const bool iterate = !rule.fixed_loadings.has_value();
    if (rule.fixed_loadings) {
        if (rule.fixed_loadings->size() != p) throw InputError("fixed loadings length must equal p");
        loadings = *rule.fixed_loadings;
        for (Index j = 0; j < p; ++j) {
            if (!problem.penalize[static_cast<std::size_t>(j)] || cd.pinned(j)) loadings(j) = 0.0;
        }
    } else {
        const Eigen::VectorXd centered =
            problem.response.array() - problem.response.mean();
        loadings = residual_loadings(problem, centered, cd);
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    int budget = rule.max_sweeps;
    auto [sweeps, converged] = cd.solve(lambda, loadings, beta, rule, budget, nullptr);
    int total_sweeps = sweeps;
    budget -= sweeps;
    int rounds = 0;

    if (iterate) {
        const double response_scale = problem.response.squaredNorm();
        for (int k = 1; k <= rule.max_loading_iterations && budget > 0; ++k) {
            const Eigen::VectorXd resid = problem.response - problem.design * cd.to_original(beta);
            if (resid.squaredNorm() <= 1e-24 * std::max(response_scale, 1.0)) break;
            Eigen::VectorXd updated = residual_loadings(problem, resid, cd);
            double change = 0.0;
            for (Index j = 0; j < p; ++j) {
                if (loadings(j) > 0.0) {
                    change = std::max(change, std::abs(updated(j) - loadings(j)) / loadings(j));
                } else if (updated(j) > 0.0) {
                    change = std::numeric_limits<double>::infinity();
                }
            }
            if (change < rule.loading_tolerance) break;
            loadings = std::move(updated);
            std::tie(sweeps, converged) = cd.solve(lambda, loadings, beta, rule, budget, nullptr);
            total_sweeps += sweeps;
            budget -= sweeps;
            rounds = k;
        }
    }

    LassoFit fit;
    fit.coefficients = cd.to_original(beta);
    fit.lambda = lambda;
    fit.loadings = loadings;
    fit.iterations = total_sweeps;
    fit.loading_iterations = rounds;
    fit.converged = converged;
    finalize(fit, problem);
    return fit;
}

RefitResult least_squares_on(const RegressionProblem& problem, std::vector<Index> columns) {
    std::sort(columns.begin(), columns.end());
    columns.erase(std::unique(columns.begin(), columns.end()), columns.end());

    RefitResult out;
    out.coefficients = Eigen::VectorXd::Zero(problem.p());
    out.support = columns;
    if (columns.empty()) {
        out.empty_selection = true;
        return out;
    }
    Eigen::MatrixXd sub(problem.n(), static_cast<Index>(columns.size()));
    for (std::size_t k = 0; k < columns.size(); ++k) {
        sub.col(static_cast<Index>(k)) = problem.design.col(columns[k]);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
    Eigen::VectorXd solved;
    if (qr.rank() < sub.cols()) {
        out.rank_deficient = true;
        solved = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(sub).solve(problem.response);
    } else {
        solved = qr.solve(problem.response);
    }
    for (std::size_t k = 0; k < columns.size(); ++k) {
        out.coefficients(columns[k]) = solved(static_cast<Index>(k));
    }
    return out;
}

RefitResult post_lasso_refit(const RegressionProblem& problem, const LassoFit& fit) {
    problem.validate();
    if (fit.coefficients.size() != problem.p()) {
        throw InputError("lasso fit does not match the problem dimension");
    }
    std::vector<Index> columns = fit.active_set;
    for (Index j = 0; j < problem.p(); ++j) {
        if (!problem.penalize[static_cast<std::size_t>(j)]) columns.push_back(j);
    }
    return least_squares_on(problem, std::move(columns));
}

}  // namespace hdiv
