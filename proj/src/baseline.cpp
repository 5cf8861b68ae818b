#include "hdiv/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hdiv/error.hpp"
#include "hdiv/stats.hpp"

namespace hdiv {

OlsFit fit_ols(const RegressionProblem& problem) {
    if (problem.n() == 0) throw InputError("OLS needs at least one row");
    problem.validate();

    const Eigen::MatrixXd& x = problem.design;
    const double n = static_cast<double>(problem.n());
    const Index k = problem.p();

    OlsFit fit;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    Eigen::MatrixXd xtx_inv;
    if (qr.rank() < k) {
        fit.full_rank = false;
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
        fit.coefficients = cod.solve(problem.response);
        xtx_inv = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(x.transpose() * x)
                      .pseudoInverse();
    } else {
        fit.coefficients = qr.solve(problem.response);
        // (X'X)^{-1} = P R^{-1} R^{-T} P'
        const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
        const Eigen::MatrixXd r_inv =
            r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
        xtx_inv = qr.colsPermutation() * (r_inv * r_inv.transpose()) * qr.colsPermutation().transpose();
    }
    fit.residuals = problem.response - x * fit.coefficients;

    const Eigen::MatrixXd weighted = x.array().colwise() * fit.residuals.array();
    const Eigen::MatrixXd meat = weighted.transpose() * weighted;
    fit.robust_covariance = xtx_inv * meat * xtx_inv;

    const double dof = n - static_cast<double>(qr.rank());
    const double sigma2 = dof > 0.0 ? fit.residuals.squaredNorm() / dof
                                    : std::numeric_limits<double>::quiet_NaN();
    fit.classical_covariance = sigma2 * xtx_inv;
    return fit;
}

void StepwiseRule::validate() const {
    if (!(p_enter >= 0.0 && p_enter < 1.0)) throw ConfigError("p_enter must lie in [0, 1)");
    if (!(p_remove > 0.0 && p_remove < 1.0)) throw ConfigError("p_remove must lie in (0, 1)");
    if (!(p_enter < p_remove)) throw ConfigError("p_enter must be smaller than p_remove");
    if (max_steps < 0) throw ConfigError("max_steps must be nonnegative");
}

namespace {

// Incremental least-squares state for the currently included columns: an
// orthonormal basis of their span, the candidates' components orthogonal to
// it, the response residual, and (X_S'X_S)^{-1}.
class StepwiseState {
public:
    explicit StepwiseState(const RegressionProblem& problem)
        : x_(problem.design), y_(problem.response), residualized_(problem.design),
          residual_(problem.response), column_sq_norm_(problem.design.colwise().squaredNorm()) {}

    const std::vector<Index>& included() const { return included_; }
    const Eigen::VectorXd& residual() const { return residual_; }
    const Eigen::MatrixXd& residualized() const { return residualized_; }
    double column_sq_norm(Index j) const { return column_sq_norm_(j); }
    Index size() const { return static_cast<Index>(included_.size()); }

    // Returns false (state untouched) when the column lies in the current span.
    bool add(Index j) {
        Eigen::VectorXd q = residualized_.col(j);
        const double sq = q.squaredNorm();
        if (!(sq > kCollinear * column_sq_norm_(j)) || column_sq_norm_(j) == 0.0) return false;

        const Index k = size();
        if (k > 0) q -= basis_.leftCols(k) * (basis_.leftCols(k).transpose() * q);
        const double qn = q.norm();
        if (!(qn > 0.0)) return false;
        q /= qn;

        if (basis_.cols() <= k) basis_.conservativeResize(x_.rows(), std::max<Index>(2 * k, 8));
        basis_.col(k) = q;
        residualized_.noalias() -= q * (q.transpose() * residualized_);
        residual_ -= q * q.dot(residual_);

        // Bordered inverse; the Schur complement equals the residualized norm.
        const Eigen::VectorXd cross = k > 0 ? columns_().transpose() * x_.col(j) : Eigen::VectorXd();
        Eigen::MatrixXd grown(k + 1, k + 1);
        if (k > 0) {
            const Eigen::VectorXd u = inverse_ * cross;
            grown.topLeftCorner(k, k) = inverse_ + u * u.transpose() / sq;
            grown.topRightCorner(k, 1) = -u / sq;
            grown.bottomLeftCorner(1, k) = -u.transpose() / sq;
        }
        grown(k, k) = 1.0 / sq;
        inverse_ = std::move(grown);
        xty_.conservativeResize(k + 1);
        xty_(k) = x_.col(j).dot(y_);
        included_.push_back(j);
        return true;
    }

    void remove_at(Index pos) {
        const Index k = size();
        Eigen::MatrixXd shrunk(k - 1, k - 1);
        const double pivot = inverse_(pos, pos);
        std::vector<Index> keep;
        for (Index i = 0; i < k; ++i) {
            if (i != pos) keep.push_back(i);
        }
        for (Index a = 0; a < k - 1; ++a) {
            for (Index b = 0; b < k - 1; ++b) {
                shrunk(a, b) = inverse_(keep[a], keep[b]) -
                               inverse_(keep[a], pos) * inverse_(pos, keep[b]) / pivot;
            }
        }
        inverse_ = std::move(shrunk);
        Eigen::VectorXd xty(k - 1);
        for (Index a = 0; a < k - 1; ++a) xty(a) = xty_(keep[a]);
        xty_ = std::move(xty);
        included_.erase(included_.begin() + pos);
        rebuild_basis();
    }

    Eigen::VectorXd coefficients() const { return inverse_ * xty_; }
    double inverse_diagonal(Index pos) const { return inverse_(pos, pos); }

private:
    static constexpr double kCollinear = 1e-10;

    Eigen::MatrixXd columns_() const {
        Eigen::MatrixXd out(x_.rows(), size());
        for (Index a = 0; a < size(); ++a) out.col(a) = x_.col(included_[static_cast<std::size_t>(a)]);
        return out;
    }

    void rebuild_basis() {
        const Index k = size();
        residualized_ = x_;
        residual_ = y_;
        if (k == 0) {
            basis_.resize(x_.rows(), 0);
            return;
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(columns_());
        basis_ = qr.householderQ() * Eigen::MatrixXd::Identity(x_.rows(), k);
        residualized_.noalias() -= basis_ * (basis_.transpose() * x_);
        residual_ -= basis_ * (basis_.transpose() * y_);
    }

    const Eigen::MatrixXd& x_;
    const Eigen::VectorXd& y_;
    Eigen::MatrixXd basis_;
    Eigen::MatrixXd residualized_;
    Eigen::VectorXd residual_;
    Eigen::RowVectorXd column_sq_norm_;
    Eigen::MatrixXd inverse_;
    Eigen::VectorXd xty_;
    std::vector<Index> included_;
};

}  // namespace

StepwiseResult stepwise_select(const RegressionProblem& problem, const StepwiseRule& rule) {
    problem.validate();
    rule.validate();

    const Index n = problem.n();
    const Index p = problem.p();
    const int max_steps = rule.max_steps > 0 ? rule.max_steps : static_cast<int>(2 * p);
    const double y_scale = std::max(problem.response.squaredNorm(), 1e-300);

    StepwiseResult result;
    StepwiseState state(problem);
    std::vector<bool> in_model(static_cast<std::size_t>(p), false);
    auto note_skip = [&](Index j) {
        if (std::find(result.skipped_collinear.begin(), result.skipped_collinear.end(), j) ==
            result.skipped_collinear.end()) {
            result.skipped_collinear.push_back(j);
        }
    };

    for (Index j = 0; j < p; ++j) {
        if (problem.penalize[static_cast<std::size_t>(j)]) continue;
        if (state.add(j)) {
            in_model[static_cast<std::size_t>(j)] = true;
        } else {
            note_skip(j);
        }
    }

    while (result.steps < max_steps) {
        bool changed = false;

        // Forward: the candidate with the largest partial t statistic.
        const double rss = state.residual().squaredNorm();
        const double dof = static_cast<double>(n - state.size() - 1);
        if (dof >= 1.0 && rss > 1e-20 * y_scale) {
            const Eigen::RowVectorXd cross = state.residual().transpose() * state.residualized();
            const Eigen::RowVectorXd norms = state.residualized().colwise().squaredNorm();
            Index best = -1;
            double best_gain = -1.0;
            for (Index j = 0; j < p; ++j) {
                if (in_model[static_cast<std::size_t>(j)] ||
                    !problem.penalize[static_cast<std::size_t>(j)]) {
                    continue;
                }
                if (!(norms(j) > 1e-10 * state.column_sq_norm(j))) {
                    if (state.column_sq_norm(j) > 0.0) note_skip(j);
                    continue;
                }
                const double gain = cross(j) * cross(j) / norms(j);
                if (gain > best_gain) {
                    best_gain = gain;
                    best = j;
                }
            }
            if (best >= 0) {
                const double new_rss = std::max(rss - best_gain, 0.0);
                const double t = new_rss > 0.0 ? std::sqrt(best_gain / (new_rss / dof))
                                               : std::numeric_limits<double>::infinity();
                if (stats::student_t_two_sided_p(t, dof) < rule.p_enter) {
                    if (state.add(best)) {
                        in_model[static_cast<std::size_t>(best)] = true;
                        result.rss_path.push_back(state.residual().squaredNorm());
                        ++result.steps;
                        changed = true;
                    } else {
                        note_skip(best);
                    }
                }
            }
        }

        // Backward: drop the included variable with the largest p-value.
        if (result.steps < max_steps && state.size() > 0) {
            const double resid_dof = static_cast<double>(n - state.size());
            const double sigma2 = resid_dof > 0.0 ? state.residual().squaredNorm() / resid_dof : 0.0;
            const Eigen::VectorXd coef = state.coefficients();
            Index worst_pos = -1;
            double worst_p = rule.p_remove;
            // Scan in column-index order so ties resolve to the smallest index.
            std::vector<Index> order(static_cast<std::size_t>(state.size()));
            for (Index a = 0; a < state.size(); ++a) order[static_cast<std::size_t>(a)] = a;
            std::sort(order.begin(), order.end(), [&](Index a, Index b) {
                return state.included()[static_cast<std::size_t>(a)] <
                       state.included()[static_cast<std::size_t>(b)];
            });
            for (Index pos : order) {
                const Index col = state.included()[static_cast<std::size_t>(pos)];
                if (!problem.penalize[static_cast<std::size_t>(col)]) continue;
                const double se = std::sqrt(sigma2 * state.inverse_diagonal(pos));
                double pval;
                if (resid_dof <= 0.0) {
                    pval = 0.0;
                } else if (se > 0.0) {
                    pval = stats::student_t_two_sided_p(coef(pos) / se, resid_dof);
                } else {
                    pval = coef(pos) != 0.0 ? 0.0 : 1.0;
                }
                if (pval > worst_p) {
                    worst_p = pval;
                    worst_pos = pos;
                }
            }
            if (worst_pos >= 0) {
                in_model[static_cast<std::size_t>(state.included()[static_cast<std::size_t>(worst_pos)])] = false;
                state.remove_at(worst_pos);
                ++result.steps;
                changed = true;
            }
        }

        if (!changed) break;
    }
    result.hit_step_cap = result.steps >= max_steps;
    result.selected = state.included();
    std::sort(result.selected.begin(), result.selected.end());
    return result;
}

}  // namespace hdiv
