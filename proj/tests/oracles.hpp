#pragma once

// Reference implementations used only by the tests. They share no code with
// the library beyond Eigen.

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Standard normal quantile by bisection on erfc.
inline double normal_quantile(double p) {
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 300; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double cdf = 0.5 * std::erfc(-mid / std::sqrt(2.0));
        (cdf < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline double lasso_objective(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const Eigen::VectorXd& b,
                              double lambda, const Eigen::VectorXd& loadings, const std::vector<bool>& penalize) {
    const double n = static_cast<double>(y.size());
    double pen = 0.0;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
        if (penalize[static_cast<std::size_t>(j)]) pen += loadings(j) * std::abs(b(j));
    }
    return (y - X * b).squaredNorm() / n + lambda / n * pen;
}

// Exact minimizer of (1/n)||y - Xb||^2 + (lambda/n) sum l_j |b_j| by
// enumerating every support and sign pattern (p small). For a fixed pattern
// the stationarity condition is X_S'X_S b_S = X_S'y - (lambda/2) l_S s_S; the
// sign-consistent candidate with the lowest objective is returned.
inline Eigen::VectorXd brute_force_lasso(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, double lambda,
                                         const Eigen::VectorXd& loadings, const std::vector<bool>& penalize) {
    const int p = static_cast<int>(X.cols());
    Eigen::VectorXd best = Eigen::VectorXd::Zero(p);
    double best_obj = std::numeric_limits<double>::infinity();
    // state per column: 0 excluded, 1 positive, 2 negative (unpenalized: 0 or free)
    std::vector<int> state(static_cast<std::size_t>(p), 0);
    while (true) {
        std::vector<int> cols;
        std::vector<double> shift;
        bool valid = true;
        for (int j = 0; j < p; ++j) {
            const int s = state[static_cast<std::size_t>(j)];
            if (!penalize[static_cast<std::size_t>(j)]) {
                if (s == 2) valid = false;
                if (s == 1) {
                    cols.push_back(j);
                    shift.push_back(0.0);
                }
            } else if (s != 0) {
                cols.push_back(j);
                shift.push_back((s == 1 ? 1.0 : -1.0) * 0.5 * lambda * loadings(j));
            }
        }
        if (valid) {
            Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
            bool ok = true;
            if (!cols.empty()) {
                const int k = static_cast<int>(cols.size());
                Eigen::MatrixXd xs(X.rows(), k);
                Eigen::VectorXd rhs(k);
                for (int a = 0; a < k; ++a) xs.col(a) = X.col(cols[static_cast<std::size_t>(a)]);
                const Eigen::MatrixXd g = xs.transpose() * xs;
                rhs = xs.transpose() * y;
                for (int a = 0; a < k; ++a) rhs(a) -= shift[static_cast<std::size_t>(a)];
                Eigen::FullPivLU<Eigen::MatrixXd> lu(g);
                if (lu.rank() < k) {
                    ok = false;
                } else {
                    const Eigen::VectorXd bs = lu.solve(rhs);
                    for (int a = 0; a < k; ++a) {
                        const int j = cols[static_cast<std::size_t>(a)];
                        const int s = state[static_cast<std::size_t>(j)];
                        if (penalize[static_cast<std::size_t>(j)] && ((s == 1 && bs(a) < 0) || (s == 2 && bs(a) > 0))) {
                            ok = false;
                        }
                        b(j) = bs(a);
                    }
                }
            }
            if (ok) {
                const double obj = lasso_objective(y, X, b, lambda, loadings, penalize);
                if (obj < best_obj) {
                    best_obj = obj;
                    best = b;
                }
            }
        }
        int j = 0;
        while (j < p && ++state[static_cast<std::size_t>(j)] == 3) state[static_cast<std::size_t>(j++)] = 0;
        if (j == p) break;
    }
    return best;
}

// OLS by the normal equations; returns residuals of y on the given columns of X.
inline Eigen::VectorXd ols_residuals(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& cols) {
    if (cols.empty()) return y;
    Eigen::MatrixXd xs(X.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) xs.col(static_cast<Eigen::Index>(k)) = X.col(cols[k]);
    const Eigen::VectorXd b = (xs.transpose() * xs).ldlt().solve(xs.transpose() * y);
    return y - xs * b;
}

// Just-identified IV slope of y on d with instrument z after partialling out W.
inline double iv_slope(const Eigen::VectorXd& y, const Eigen::VectorXd& d, const Eigen::VectorXd& z,
                       const Eigen::MatrixXd& W) {
    std::vector<Eigen::Index> all;
    for (Eigen::Index k = 0; k < W.cols(); ++k) all.push_back(k);
    const Eigen::VectorXd ry = ols_residuals(y, W, all);
    const Eigen::VectorXd rd = ols_residuals(d, W, all);
    const Eigen::VectorXd rz = ols_residuals(z, W, all);
    return rz.dot(ry) / rz.dot(rd);
}

}  // namespace oracle
