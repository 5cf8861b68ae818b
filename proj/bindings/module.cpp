#include <optional>
#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hdiv/cli.hpp"
#include "hdiv/demand.hpp"
#include "hdiv/error.hpp"
#include "hdiv/io.hpp"
#include "hdiv/lasso.hpp"
#include "hdiv/monte_carlo.hpp"
#include "hdiv/orthogonal_iv.hpp"

namespace py = pybind11;
using namespace hdiv;

namespace {

IVDataset make_dataset(Eigen::VectorXd y, Eigen::VectorXd d, Eigen::MatrixXd X, std::optional<Eigen::MatrixXd> Z,
                       std::optional<Index> intercept) {
    IVDataset data;
    data.y = std::move(y);
    data.d = std::move(d);
    data.X = std::move(X);
    data.Z = Z ? std::move(*Z) : Eigen::MatrixXd(data.y.size(), 0);
    data.intercept_index = intercept;
    return data;
}

py::dict alpha_dict(const AlphaEstimate& a) {
    py::dict out;
    out["alpha_hat"] = a.alpha_hat;
    out["std_error"] = a.std_error;
    out["ci_lower"] = a.ci_lower;
    out["ci_upper"] = a.ci_upper;
    out["variance_V"] = a.variance_V;
    out["first_stage_strength"] = a.first_stage_strength;
    py::dict sel;
    sel["outcome_controls"] = a.selection.outcome_controls;
    sel["first_stage_controls"] = a.selection.first_stage_controls;
    sel["first_stage_instruments"] = a.selection.first_stage_instruments;
    sel["projection_controls"] = a.selection.projection_controls;
    sel["converged"] = a.selection.converged;
    out["selection"] = sel;
    out["score_set"] = a.score_set(a.level).describe();
    return out;
}

}  // namespace

PYBIND11_MODULE(_hdiv, m) {
    m.doc() = "High-dimensional IV estimation with double selection";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<WeakIdentificationError>(m, "WeakIdentificationError", PyExc_ArithmeticError);
    py::register_exception<DegenerateStatisticError>(m, "DegenerateStatisticError", PyExc_ArithmeticError);

    m.def(
        "fit_lasso",
        [](Eigen::VectorXd y, Eigen::MatrixXd X, std::vector<Index> unpenalized, std::optional<double> lam) {
            PenaltyRule rule;
            rule.lambda_override = lam;
            const auto fit = fit_lasso(RegressionProblem::with_unpenalized(std::move(y), std::move(X), unpenalized), rule);
            py::dict out;
            out["coefficients"] = fit.coefficients;
            out["active_set"] = fit.active_set;
            out["lambda"] = fit.lambda;
            out["loadings"] = fit.loadings;
            out["converged"] = fit.converged;
            out["kkt_residual"] = fit.kkt_residual;
            return out;
        },
        py::arg("y"), py::arg("X"), py::arg("unpenalized") = std::vector<Index>{}, py::arg("lam") = py::none());

    m.def("penalty_level", [](Index n, Index p) { return compute_penalty_level(n, p, PenaltyRule{}); },
          py::arg("n"), py::arg("p"));

    m.def(
        "double_selection",
        [](Eigen::VectorXd y, Eigen::VectorXd d, Eigen::MatrixXd X, std::optional<Eigen::MatrixXd> Z,
           std::optional<Index> intercept, double level) {
            PipelineOptions options;
            options.level = level;
            return alpha_dict(estimate_double_selection(make_dataset(y, d, X, Z, intercept), options));
        },
        py::arg("y"), py::arg("d"), py::arg("X"), py::arg("Z") = py::none(), py::arg("intercept") = py::none(),
        py::arg("level") = 0.95);

    m.def(
        "two_stage_least_squares",
        [](Eigen::VectorXd y, Eigen::VectorXd d, Eigen::MatrixXd X, Eigen::MatrixXd Z, double level) {
            const auto data = make_dataset(y, d, X, Z, std::nullopt);
            std::vector<Index> c(static_cast<std::size_t>(X.cols())), z(static_cast<std::size_t>(Z.cols()));
            for (Index k = 0; k < X.cols(); ++k) c[static_cast<std::size_t>(k)] = k;
            for (Index k = 0; k < Z.cols(); ++k) z[static_cast<std::size_t>(k)] = k;
            const auto r = two_stage_least_squares(data, c, z, level);
            return py::make_tuple(r.alpha_hat, r.std_error);
        },
        py::arg("y"), py::arg("d"), py::arg("X"), py::arg("Z"), py::arg("level") = 0.95);

    m.def(
        "simulate_json",
        [](std::map<std::string, std::string> overrides, std::vector<std::string> estimators, int threads) {
            mc::SimulationConfig config;
            for (const auto& [k, v] : overrides) io::apply_config_entry(config, k, v);
            config.validate();
            std::vector<mc::Estimator> ids;
            for (const auto& e : estimators) ids.push_back(mc::parse_estimator(e));
            if (ids.empty()) ids = mc::default_estimators();
            mc::RunOptions options;
            options.threads = threads;
            py::gil_scoped_release release;
            return io::simulation_json(mc::run_simulation(config, ids, options));
        },
        py::arg("overrides") = std::map<std::string, std::string>{},
        py::arg("estimators") = std::vector<std::string>{}, py::arg("threads") = 1);

    m.def(
        "logit_elasticities",
        [](Eigen::VectorXd share, Eigen::VectorXd price, double alpha_hat) {
            demand::DemandPanel p;
            p.share = std::move(share);
            p.price = std::move(price);
            p.market.assign(static_cast<std::size_t>(p.share.size()), "");
            const auto r = demand::elasticity_report(p, alpha_hat);
            return py::make_tuple(r.elasticity, r.inelastic_count);
        },
        py::arg("share"), py::arg("price"), py::arg("alpha_hat"));

    m.def(
        "cli",
        [](std::vector<std::string> args) {
            std::ostringstream out, err;
            const int code = cli::run(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));

    m.attr("__version__") = io::kVersion;
}
