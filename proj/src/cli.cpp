#include "hdiv/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "hdiv/demand.hpp"
#include "hdiv/error.hpp"
#include "hdiv/io.hpp"
#include "hdiv/monte_carlo.hpp"
#include "hdiv/orthogonal_iv.hpp"

namespace hdiv::cli {

namespace {

const std::vector<std::string> kFitMethods = {"double_selection", "naive_stepwise", "naive_nonorthogonal",
                                              "union_2sls",       "ols",            "tsls_no_selection"};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write '" + path + "'");
    f << text;
}

io::MethodReport from_alpha(const std::string& name, const AlphaEstimate& a, double level) {
    io::MethodReport m;
    m.method = name;
    m.ok = true;
    m.alpha_hat = a.alpha_hat;
    m.std_error = a.std_error;
    m.ci_lower = a.ci_lower;
    m.ci_upper = a.ci_upper;
    m.score_set = a.score_set(level);
    m.selection = a.selection;
    return m;
}

io::MethodReport from_2sls(const std::string& name, const TwoSlsResult& r) {
    io::MethodReport m;
    m.method = name;
    m.ok = true;
    m.alpha_hat = r.alpha_hat;
    m.std_error = r.std_error;
    m.ci_lower = r.ci_lower;
    m.ci_upper = r.ci_upper;
    m.controls_used = static_cast<int>(r.controls.size());
    m.instruments_used = static_cast<int>(r.instruments.size());
    return m;
}

io::MethodReport run_method(const std::string& name, const io::FitInput& in, const PipelineOptions& options) {
    const IVDataset& data = in.data;
    if (name == "double_selection") return from_alpha(name, estimate_double_selection(data, options), options.level);
    if (name == "naive_stepwise") return from_alpha(name, estimate_naive_stepwise(data, options), options.level);
    if (name == "naive_nonorthogonal") {
        return from_alpha(name, estimate_naive_nonorthogonal(data, options), options.level);
    }
    if (name == "union_2sls") return from_2sls(name, estimate_union_2sls(data, options));
    if (name == "ols") return from_2sls(name, estimate_ols_exogenous(data, options.level));
    if (name == "tsls_no_selection") {
        std::vector<Index> controls(static_cast<std::size_t>(data.p_x()));
        std::vector<Index> instruments(static_cast<std::size_t>(data.p_z()));
        for (Index k = 0; k < data.p_x(); ++k) controls[static_cast<std::size_t>(k)] = k;
        for (Index k = 0; k < data.p_z(); ++k) instruments[static_cast<std::size_t>(k)] = k;
        return from_2sls(name, two_stage_least_squares(data, controls, instruments, options.level));
    }
    throw InputError("unknown method '" + name + "'");
}

int cmd_fit(const std::string& csv, const std::string& schema_spec, const std::string& methods_text,
            double level, bool no_intercept, const std::string& format, const std::string& out_path,
            std::ostream& out, std::ostream& err) {
    const auto started = std::chrono::steady_clock::now();
    const auto methods = split_list(methods_text);
    if (methods.empty()) throw InputError("--methods is empty");
    for (const auto& m : methods) {
        if (std::find(kFitMethods.begin(), kFitMethods.end(), m) == kFitMethods.end()) {
            throw InputError("unknown method '" + m + "'");
        }
    }
    const auto schema = io::CsvSchemaMap::load(schema_spec);
    const auto table = io::read_csv(csv);
    const auto input = io::fit_input_from_csv(table, schema, !no_intercept);

    PipelineOptions options;
    options.level = level;
    options.validate();

    io::RunReport report;
    report.input = csv;
    report.n = input.data.n();
    report.p_x = input.data.p_x();
    report.p_z = input.data.p_z();
    report.level = level;
    report.config = {{"methods", methods_text},
                     {"outcome", input.outcome_name},
                     {"endogenous", input.endogenous_name},
                     {"intercept", input.data.intercept_index ? "yes" : "no"},
                     {"penalty_c", io::format_full(options.penalty.c)},
                     {"post_lasso", options.post_lasso ? "true" : "false"},
                     {"stepwise_p_enter", io::format_full(options.stepwise.p_enter)},
                     {"stepwise_p_remove", io::format_full(options.stepwise.p_remove)}};

    int code = kOk;
    for (const auto& name : methods) {
        io::MethodReport m;
        try {
            m = run_method(name, input, options);
            if (input.panel) m.inelastic_count = demand::elasticity_report(*input.panel, m.alpha_hat).inelastic_count;
            if (m.selection && !m.selection->converged && code == kOk) code = kNonConvergence;
        } catch (const WeakIdentificationError& e) {
            m.method = name;
            m.error = e.what();
            m.exit_code = kWeakIdentification;
        } catch (const InputError& e) {
            m.method = name;
            m.error = e.what();
            m.exit_code = kInputError;
        }
        if (!m.ok && (code == kOk || code == kNonConvergence)) code = m.exit_code;
        report.methods.push_back(std::move(m));
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    std::string text;
    if (format == "json") text = io::report_json(report);
    else if (format == "csv") text = io::report_csv(report);
    else text = io::report_table(report);
    emit(text, out_path, out);
    err << "fit: " << methods.size() << " method(s) in " << report.seconds << " s\n";
    return code;
}

mc::SimulationConfig build_config(const std::string& config_path, const std::vector<std::string>& sets,
                                  std::optional<std::uint64_t> seed, std::optional<int> replications) {
    mc::SimulationConfig config;
    if (!config_path.empty()) config = io::load_simulation_config(config_path);
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        io::apply_config_entry(config, s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) config.seed = *seed;
    if (replications) config.replications = *replications;
    config.validate();
    return config;
}

std::vector<mc::Estimator> parse_estimators(const std::string& text) {
    if (text.empty()) return mc::default_estimators();
    std::vector<mc::Estimator> out;
    for (const auto& id : split_list(text)) out.push_back(mc::parse_estimator(id));
    return out;
}

int cmd_simulate(const mc::SimulationConfig& config, const std::vector<mc::Estimator>& estimators, int threads,
                 const std::string& format, const std::string& out_path, std::ostream& out, std::ostream& err) {
    mc::RunOptions options;
    options.threads = threads;
    const auto summary = mc::run_simulation(config, estimators, options);
    std::string text;
    if (format == "json") text = io::simulation_json(summary);
    else if (format == "csv") text = io::simulation_csv(summary);
    else text = io::simulation_table(summary, false);
    emit(text, out_path, out);
    if (format == "table" && !out_path.empty()) emit(io::simulation_json(summary), out_path + ".json", out);
    err << "simulate: " << config.replications << " replications in " << summary.wall_clock_seconds << " s\n";
    if (!summary.valid) err << "warning: more than 20% failed replications for some estimator; summary flagged invalid\n";
    return kOk;
}

int cmd_replicate(std::uint64_t seed, std::optional<int> replications, int threads, const std::string& format,
                  const std::string& out_path, std::ostream& out, std::ostream& err) {
    mc::SimulationConfig config;
    config.seed = seed;
    if (replications) config.replications = *replications;
    config.validate();
    mc::RunOptions options;
    options.threads = threads;
    const auto summary = mc::run_simulation(config, mc::default_estimators(), options);
    const auto checks = mc::reference_threshold_checks(summary);
    const bool pass = summary.valid &&
                      std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });

    std::string text;
    if (format == "json") {
        text = io::simulation_json(summary);
    } else if (format == "csv") {
        text = io::simulation_csv(summary);
    } else {
        text = "replications: " + std::to_string(config.replications) + ", seed: " + std::to_string(config.seed) + "\n\n";
        text += io::simulation_table(summary, true);
        text += "\nthresholds:\n";
        for (const auto& c : checks) text += std::string(c.pass ? "  PASS  " : "  FAIL  ") + c.name + " (" + c.detail + ")\n";
        text += pass ? "all thresholds pass\n" : "some thresholds fail\n";
    }
    emit(text, out_path, out);
    err << "replicate-sim: " << config.replications << " replications in " << summary.wall_clock_seconds << " s\n";
    return pass ? kOk : kFailure;
}

int cmd_expand(const std::string& csv, const std::string& schema_spec, const std::string& recipe_name,
               const std::string& out_path, std::ostream& out) {
    const auto schema = schema_spec.empty() ? io::CsvSchemaMap::blp_default() : io::CsvSchemaMap::load(schema_spec);
    const auto table = io::read_csv(csv);
    const auto panel = io::panel_from_csv(table, schema);

    demand::ExpansionRecipe recipe;
    if (recipe_name == "blp") recipe = demand::ExpansionRecipe::blp_expanded();
    else if (recipe_name == "base") recipe = demand::ExpansionRecipe::blp_base();
    else throw InputError("unknown recipe '" + recipe_name + "' (expected blp or base)");

    const auto controls = demand::expand_characteristics(panel, recipe);
    const auto instruments = demand::build_sum_instruments(panel, controls);
    const auto outcome = demand::build_logit_outcome(panel);

    const std::vector<std::string> keys = {"market", "firm", "product", "share", "outside_share", "price",
                                           "logit_share"};
    std::vector<std::string> header = keys;
    header.insert(header.end(), controls.names.begin(), controls.names.end());
    header.insert(header.end(), instruments.names.begin(), instruments.names.end());
    std::set<std::string> unique(header.begin(), header.end());
    if (unique.size() != header.size()) throw InputError("expanded column names collide with key columns");

    if (!out_path.empty()) {
        std::ostringstream os;
        io::write_csv_row(os, header);
        for (Index i = 0; i < panel.rows(); ++i) {
            const auto r = static_cast<std::size_t>(i);
            std::vector<std::string> row = {panel.market[r],
                                            panel.firm[r],
                                            panel.product[r],
                                            io::format_full(panel.share(i)),
                                            io::format_full(panel.outside_share(i)),
                                            io::format_full(panel.price(i)),
                                            io::format_full(outcome(i))};
            for (Index k = 0; k < controls.values.cols(); ++k) row.push_back(io::format_full(controls.values(i, k)));
            for (Index k = 0; k < instruments.values.cols(); ++k) {
                row.push_back(io::format_full(instruments.values(i, k)));
            }
            io::write_csv_row(os, row);
        }
        emit(os.str(), out_path, out);

        // Sidecar schema so the expanded file can be passed straight to `fit`.
        std::string sidecar = "market=market_id\nfirm=firm_id\nproduct=product_id\nshare=share\n"
                              "outside_share=outside_share\nprice=price\nlogit_share=outcome\n";
        for (const auto& n : controls.names) sidecar += n + "=control\n";
        for (const auto& n : instruments.names) sidecar += n + "=instrument\n";
        emit(sidecar, out_path + ".schema", out);
    }
    out << "controls: " << controls.values.cols() << ", instruments: " << instruments.values.cols() << "\n";
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"High-dimensional IV estimation with double selection", "hdiv"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (default: HDIV_THREADS or all cores)");

    // fit
    auto* fit = app.add_subcommand("fit", "Estimate the coefficient on the endogenous variable");
    std::string fit_csv, fit_schema, fit_methods = "double_selection", fit_format = "table", fit_out;
    double fit_level = 0.95;
    bool no_intercept = false;
    fit->add_option("csv", fit_csv, "Input CSV")->required();
    fit->add_option("--schema", fit_schema, "Column roles: inline col=role list or a file")->required();
    fit->add_option("--methods", fit_methods, "Comma-separated: " + [] {
        std::string s;
        for (const auto& m : kFitMethods) s += (s.empty() ? "" : ",") + m;
        return s;
    }());
    fit->add_option("--level", fit_level, "Confidence level");
    fit->add_flag("--no-intercept", no_intercept, "Do not add an intercept column");
    fit->add_option("--format", fit_format)->check(CLI::IsMember({"table", "json", "csv"}));
    fit->add_option("--out", fit_out, "Write the report here instead of stdout");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run the Monte Carlo experiment");
    std::string sim_config, sim_methods, sim_format = "table", sim_out;
    std::vector<std::string> sim_sets;
    std::optional<std::uint64_t> sim_seed;
    std::optional<int> sim_reps;
    sim->add_option("--config", sim_config, "key = value configuration file");
    sim->add_option("--set", sim_sets, "Override one configuration key (key=value)");
    sim->add_option("--seed", sim_seed, "Random seed");
    sim->add_option("--replications", sim_reps, "Number of replications");
    sim->add_option("--methods", sim_methods,
                    "Comma-separated estimators: oracle,naive_stepwise,naive_nonorthogonal,double_selection,union_2sls");
    sim->add_option("--format", sim_format)->check(CLI::IsMember({"table", "json", "csv"}));
    sim->add_option("--out", sim_out, "Write output here (tables also get a .json summary beside)");
    sim->add_option("--threads", threads, "Worker threads");

    // expand
    auto* exp = app.add_subcommand("expand", "Build expanded controls and sum-of-characteristics instruments");
    std::string exp_csv, exp_schema, exp_recipe = "blp", exp_out;
    exp->add_option("csv", exp_csv, "Product-level panel CSV")->required();
    exp->add_option("--schema", exp_schema, "Column roles (default: cdid, firm.id, id, share, outshr, price, air, hpwt, mpd, space)");
    exp->add_option("--recipe", exp_recipe, "blp (24 controls) or base (5 controls)")
        ->check(CLI::IsMember({"blp", "base"}));
    exp->add_option("--out", exp_out, "Expanded CSV (a .schema file for fit is written beside it)");

    // replicate-sim
    auto* rep = app.add_subcommand("replicate-sim", "Default design at 1000 replications with reference numbers");
    std::uint64_t rep_seed = mc::SimulationConfig{}.seed;
    std::optional<int> rep_reps;
    std::string rep_format = "table", rep_out;
    rep->add_option("--seed", rep_seed, "Random seed");
    rep->add_option("--replications", rep_reps, "Override the replication count");
    rep->add_option("--format", rep_format)->check(CLI::IsMember({"table", "json", "csv"}));
    rep->add_option("--out", rep_out);
    rep->add_option("--threads", threads, "Worker threads");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kInputError;
    }

    try {
        if (*fit) {
            return cmd_fit(fit_csv, fit_schema, fit_methods, fit_level, no_intercept, fit_format, fit_out, out, err);
        }
        if (*sim) {
            const auto config = build_config(sim_config, sim_sets, sim_seed, sim_reps);
            return cmd_simulate(config, parse_estimators(sim_methods), threads, sim_format, sim_out, out, err);
        }
        if (*exp) return cmd_expand(exp_csv, exp_schema, exp_recipe, exp_out, out);
        if (*rep) return cmd_replicate(rep_seed, rep_reps, threads, rep_format, rep_out, out, err);
    } catch (const WeakIdentificationError& e) {
        err << "error: " << e.what() << "\n";
        return kWeakIdentification;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}

}  // namespace hdiv::cli
