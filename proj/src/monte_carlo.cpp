#include "hdiv/monte_carlo.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <thread>

#include "hdiv/error.hpp"
#include "hdiv/stats.hpp"

namespace hdiv::mc {

void SimulationConfig::validate() const {
    if (n < 3) throw ConfigError("simulation needs n >= 3");
    if (p_x < 1) throw ConfigError("simulation needs p_x >= 1");
    if (p_z < 0) throw ConfigError("simulation needs p_z >= 0");
    if (sparsity < 1) throw ConfigError("sparsity must be positive");
    if (!(error_correlation > -1.0 && error_correlation < 1.0)) {
        throw ConfigError("error_correlation must lie in (-1, 1)");
    }
    if (!(x_correlation >= 0.0 && x_correlation < 1.0)) {
        throw ConfigError("x_correlation must lie in [0, 1)");
    }
    if (!(coefficient_decay >= 0.0)) throw ConfigError("coefficient_decay must be nonnegative");
    if (delta_scale && !std::isfinite(*delta_scale)) throw ConfigError("delta_scale must be finite");
    if (!(concentration_target >= 0.0)) throw ConfigError("concentration_target must be nonnegative");
    if (replications < 1) throw ConfigError("replications must be positive");
    if (!(test_level > 0.0 && test_level < 1.0)) throw ConfigError("test_level must lie in (0, 1)");
    if (!std::isfinite(alpha0) || !std::isfinite(beta_scale) || !std::isfinite(gamma_scale) ||
        !std::isfinite(pi_diagonal)) {
        throw ConfigError("simulation coefficients must be finite");
    }
}

double SimulationConfig::resolved_delta_scale() const {
    if (delta_scale) return *delta_scale;
    if (p_z == 0) return 0.0;
    // w' Sigma w for w_j = j^{-decay} under the Toeplitz covariance.
    Eigen::VectorXd w(p_z);
    for (int j = 0; j < p_z; ++j) w(j) = std::pow(static_cast<double>(j + 1), -coefficient_decay);
    double quad = 0.0;
    for (int j = 0; j < p_z; ++j) {
        for (int k = 0; k < p_z; ++k) {
            quad += w(j) * w(k) * std::pow(x_correlation, std::abs(j - k));
        }
    }
    return std::sqrt(concentration_target / (static_cast<double>(n) * quad));
}

TrueParameters true_parameters(const SimulationConfig& config) {
    config.validate();
    const int offset = config.include_intercept ? 1 : 0;
    const int cols = config.p_x + offset;
    const double delta_scale = config.resolved_delta_scale();

    TrueParameters t;
    t.beta = Eigen::VectorXd::Zero(cols);
    t.eta.gamma = Eigen::VectorXd::Zero(cols);
    t.eta.delta = Eigen::VectorXd::Zero(config.p_z);
    for (int j = 0; j < config.p_x; ++j) {
        const double w = std::pow(static_cast<double>(j + 1), -config.coefficient_decay);
        t.beta(offset + j) = config.beta_scale * w;
        t.eta.gamma(offset + j) = config.gamma_scale * w;
    }
    for (int k = 0; k < config.p_z; ++k) {
        t.eta.delta(k) = delta_scale * std::pow(static_cast<double>(k + 1), -config.coefficient_decay);
    }
    t.eta.vartheta = t.eta.gamma;
    for (int k = 0; k < std::min(config.p_z, config.p_x); ++k) {
        t.eta.vartheta(offset + k) += config.pi_diagonal * t.eta.delta(k);
    }
    t.eta.theta = t.beta + config.alpha0 * t.eta.vartheta;
    return t;
}

std::mt19937_64 replication_stream(std::uint64_t seed, std::uint64_t replication,
                                   std::uint32_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replication),
                      static_cast<std::uint32_t>(replication >> 32), tag, 0x68646976u};
    return std::mt19937_64(seq);
}

namespace {

// Rows with Toeplitz covariance rho^{|j-k|} via a stationary AR(1) recursion.
void fill_toeplitz_rows(Eigen::MatrixXd& out, Eigen::Index first_col, Eigen::Index cols,
                        double rho, std::mt19937_64& gen,
                        std::normal_distribution<double>& normal) {
    const double innovation = std::sqrt(1.0 - rho * rho);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        double prev = normal(gen);
        out(i, first_col) = prev;
        for (Eigen::Index j = 1; j < cols; ++j) {
            prev = rho * prev + innovation * normal(gen);
            out(i, first_col + j) = prev;
        }
    }
}

}  // namespace

SimulatedDraw generate_dataset(const SimulationConfig& config, std::uint64_t replication_index) {
    SimulatedDraw draw;
    draw.truth = true_parameters(config);
    auto gen = replication_stream(config.seed, replication_index);
    std::normal_distribution<double> normal(0.0, 1.0);

    const int n = config.n;
    const int offset = config.include_intercept ? 1 : 0;
    IVDataset& data = draw.data;
    data.X.resize(n, config.p_x + offset);
    if (offset) {
        data.X.col(0).setOnes();
        data.intercept_index = 0;
    }
    fill_toeplitz_rows(data.X, offset, config.p_x, config.x_correlation, gen, normal);

    data.Z.resize(n, config.p_z);
    if (config.p_z > 0) {
        fill_toeplitz_rows(data.Z, 0, config.p_z, config.x_correlation, gen, normal);
        for (int k = 0; k < std::min(config.p_z, config.p_x); ++k) {
            data.Z.col(k) += config.pi_diagonal * data.X.col(offset + k);
        }
    }

    Eigen::VectorXd u(n);
    Eigen::VectorXd eps(n);
    const double rho = config.error_correlation;
    const double rest = std::sqrt(1.0 - rho * rho);
    for (int i = 0; i < n; ++i) {
        u(i) = normal(gen);
        eps(i) = rho * u(i) + rest * normal(gen);
    }

    data.d = data.X * draw.truth.eta.gamma + u;
    if (config.p_z > 0) data.d += data.Z * draw.truth.eta.delta;
    data.y = config.alpha0 * data.d + data.X * draw.truth.beta + eps;
    return draw;
}

AlphaEstimate oracle_estimate(const IVDataset& data, const NuisanceEstimates& truth, double level) {
    data.validate();
    return solve_alpha(residuals_from(data, truth), level);
}

std::string_view estimator_id(Estimator e) {
    switch (e) {
        case Estimator::Oracle: return "oracle";
        case Estimator::NaiveStepwise: return "naive_stepwise";
        case Estimator::NaiveNonorthogonal: return "naive_nonorthogonal";
        case Estimator::DoubleSelection: return "double_selection";
        case Estimator::Union2sls: return "union_2sls";
    }
    return "unknown";
}

std::string_view estimator_label(Estimator e) {
    switch (e) {
        case Estimator::Oracle: return "Oracle";
        case Estimator::NaiveStepwise: return "Naive 1";
        case Estimator::NaiveNonorthogonal: return "Naive 2";
        case Estimator::DoubleSelection: return "Double-Selection";
        case Estimator::Union2sls: return "Union 2SLS";
    }
    return "unknown";
}

Estimator parse_estimator(std::string_view id) {
    for (Estimator e : {Estimator::Oracle, Estimator::NaiveStepwise, Estimator::NaiveNonorthogonal,
                        Estimator::DoubleSelection, Estimator::Union2sls}) {
        if (estimator_id(e) == id) return e;
    }
    throw ConfigError("unknown estimator id: " + std::string(id));
}

std::vector<Estimator> default_estimators() {
    return {Estimator::Oracle, Estimator::NaiveStepwise, Estimator::NaiveNonorthogonal,
            Estimator::DoubleSelection};
}

const EstimatorSummary& SimulationSummary::find(Estimator e) const {
    for (const auto& s : estimators) {
        if (s.estimator == e) return s;
    }
    throw ConfigError("estimator not part of this simulation: " + std::string(estimator_id(e)));
}

std::optional<PublishedMetrics> published_metrics(Estimator e) {
    switch (e) {
        case Estimator::Oracle: return PublishedMetrics{.006, .095, .043};
        case Estimator::NaiveStepwise: return PublishedMetrics{.160, .227, .302};
        case Estimator::NaiveNonorthogonal: return PublishedMetrics{.035, .103, .095};
        case Estimator::DoubleSelection: return PublishedMetrics{.021, .099, .054};
        case Estimator::Union2sls: return std::nullopt;
    }
    return std::nullopt;
}

std::vector<ThresholdCheck> reference_threshold_checks(const SimulationSummary& summary) {
    std::vector<ThresholdCheck> out;
    auto lookup = [&](Estimator e) -> const EstimatorSummary* {
        for (const auto& s : summary.estimators) {
            if (s.estimator == e) return &s;
        }
        return nullptr;
    };
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", v);
        return std::string(buf);
    };
    const auto* oracle = lookup(Estimator::Oracle);
    const auto* naive1 = lookup(Estimator::NaiveStepwise);
    const auto* naive2 = lookup(Estimator::NaiveNonorthogonal);
    const auto* ds = lookup(Estimator::DoubleSelection);

    auto add = [&](std::string name, bool available, auto&& pass, std::string detail) {
        ThresholdCheck c;
        c.name = std::move(name);
        c.pass = available && pass();
        c.detail = available ? std::move(detail) : "estimator not run";
        out.push_back(std::move(c));
    };

    add("Double-Selection |bias| <= 0.05", ds != nullptr,
        [&] { return ds->valid && std::abs(ds->bias) <= 0.05; }, ds ? "bias " + fmt(ds->bias) : "");
    add("Double-Selection size in [0.03, 0.08]", ds != nullptr,
        [&] { return ds->valid && ds->size >= 0.03 && ds->size <= 0.08; },
        ds ? "size " + fmt(ds->size) : "");
    add("Oracle |bias| <= 0.03", oracle != nullptr,
        [&] { return oracle->valid && std::abs(oracle->bias) <= 0.03; },
        oracle ? "bias " + fmt(oracle->bias) : "");
    add("Oracle size in [0.03, 0.07]", oracle != nullptr,
        [&] { return oracle->valid && oracle->size >= 0.03 && oracle->size <= 0.07; },
        oracle ? "size " + fmt(oracle->size) : "");
    add("Naive 1 size >= 0.15", naive1 != nullptr,
        [&] { return naive1->valid && naive1->size >= 0.15; },
        naive1 ? "size " + fmt(naive1->size) : "");
    add("Naive 2 size >= 0.07", naive2 != nullptr,
        [&] { return naive2->valid && naive2->size >= 0.07; },
        naive2 ? "size " + fmt(naive2->size) : "");
    add("Naive 2 size > Double-Selection size", naive2 != nullptr && ds != nullptr,
        [&] { return naive2->size > ds->size; },
        naive2 && ds ? fmt(naive2->size) + " vs " + fmt(ds->size) : "");
    add("MAD(Double-Selection) <= 1.3 MAD(Oracle)", ds != nullptr && oracle != nullptr,
        [&] { return ds->mad <= 1.3 * oracle->mad; },
        ds && oracle ? fmt(ds->mad) + " vs " + fmt(1.3 * oracle->mad) : "");
    return out;
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("HDIV_THREADS")) {
        const int value = std::atoi(env);
        if (value > 0) return value;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

std::vector<ReplicationRecord> run_replication(const SimulationConfig& config,
                                               const std::vector<Estimator>& estimators,
                                               std::uint64_t replication,
                                               const PipelineOptions& pipeline) {
    const SimulatedDraw draw = generate_dataset(config, replication);
    const double z_crit = stats::normal_quantile(1.0 - config.test_level / 2.0);
    const double chi_crit = stats::chi_square_critical(config.test_level, 1.0);

    PipelineOptions options = pipeline;
    options.level = 1.0 - config.test_level;

    std::vector<ReplicationRecord> out;
    out.reserve(estimators.size());
    for (Estimator e : estimators) {
        ReplicationRecord rec;
        rec.estimator = e;
        rec.replication = replication;
        try {
            auto from_alpha = [&](const AlphaEstimate& est) {
                rec.alpha_hat = est.alpha_hat;
                rec.std_error = est.std_error;
                rec.score_reject = score_statistic(config.alpha0, est.residuals) > chi_crit;
                rec.selected_instruments = est.selection.first_stage_instruments;
                rec.selected_controls = est.selection.outcome_controls;
            };
            switch (e) {
                case Estimator::Oracle:
                    from_alpha(oracle_estimate(draw.data, draw.truth.eta, options.level));
                    break;
                case Estimator::NaiveStepwise:
                    from_alpha(estimate_naive_stepwise(draw.data, options));
                    break;
                case Estimator::NaiveNonorthogonal:
                    from_alpha(estimate_naive_nonorthogonal(draw.data, options));
                    break;
                case Estimator::DoubleSelection:
                    from_alpha(estimate_double_selection(draw.data, options));
                    break;
                case Estimator::Union2sls: {
                    const TwoSlsResult r = estimate_union_2sls(draw.data, options);
                    rec.alpha_hat = r.alpha_hat;
                    rec.std_error = r.std_error;
                    rec.selected_instruments = static_cast<int>(r.instruments.size());
                    rec.selected_controls = static_cast<int>(r.controls.size());
                    break;
                }
            }
            if (!std::isfinite(rec.alpha_hat) || !std::isfinite(rec.std_error)) {
                throw Error("non-finite estimate");
            }
            rec.ok = true;
            rec.wald_reject = std::abs(rec.alpha_hat - config.alpha0) > z_crit * rec.std_error;
        } catch (const std::exception& ex) {
            rec = ReplicationRecord{};
            rec.estimator = e;
            rec.replication = replication;
            rec.failure = ex.what();
        }
        out.push_back(std::move(rec));
    }
    return out;
}

EstimatorSummary summarize(Estimator estimator, const std::vector<ReplicationRecord>& records,
                           double alpha0, int replications) {
    EstimatorSummary s;
    s.estimator = estimator;
    std::vector<double> errors;
    std::vector<double> abs_errors;
    int rejections = 0;
    int score_rejections = 0;
    int score_count = 0;
    for (const auto& r : records) {
        if (r.estimator != estimator) continue;
        if (!r.ok) {
            ++s.failures;
            continue;
        }
        ++s.successes;
        errors.push_back(r.alpha_hat - alpha0);
        abs_errors.push_back(std::abs(r.alpha_hat - alpha0));
        rejections += r.wald_reject ? 1 : 0;
        if (r.score_reject) {
            ++score_count;
            score_rejections += *r.score_reject ? 1 : 0;
        }
    }
    if (s.successes > 0) {
        s.bias = stats::median(errors);
        s.mad = stats::median(abs_errors);
        s.size = static_cast<double>(rejections) / s.successes;
    }
    if (score_count > 0) s.score_size = static_cast<double>(score_rejections) / score_count;
    s.valid = s.successes > 0 && s.failures * 5 <= replications;
    return s;
}

SimulationSummary run_simulation(const SimulationConfig& config,
                                 const std::vector<Estimator>& estimators,
                                 const RunOptions& options) {
    config.validate();
    options.pipeline.validate();
    if (estimators.empty()) throw ConfigError("no estimators requested");
    const auto start = std::chrono::steady_clock::now();

    const int reps = config.replications;
    std::vector<std::vector<ReplicationRecord>> slots(static_cast<std::size_t>(reps));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int r = next++; r < reps; r = next++) {
            slots[static_cast<std::size_t>(r)] =
                run_replication(config, estimators, static_cast<std::uint64_t>(r), options.pipeline);
        }
    };
    const int threads = std::min(resolve_threads(options.threads), reps);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    SimulationSummary summary;
    summary.config = config;
    for (auto& slot : slots) {
        for (auto& rec : slot) summary.records.push_back(std::move(rec));
    }
    for (Estimator e : estimators) {
        summary.estimators.push_back(summarize(e, summary.records, config.alpha0, reps));
        summary.valid = summary.valid && summary.estimators.back().valid;
    }
    summary.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return summary;
}

namespace {

double orthogonal_moment(const IVDataset& data, const NuisanceEstimates& eta, double alpha) {
    return empirical_moment(alpha, residuals_from(data, eta));
}

double nonorthogonal_moment(const IVDataset& data, const NuisanceEstimates& eta, double alpha) {
    ResidualTriple r = residuals_from(data, eta);
    r.v = data.X * eta.gamma;
    if (data.p_z() > 0) r.v += data.Z * eta.delta;
    return empirical_moment(alpha, r);
}

NuisanceEstimates shifted(const NuisanceEstimates& eta, const NuisanceEstimates& dir, double t) {
    return {eta.theta + t * dir.theta, eta.vartheta + t * dir.vartheta,
            eta.gamma + t * dir.gamma, eta.delta + t * dir.delta};
}

// Standard-normal entries on the leading `support` coordinates of a block
// (skipping `skip` leading entries), zeros elsewhere.
Eigen::VectorXd random_block(Eigen::Index size, Eigen::Index skip, Eigen::Index support,
                             std::mt19937_64& gen) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(size);
    const Eigen::Index end = std::min(size, skip + support);
    for (Eigen::Index j = skip; j < end; ++j) out(j) = normal(gen);
    return out;
}

}  // namespace

OrthogonalityReport orthogonality_check(const SimulationConfig& config, int replications,
                                        int directions, DirectionSupport support,
                                        std::uint64_t direction_seed) {
    config.validate();
    if (replications < 2 || directions < 1) throw ConfigError("orthogonality check needs R >= 2, H >= 1");

    const TrueParameters truth = true_parameters(config);
    const Eigen::Index px = truth.eta.gamma.size();
    const Eigen::Index pz = truth.eta.delta.size();
    const Eigen::Index skip = config.include_intercept ? 1 : 0;
    const Eigen::Index width_x = support == DirectionSupport::Sparse ? config.sparsity : px;
    const Eigen::Index width_z = support == DirectionSupport::Sparse ? config.sparsity : pz;

    auto gen = replication_stream(direction_seed, 0, 0x6f727468u);
    std::vector<NuisanceEstimates> full_dirs;
    std::vector<Eigen::VectorXd> theta_dirs;
    for (int h = 0; h < directions; ++h) {
        NuisanceEstimates dir{random_block(px, skip, width_x, gen), random_block(px, skip, width_x, gen),
                              random_block(px, skip, width_x, gen), random_block(pz, 0, width_z, gen)};
        const double norm = std::sqrt(dir.theta.squaredNorm() + dir.vartheta.squaredNorm() +
                                      dir.gamma.squaredNorm() + dir.delta.squaredNorm());
        dir.theta /= norm;
        dir.vartheta /= norm;
        dir.gamma /= norm;
        dir.delta /= norm;
        full_dirs.push_back(std::move(dir));
        Eigen::VectorXd th = random_block(px, skip, width_x, gen);
        theta_dirs.push_back(th / th.norm());
    }

    const double step = 1e-3;
    std::vector<double> moments;
    Eigen::VectorXd orth_sum = Eigen::VectorXd::Zero(directions);
    Eigen::VectorXd naive_sum = Eigen::VectorXd::Zero(directions);
    for (int r = 0; r < replications; ++r) {
        const SimulatedDraw draw = generate_dataset(config, static_cast<std::uint64_t>(r));
        moments.push_back(orthogonal_moment(draw.data, truth.eta, config.alpha0));
        for (int h = 0; h < directions; ++h) {
            const auto& dir = full_dirs[static_cast<std::size_t>(h)];
            orth_sum(h) += (orthogonal_moment(draw.data, shifted(truth.eta, dir, step), config.alpha0) -
                            orthogonal_moment(draw.data, shifted(truth.eta, dir, -step), config.alpha0)) /
                           (2.0 * step);
            NuisanceEstimates theta_only{theta_dirs[static_cast<std::size_t>(h)],
                                         Eigen::VectorXd::Zero(px), Eigen::VectorXd::Zero(px),
                                         Eigen::VectorXd::Zero(pz)};
            naive_sum(h) +=
                (nonorthogonal_moment(draw.data, shifted(truth.eta, theta_only, step), config.alpha0) -
                 nonorthogonal_moment(draw.data, shifted(truth.eta, theta_only, -step), config.alpha0)) /
                (2.0 * step);
        }
    }

    OrthogonalityReport report;
    report.replications = replications;
    report.directions = directions;
    const Eigen::Map<const Eigen::VectorXd> m(moments.data(), static_cast<Eigen::Index>(moments.size()));
    const double mean = m.mean();
    const double var = (m.array() - mean).square().sum() / static_cast<double>(replications - 1);
    report.moment_mc_se = std::sqrt(var / static_cast<double>(replications));
    report.orthogonal_mean_abs_derivative = (orth_sum / replications).cwiseAbs().mean();
    report.naive_theta_mean_abs_derivative = (naive_sum / replications).cwiseAbs().mean();
    return report;
}

}  // namespace hdiv::mc
