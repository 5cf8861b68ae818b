#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hdiv/orthogonal_iv.hpp"

namespace hdiv::mc {

// Simulation design. Coefficients decay as scale / j^decay; Pi has pi_diagonal
// on its leading diagonal; controls and instrument noise share a Toeplitz
// covariance x_correlation^{|j-k|}. When delta_scale is unset it is chosen so
// that n delta' Sigma_zeta delta / var(u) equals concentration_target.
struct SimulationConfig {
    int n = 200;
    int p_x = 300;
    int p_z = 150;
    double alpha0 = 1.0;
    int sparsity = 10;  // support size for sparse perturbation directions
    double coefficient_decay = 2.0;
    double beta_scale = -0.3;
    double gamma_scale = 1.0;
    std::optional<double> delta_scale;
    double concentration_target = 150.0;
    double pi_diagonal = 0.3;
    double error_correlation = 0.6;
    double x_correlation = 0.5;
    bool include_intercept = true;
    int replications = 1000;
    std::uint64_t seed = 20150105;
    double test_level = 0.05;

    void validate() const;
    double resolved_delta_scale() const;
};

// True structural and reduced-form coefficients, laid out over the columns of
// the generated X (the intercept, when present, is column 0 with coefficient 0).
struct TrueParameters {
    Eigen::VectorXd beta;
    NuisanceEstimates eta;  // theta = beta + alpha0 vartheta, vartheta = gamma + Pi' delta
};

TrueParameters true_parameters(const SimulationConfig& config);

struct SimulatedDraw {
    IVDataset data;
    TrueParameters truth;
};

// Random stream for one replication; a pure function of (seed, replication, tag).
std::mt19937_64 replication_stream(std::uint64_t seed, std::uint64_t replication,
                                   std::uint32_t tag = 0);

SimulatedDraw generate_dataset(const SimulationConfig& config, std::uint64_t replication_index);

// Uses the true nuisance values in the residual triple.
AlphaEstimate oracle_estimate(const IVDataset& data, const NuisanceEstimates& truth,
                              double level = 0.95);

enum class Estimator { Oracle, NaiveStepwise, NaiveNonorthogonal, DoubleSelection, Union2sls };

std::string_view estimator_id(Estimator e);
std::string_view estimator_label(Estimator e);
Estimator parse_estimator(std::string_view id);
std::vector<Estimator> default_estimators();

struct ReplicationRecord {
    Estimator estimator = Estimator::Oracle;
    std::uint64_t replication = 0;
    bool ok = false;
    double alpha_hat = 0.0;
    double std_error = 0.0;
    bool wald_reject = false;
    std::optional<bool> score_reject;  // orthogonal-moment estimators only
    int selected_instruments = 0;
    int selected_controls = 0;
    std::string failure;
};

struct EstimatorSummary {
    Estimator estimator = Estimator::Oracle;
    double bias = 0.0;        // median(alpha_hat - alpha0)
    double mad = 0.0;         // median |alpha_hat - alpha0|
    double size = 0.0;        // Wald rejection rate
    double score_size = -1.0; // score-test rejection rate; -1 when unavailable
    int successes = 0;
    int failures = 0;
    bool valid = true;        // failures <= 20% of replications
};

struct SimulationSummary {
    SimulationConfig config;
    std::vector<EstimatorSummary> estimators;
    std::vector<ReplicationRecord> records;  // ordered by (replication, estimator)
    bool valid = true;
    double wall_clock_seconds = 0.0;

    const EstimatorSummary& find(Estimator e) const;
};

struct RunOptions {
    int threads = 0;  // 0: HDIV_THREADS, else hardware concurrency
    PipelineOptions pipeline;
};

int resolve_threads(int requested);

std::vector<ReplicationRecord> run_replication(const SimulationConfig& config,
                                               const std::vector<Estimator>& estimators,
                                               std::uint64_t replication,
                                               const PipelineOptions& pipeline);

EstimatorSummary summarize(Estimator estimator, const std::vector<ReplicationRecord>& records,
                           double alpha0, int replications);

SimulationSummary run_simulation(const SimulationConfig& config,
                                 const std::vector<Estimator>& estimators,
                                 const RunOptions& options = {});

// Published bias / MAD / size for the four reference estimators.
struct PublishedMetrics {
    double bias = 0.0;
    double mad = 0.0;
    double size = 0.0;
};
std::optional<PublishedMetrics> published_metrics(Estimator e);

struct ThresholdCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Qualitative targets for the default design: Oracle and Double-Selection
// close to nominal, both naive estimators visibly distorted.
std::vector<ThresholdCheck> reference_threshold_checks(const SimulationSummary& summary);

// Numerical check of the orthogonality of the moment at the truth.
struct OrthogonalityReport {
    int replications = 0;
    int directions = 0;
    double moment_mc_se = 0.0;                 // sd over replications of Mhat(alpha0, eta0) / sqrt(R)
    double orthogonal_mean_abs_derivative = 0.0;  // mean over directions of |mean_r D_h|
    double naive_theta_mean_abs_derivative = 0.0;
};

enum class DirectionSupport { Sparse, Full };

OrthogonalityReport orthogonality_check(const SimulationConfig& config, int replications,
                                        int directions, DirectionSupport support,
                                        std::uint64_t direction_seed = 7);

}  // namespace hdiv::mc
