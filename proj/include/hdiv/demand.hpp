#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hdiv::demand {

using Index = Eigen::Index;

// Product-market panel: one row per (market, product).
struct DemandPanel {
    std::vector<std::string> market;
    std::vector<std::string> firm;
    std::vector<std::string> product;
    Eigen::VectorXd share;
    Eigen::VectorXd outside_share;
    Eigen::VectorXd price;
    std::vector<std::string> characteristic_names;
    Eigen::MatrixXd characteristics;  // rows x characteristic_names.size()

    Index rows() const { return static_cast<Index>(market.size()); }
    std::optional<Index> characteristic(const std::string& name) const;

    // Shares strictly inside (0, 1), market share totals <= 1 (+1e-9),
    // unique (market, product) pairs, consistent column lengths.
    void validate() const;
};

// What expand_characteristics emits, in this order: base columns; the trend;
// square and cube of every continuous column; products of all pairs among
// the interaction columns.
struct ExpansionRecipe {
    std::vector<std::string> base;
    // Name of the constant column. Synthesized as ones if the panel lacks it.
    std::optional<std::string> constant;
    std::vector<std::string> continuous;    // may include "trend"
    std::vector<std::string> interactions;  // may include "trend"
    bool include_trend = false;

    // const, air, hpwt, mpd, space + trend, polynomials and pairwise
    // interactions: 24 columns.
    static ExpansionRecipe blp_expanded();
    // The five base characteristics only.
    static ExpansionRecipe blp_base();
};

inline constexpr const char* kTrendName = "trend";

struct NamedMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> names;
};

// log(s_it) - log(s_0t).
Eigen::VectorXd build_logit_outcome(const DemandPanel& panel);

NamedMatrix expand_characteristics(const DemandPanel& panel, const ExpansionRecipe& recipe);

// Market index mapped to 0..T-1 (numeric order when all ids are numbers,
// lexicographic otherwise), standardized across rows.
Eigen::VectorXd market_trend(const DemandPanel& panel);

// For every column k: own-firm sum over the other products of the firm in the
// same market, then (as a second block) the sum over rival firms' products.
NamedMatrix build_sum_instruments(const DemandPanel& panel, const NamedMatrix& characteristics);

struct ElasticityReport {
    Eigen::VectorXd elasticity;    // alpha * p * (1 - s), row order of the panel
    std::vector<Index> ascending;  // rows sorted by elasticity
    int inelastic_count = 0;       // |elasticity| < 1
};

ElasticityReport elasticity_report(const DemandPanel& panel, double alpha_hat);

}  // namespace hdiv::demand
