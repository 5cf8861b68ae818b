#include "hdiv/demand.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <utility>

#include "hdiv/error.hpp"

namespace hdiv::demand {

std::optional<Index> DemandPanel::characteristic(const std::string& name) const {
    for (std::size_t k = 0; k < characteristic_names.size(); ++k) {
        if (characteristic_names[k] == name) return static_cast<Index>(k);
    }
    return std::nullopt;
}

void DemandPanel::validate() const {
    const Index n = rows();
    if (n == 0) throw InputError("demand panel is empty");
    if (static_cast<Index>(firm.size()) != n || static_cast<Index>(product.size()) != n ||
        share.size() != n || outside_share.size() != n || price.size() != n ||
        characteristics.rows() != n ||
        characteristics.cols() != static_cast<Index>(characteristic_names.size())) {
        throw InputError("demand panel columns have inconsistent lengths");
    }
    std::map<std::string, double> inside_total;
    std::map<std::string, double> outside;
    std::set<std::pair<std::string, std::string>> seen;
    for (Index i = 0; i < n; ++i) {
        const auto row = std::to_string(i + 1);
        if (!(share(i) > 0.0 && share(i) < 1.0)) {
            throw InputError("row " + row + ": market share must lie strictly inside (0, 1)");
        }
        if (!(outside_share(i) > 0.0 && outside_share(i) < 1.0)) {
            throw InputError("row " + row + ": outside share must lie strictly inside (0, 1)");
        }
        if (!seen.emplace(market[static_cast<std::size_t>(i)], product[static_cast<std::size_t>(i)]).second) {
            throw InputError("row " + row + ": duplicate (market, product) pair");
        }
        inside_total[market[static_cast<std::size_t>(i)]] += share(i);
        outside[market[static_cast<std::size_t>(i)]] = outside_share(i);
    }
    for (const auto& [m, total] : inside_total) {
        if (total + outside[m] > 1.0 + 1e-9) {
            throw InputError("market " + m + ": inside plus outside shares exceed one");
        }
    }
    if (!characteristics.allFinite() || !price.allFinite()) {
        throw InputError("demand panel contains non-finite characteristics or prices");
    }
}

ExpansionRecipe ExpansionRecipe::blp_base() {
    ExpansionRecipe r;
    r.base = {"const", "air", "hpwt", "mpd", "space"};
    r.constant = "const";
    return r;
}

ExpansionRecipe ExpansionRecipe::blp_expanded() {
    ExpansionRecipe r = blp_base();
    r.include_trend = true;
    r.continuous = {"hpwt", "mpd", "space", kTrendName};
    r.interactions = {"air", "hpwt", "mpd", "space", kTrendName};
    return r;
}

Eigen::VectorXd build_logit_outcome(const DemandPanel& panel) {
    const Index n = panel.rows();
    if (panel.share.size() != n || panel.outside_share.size() != n) {
        throw InputError("share columns do not match the panel length");
    }
    Eigen::VectorXd out(n);
    for (Index i = 0; i < n; ++i) {
        if (!(panel.share(i) > 0.0) || !(panel.outside_share(i) > 0.0)) {
            throw InputError("row " + std::to_string(i + 1) + ": shares must be positive");
        }
        out(i) = std::log(panel.share(i)) - std::log(panel.outside_share(i));
    }
    return out;
}

namespace {

bool parse_number(const std::string& s, double& out) {
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

}  // namespace

Eigen::VectorXd market_trend(const DemandPanel& panel) {
    std::vector<std::string> ids(panel.market.begin(), panel.market.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    bool numeric = true;
    std::vector<std::pair<double, std::string>> keyed;
    for (const auto& id : ids) {
        double v = 0.0;
        numeric = numeric && parse_number(id, v);
        keyed.emplace_back(v, id);
    }
    if (numeric) std::sort(keyed.begin(), keyed.end());

    std::unordered_map<std::string, double> position;
    for (std::size_t k = 0; k < keyed.size(); ++k) position[keyed[k].second] = static_cast<double>(k);

    const Index n = panel.rows();
    Eigen::VectorXd trend(n);
    for (Index i = 0; i < n; ++i) trend(i) = position.at(panel.market[static_cast<std::size_t>(i)]);
    const double mean = trend.mean();
    const double sd = std::sqrt((trend.array() - mean).square().mean());
    trend.array() -= mean;
    if (sd > 0.0) trend /= sd;
    return trend;
}

NamedMatrix expand_characteristics(const DemandPanel& panel, const ExpansionRecipe& recipe) {
    const Index n = panel.rows();
    std::vector<std::pair<std::string, Eigen::VectorXd>> columns;
    std::map<std::string, Eigen::VectorXd> lookup;

    auto source = [&](const std::string& name) -> Eigen::VectorXd {
        if (auto it = lookup.find(name); it != lookup.end()) return it->second;
        if (name == kTrendName) {
            if (!recipe.include_trend) throw InputError("recipe uses the trend but does not include it");
            return lookup.emplace(name, market_trend(panel)).first->second;
        }
        if (auto k = panel.characteristic(name)) {
            return lookup.emplace(name, panel.characteristics.col(*k)).first->second;
        }
        if (recipe.constant && name == *recipe.constant) {
            return lookup.emplace(name, Eigen::VectorXd::Ones(n)).first->second;
        }
        throw InputError("characteristic '" + name + "' is not present in the panel");
    };

    for (const auto& name : recipe.base) columns.emplace_back(name, source(name));
    if (recipe.include_trend) columns.emplace_back(kTrendName, source(kTrendName));
    for (const auto& name : recipe.continuous) {
        const Eigen::VectorXd x = source(name);
        columns.emplace_back(name + "^2", x.array().square().matrix());
        columns.emplace_back(name + "^3", x.array().cube().matrix());
    }
    for (std::size_t a = 0; a < recipe.interactions.size(); ++a) {
        for (std::size_t b = a + 1; b < recipe.interactions.size(); ++b) {
            const Eigen::VectorXd x = source(recipe.interactions[a]);
            const Eigen::VectorXd y = source(recipe.interactions[b]);
            columns.emplace_back(recipe.interactions[a] + "*" + recipe.interactions[b],
                                 x.cwiseProduct(y));
        }
    }

    NamedMatrix out;
    out.values.resize(n, static_cast<Index>(columns.size()));
    std::set<std::string> names;
    for (std::size_t k = 0; k < columns.size(); ++k) {
        if (!names.insert(columns[k].first).second) {
            throw Error("internal: duplicate expanded column name '" + columns[k].first + "'");
        }
        out.names.push_back(columns[k].first);
        out.values.col(static_cast<Index>(k)) = columns[k].second;
    }
    return out;
}

NamedMatrix build_sum_instruments(const DemandPanel& panel, const NamedMatrix& characteristics) {
    const Index n = panel.rows();
    const Index k = characteristics.values.cols();
    if (characteristics.values.rows() != n) {
        throw InputError("characteristic matrix rows do not match the panel");
    }

    std::map<std::string, Eigen::RowVectorXd> market_total;
    std::map<std::pair<std::string, std::string>, Eigen::RowVectorXd> firm_total;
    for (Index i = 0; i < n; ++i) {
        const auto& m = panel.market[static_cast<std::size_t>(i)];
        const auto& f = panel.firm[static_cast<std::size_t>(i)];
        const Eigen::RowVectorXd row = characteristics.values.row(i);
        auto [mt, m_new] = market_total.try_emplace(m, Eigen::RowVectorXd::Zero(k));
        mt->second += row;
        auto [ft, f_new] = firm_total.try_emplace({m, f}, Eigen::RowVectorXd::Zero(k));
        ft->second += row;
    }

    NamedMatrix out;
    out.values.resize(n, 2 * k);
    for (Index i = 0; i < n; ++i) {
        const auto& m = panel.market[static_cast<std::size_t>(i)];
        const auto& f = panel.firm[static_cast<std::size_t>(i)];
        const Eigen::RowVectorXd& firm_sum = firm_total.at({m, f});
        out.values.row(i).head(k) = firm_sum - characteristics.values.row(i);
        out.values.row(i).tail(k) = market_total.at(m) - firm_sum;
    }
    for (const auto& name : characteristics.names) out.names.push_back("own_" + name);
    for (const auto& name : characteristics.names) out.names.push_back("rival_" + name);
    return out;
}

ElasticityReport elasticity_report(const DemandPanel& panel, double alpha_hat) {
    const Index n = panel.rows();
    if (panel.price.size() != n || panel.share.size() != n) {
        throw InputError("price or share column does not match the panel length");
    }
    ElasticityReport report;
    report.elasticity = (alpha_hat * panel.price.array() * (1.0 - panel.share.array())).matrix();
    report.ascending.resize(static_cast<std::size_t>(n));
    std::iota(report.ascending.begin(), report.ascending.end(), Index{0});
    std::stable_sort(report.ascending.begin(), report.ascending.end(),
                     [&](Index a, Index b) { return report.elasticity(a) < report.elasticity(b); });
    report.inelastic_count = static_cast<int>((report.elasticity.array().abs() < 1.0).count());
    return report;
}

}  // namespace hdiv::demand
