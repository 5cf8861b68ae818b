#include "hdiv/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "hdiv/error.hpp"

namespace hdiv::stats {

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double normal_quantile(double prob) {
    if (!(prob > 0.0 && prob < 1.0)) {
        throw ConfigError("normal_quantile: probability must lie in (0, 1)");
    }
    return boost::math::quantile(boost::math::normal_distribution<double>{}, prob);
}

double student_t_two_sided_p(double t, double dof) {
    if (!std::isfinite(t)) return 0.0;
    if (!(dof > 0.0)) return 1.0;
    boost::math::students_t_distribution<double> dist(dof);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

double chi_square_critical(double tail, double dof) {
    boost::math::chi_squared_distribution<double> dist(dof);
    return boost::math::quantile(boost::math::complement(dist, tail));
}

double median(std::span<const double> values) {
    if (values.empty()) throw InputError("median of an empty sample");
    std::vector<double> v(values.begin(), values.end());
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

}  // namespace hdiv::stats
