#pragma once

#include <span>
#include <vector>

namespace hdiv::stats {

double normal_cdf(double x);
// Standard normal quantile; prob must lie in (0, 1).
double normal_quantile(double prob);

// Two-sided p-value of a t statistic with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

// Upper-tail critical value of chi-square(dof): P(X > c) = tail.
double chi_square_critical(double tail, double dof);

// Median of the values (copy is sorted; empty input is an error).
double median(std::span<const double> values);

}  // namespace hdiv::stats
