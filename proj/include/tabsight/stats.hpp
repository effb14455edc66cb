#pragma once

#include <span>
#include <vector>

namespace tabsight::stats {

// Special functions ---------------------------------------------------------

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double gamma_q(double a, double x);

double normal_cdf(double z);
/// Two-sided p-value of a Student t statistic with `dof` degrees of freedom.
double student_t_two_sided(double t, double dof);
/// Upper tail of the chi-square distribution.
double chi_square_sf(double statistic, double dof);

// Descriptive ---------------------------------------------------------------

double mean(std::span<const double> xs);
/// Population (1/n) variance.
double variance(std::span<const double> xs);
double stddev(std::span<const double> xs);
/// Unbiased (1/(n-1)) variance.
double sample_variance(std::span<const double> xs);
/// Population skewness n^-1 sum (x-mu)^3 / sigma^3.
double skewness(std::span<const double> xs);
/// Population (non-excess) kurtosis n^-1 sum (x-mu)^4 / sigma^4.
double kurtosis(std::span<const double> xs);
/// Linear-interpolation quantile (type 7).
double quantile(std::span<const double> xs, double q);

// Inference -----------------------------------------------------------------

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double slopeT = 0.0;  // slope / stderr; +-inf for a perfect fit
    double pValue = 1.0;  // two-sided slope test, n-2 dof
};

/// Ordinary least squares of ys against xs.
LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys);

/// Pearson correlation; NaN when either side has zero variance.
double pearson(std::span<const double> xs, std::span<const double> ys);
/// Two-sided p-value for H0: rho = 0 with n samples.
double pearson_p_value(double rho, std::size_t n);

struct WelchResult {
    double t = 0.0;
    double dof = 0.0;
    double pValue = 1.0;
};

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

struct ChiSquareResult {
    double statistic = 0.0;
    double dof = 0.0;
    double pValue = 1.0;
    double minExpected = 0.0;
};

/// Pearson chi-square test of independence on a contingency table.
ChiSquareResult chi_square_independence(const std::vector<std::vector<double>>& table);

}  // namespace tabsight::stats
