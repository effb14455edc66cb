#include <doctest.h>

#include <cmath>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "oracles.hpp"
#include "tabsight/stats.hpp"

using namespace tabsight;

TEST_SUITE("stats") {
    TEST_CASE("special functions match Boost") {
        Rng rng(1);
        for (int i = 0; i < 300; ++i) {
            const double a = uniform(rng, 0.2, 40.0), b = uniform(rng, 0.2, 40.0), x = uniform01(rng);
            CHECK(stats::incomplete_beta(a, b, x) == doctest::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-10));
            const double s = uniform(rng, 0.1, 30.0), y = uniform(rng, 0.0, 60.0);
            CHECK(stats::gamma_p(s, y) == doctest::Approx(boost::math::gamma_p(s, y)).epsilon(1e-10));
            CHECK(stats::gamma_q(s, y) + stats::gamma_p(s, y) == doctest::Approx(1.0).epsilon(1e-12));
        }
        for (double t : {-6.0, -1.3, 0.0, 0.4, 2.1, 9.0}) {
            for (double dof : {1.0, 2.5, 7.0, 30.0, 400.0}) {
                CHECK(std::fabs(stats::student_t_two_sided(t, dof) - oracle::t_two_sided(t, dof)) < 1e-10);
            }
        }
        for (double x : {0.01, 0.5, 3.0, 11.0, 40.0}) {
            for (double dof : {1.0, 2.0, 5.0, 12.0}) CHECK(std::fabs(stats::chi_square_sf(x, dof) - oracle::chi2_sf(x, dof)) < 1e-10);
        }
        for (double z : {-8.0, -2.0, -0.3, 0.0, 1.7, 5.0}) CHECK(std::fabs(stats::normal_cdf(z) - oracle::normal_cdf(z)) < 1e-14);
    }

    TEST_CASE("closed-form moments") {
        const std::vector<double> three = {1, 2, 3};
        CHECK(stats::kurtosis(three) == 1.5);
        const std::vector<double> sym = {-3, -1, 0, 1, 3};
        CHECK(stats::skewness(sym) == 0.0);
        CHECK(stats::mean(three) == 2.0);
        CHECK(stats::variance(three) == doctest::Approx(2.0 / 3.0));
        CHECK(stats::sample_variance(three) == doctest::Approx(1.0));
        const std::vector<double> q = {1, 2, 3, 4};
        CHECK(stats::quantile(q, 0.25) == doctest::Approx(1.75));
        CHECK(stats::quantile(q, 1.0) == 4.0);
        // Twenty-one points with one spike: population kurtosis 19.05.
        std::vector<double> spike(21, 0.0);
        spike[7] = 1.0;
        CHECK(stats::kurtosis(spike) == doctest::Approx(19.05).epsilon(1e-12));
    }

    TEST_CASE("regression, correlation and tests agree with the oracles") {
        Rng rng(2);
        for (int i = 0; i < 200; ++i) {
            const int n = 3 + static_cast<int>(uniform_index(rng, 20));
            std::vector<double> x, y;
            for (int k = 0; k < n; ++k) {
                x.push_back(k);
                y.push_back(0.3 * k + standard_normal(rng));
            }
            const stats::LinearFit f = stats::linear_fit(x, y);
            const oracle::Fit o = oracle::ols(x, y);
            CHECK(f.slope == doctest::Approx(o.slope).epsilon(1e-9));
            CHECK(f.r2 == doctest::Approx(o.r2).epsilon(1e-9));
            CHECK(std::fabs(f.pValue - o.p) < 1e-9);
            CHECK(stats::pearson(x, y) == doctest::Approx(oracle::pearson(x, y)).epsilon(1e-9));
        }
        const std::vector<double> flat = {2, 2, 2};
        const std::vector<double> any = {1, 2, 3};
        CHECK(std::isnan(stats::pearson(flat, any)));
        const stats::LinearFit perfect = stats::linear_fit(any, any);
        CHECK(std::isinf(perfect.slopeT));
        CHECK(perfect.pValue == 0.0);
    }

    TEST_CASE("Welch and chi-square") {
        const std::vector<double> a = {1, 2, 3, 4, 5}, b = {6, 7, 8, 9, 10, 11};
        const stats::WelchResult w = stats::welch_t_test(a, b);
        // Brute-force Welch statistic.
        const double va = 2.5 / 5, vb = 3.5 / 6;
        const double t = (3.0 - 8.5) / std::sqrt(va + vb);
        const double dof = (va + vb) * (va + vb) / (va * va / 4 + vb * vb / 5);
        CHECK(w.t == doctest::Approx(t).epsilon(1e-12));
        CHECK(w.dof == doctest::Approx(dof).epsilon(1e-12));
        CHECK(std::fabs(w.pValue - oracle::t_two_sided(t, dof)) < 1e-10);

        const stats::ChiSquareResult c = stats::chi_square_independence({{10, 20}, {30, 40}});
        // Expected counts 12,18 / 28,42.
        const double stat = 4.0 / 12 + 4.0 / 18 + 4.0 / 28 + 4.0 / 42;
        CHECK(c.statistic == doctest::Approx(stat).epsilon(1e-12));
        CHECK(c.dof == 1.0);
        CHECK(c.minExpected == doctest::Approx(12.0));
        CHECK(std::fabs(c.pValue - oracle::chi2_sf(stat, 1.0)) < 1e-10);
    }
}
