#pragma once

// Independent reference implementations used by unit and acceptance tests.

#include <cstdint>
#include <string>
#include <vector>

#include "tabsight/agent.hpp"
#include "tabsight/insight.hpp"
#include "tabsight/table.hpp"

namespace oracle {

using tabsight::InsightKind;
using tabsight::Rng;

// Distributions (Boost.Math).
double t_two_sided(double t, double dof);
double chi2_sf(double x, double dof);
double normal_cdf(double z);

// Brute-force statistics in long double.
double mean(const std::vector<double>& v);
double pop_sd(const std::vector<double>& v);
double skewness(const std::vector<double>& v);
double kurtosis(const std::vector<double>& v);
double quantile7(std::vector<double> v, double q);
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct Fit {
    double slope, intercept, r2, t, p;
};
Fit ols(const std::vector<double>& x, const std::vector<double>& y);

/// Expected detector result, computed without the library.
struct Expect {
    bool fires = false;
    bool precondition = false;  // input rejected
    double score = 0.0;
    std::vector<std::pair<std::string, double>> moments;  // compared at 1e-9
    std::vector<std::pair<std::string, double>> pvalues;  // compared at 1e-6
    std::vector<int> indices;
};

struct DetectorStats {
    int cases = 0;
    int fired = 0;
    int mismatches = 0;
    double maxMomentErr = 0.0;
    double maxPErr = 0.0;
    std::string firstFailure;
};

/// The 12 single-block kinds, outlier covering both methods.
std::vector<InsightKind> single_kinds();

/// Runs `cases` randomized inputs of one detector against its oracle.
DetectorStats check_detector(InsightKind kind, int cases, std::uint64_t seed);

// Random hierarchical tables ---------------------------------------------------

tabsight::LabelTree random_tree(Rng& rng, int maxLeaves, int maxDepth, const std::string& prefix);
tabsight::TableState random_table(Rng& rng, int maxLeaves = 6, int maxDepth = 3, double missing = 0.1);

/// (row path, column path, value) for every present cell.
struct Tuple {
    std::vector<std::string> row, col;
    double value;
    bool operator<(const Tuple& o) const;
    bool operator==(const Tuple& o) const;
};
std::vector<Tuple> labeled_tuples(const tabsight::TableState& s);
std::vector<tabsight::CellId> cell_ids(const tabsight::TableState& s);

// Finite differences -----------------------------------------------------------

/// Largest relative error |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
/// over every parameter entry of `params` for the scalar loss `f`.
double max_fd_error(tabsight::nn::ParamSet& params, const std::function<tabsight::nn::Var(tabsight::nn::Tape&)>& f,
                    double h = 1e-6);

}  // namespace oracle
