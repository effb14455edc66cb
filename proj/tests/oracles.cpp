#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "tabsight/stats.hpp"

namespace oracle {

using namespace tabsight;
using LD = long double;

double t_two_sided(double t, double dof) {
    if (std::isinf(t)) return 0.0;
    boost::math::students_t d(dof);
    return 2.0 * boost::math::cdf(boost::math::complement(d, std::fabs(t)));
}

double chi2_sf(double x, double dof) {
    boost::math::chi_squared d(dof);
    return boost::math::cdf(boost::math::complement(d, x));
}

double normal_cdf(double z) {
    if (std::isinf(z)) return z > 0 ? 1.0 : 0.0;
    return boost::math::cdf(boost::math::normal(), z);
}

double mean(const std::vector<double>& v) {
    LD s = 0;
    for (double x : v) s += x;
    return static_cast<double>(s / v.size());
}

namespace {

LD central(const std::vector<double>& v, int k) {
    LD m = 0;
    for (double x : v) m += x;
    m /= v.size();
    LD s = 0;
    for (double x : v) s += std::pow(static_cast<LD>(x) - m, k);
    return s / v.size();
}

}  // namespace

double pop_sd(const std::vector<double>& v) { return static_cast<double>(std::sqrt(central(v, 2))); }

double skewness(const std::vector<double>& v) { return static_cast<double>(central(v, 3) / std::pow(central(v, 2), 1.5L)); }

double kurtosis(const std::vector<double>& v) {
    const LD m2 = central(v, 2);
    return static_cast<double>(central(v, 4) / (m2 * m2));
}

double quantile7(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    // Raw-moment formula in long double: independent of the two-pass library code.
    const LD n = x.size();
    LD sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const LD mx = sx / n, my = sy / n;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const LD dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0 || syy == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

Fit ols(const std::vector<double>& x, const std::vector<double>& y) {
    const LD n = x.size();
    LD mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    LD sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    Fit f{};
    f.slope = static_cast<double>(sxy / sxx);
    f.intercept = static_cast<double>(my - sxy / sxx * mx);
    f.r2 = syy == 0 ? 0.0 : static_cast<double>(sxy * sxy / (sxx * syy));
    const LD sse = std::max<LD>(0, syy - sxy * sxy / sxx);
    const LD se = std::sqrt(sse / (n - 2) / sxx);
    if (se == 0) {
        f.t = f.slope == 0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), f.slope);
    } else {
        f.t = static_cast<double>(sxy / sxx / se);
    }
    f.p = f.t == 0 && se == 0 ? 1.0 : t_two_sided(f.t, static_cast<double>(n - 2));
    return f;
}

std::vector<InsightKind> single_kinds() {
    std::vector<InsightKind> out;
    for (int k = 0; k < kSingleKindCount; ++k) out.push_back(static_cast<InsightKind>(k));
    return out;
}

// Per-kind oracles -------------------------------------------------------------

namespace {

const DetectorThresholds kTh;

Expect precondition() {
    Expect e;
    e.precondition = true;
    return e;
}

std::vector<double> shares(const std::vector<double>& v) {
    LD s = 0;
    for (double x : v) s += x;
    std::vector<double> out;
    for (double x : v) out.push_back(static_cast<double>(x / s));
    return out;
}

Expect o_outlier_iqr(const std::vector<double>& v) {
    if (v.size() < 5) return precondition();
    const double q1 = quantile7(v, 0.25), q3 = quantile7(v, 0.75);
    const double iqr = q3 - q1;
    const double lo = q1 - 3 * iqr, hi = q3 + 3 * iqr;
    Expect e;
    double worst = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] > hi || v[i] < lo) {
            e.indices.push_back(static_cast<int>(i));
            worst = std::max(worst, v[i] > hi ? v[i] - hi : lo - v[i]);
        }
    }
    e.fires = !e.indices.empty();
    e.score = iqr > 0 ? std::min(1.0, worst / (3 * iqr)) : 1.0;
    e.moments = {{"q1", q1}, {"q3", q3}};
    return e;
}

Expect o_outlier_powerlaw(const std::vector<double>& v) {
    if (v.size() < 6) return precondition();
    for (double x : v) {
        if (x <= 0) return precondition();
    }
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    std::vector<double> lx, ly;
    for (std::size_t r = 1; r < v.size(); ++r) {
        lx.push_back(std::log(static_cast<double>(r + 1)));
        ly.push_back(std::log(v[idx[r]]));
    }
    const Fit f = ols(lx, ly);
    LD sse = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const LD r = ly[i] - (static_cast<LD>(f.intercept) + static_cast<LD>(f.slope) * lx[i]);
        sse += r * r;
    }
    const double s = static_cast<double>(std::sqrt(sse / (lx.size() - 2)));
    const double resid = std::log(v[idx[0]]) - f.intercept;
    const double z = s > 0 ? resid / s : (resid > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    Expect e;
    e.fires = z > 3;
    e.score = normal_cdf(z);
    e.indices = {static_cast<int>(idx[0])};
    if (std::isfinite(z)) e.moments = {{"z", z}};
    return e;
}

Expect o_dominance(const std::vector<double>& v) {
    if (v.size() < 3) return precondition();
    LD s = 0;
    for (double x : v) {
        if (x < 0) return precondition();
        s += x;
    }
    if (s <= 0) return precondition();
    const auto sh = shares(v);
    const auto it = std::max_element(sh.begin(), sh.end());
    Expect e;
    e.fires = *it >= 0.5;
    e.score = *it;
    e.indices = {static_cast<int>(it - sh.begin())};
    e.moments = {{"share", *it}};
    return e;
}

Expect o_top_two(const std::vector<double>& v) {
    Expect d = o_dominance(v);
    if (d.precondition) return d;
    auto sh = shares(v);
    std::vector<double> sorted = sh;
    std::sort(sorted.rbegin(), sorted.rend());
    Expect e;
    e.fires = sorted[0] >= 0.34 && sorted[1] >= 0.34;
    e.score = sorted[1];
    e.moments = {{"first", sorted[0]}, {"second", sorted[1]}};
    return e;
}

Expect o_negative(const std::vector<double>& v) {
    if (v.size() < 4) return precondition();
    const auto it = std::min_element(v.begin(), v.end());
    Expect e;
    if (*it >= 0) return e;
    std::vector<double> rest;
    for (auto j = v.begin(); j != v.end(); ++j) {
        if (j != it) rest.push_back(*j);
    }
    const double sd = pop_sd(rest);
    const double gap = *std::min_element(rest.begin(), rest.end()) - *it;
    e.fires = gap > 3 * sd;
    e.score = sd > 0 ? 1 - 3 * sd / gap : 1.0;
    e.indices = {static_cast<int>(it - v.begin())};
    e.moments = {{"sigma", sd}, {"gap", gap}};
    return e;
}

std::vector<double> iota_x(std::size_t n) {
    std::vector<double> x(n);
    std::iota(x.begin(), x.end(), 0.0);
    return x;
}

Expect o_trend(const std::vector<double>& v) {
    if (v.size() < 4) return precondition();
    const Fit f = ols(iota_x(v.size()), v);
    Expect e;
    e.score = f.r2 == 0 ? 0.0 : f.r2 * (1 - f.p);
    e.fires = e.score >= 0.7;
    e.moments = {{"r2", f.r2}, {"slope", f.slope}};
    e.pvalues = {{"p", f.p}, {"score", e.score}};
    return e;
}

Expect o_change_point(const std::vector<double>& v) {
    if (v.size() < 6) return precondition();
    double bestAbs = -1, bestP = 1, bestT = 0;
    int best = 0;
    for (std::size_t k = 2; k + 2 <= v.size(); ++k) {
        const std::vector<double> a(v.begin(), v.begin() + static_cast<long>(k)), b(v.begin() + static_cast<long>(k), v.end());
        // Unbiased variances.
        auto var = [](const std::vector<double>& s) {
            const double m = mean(s);
            LD acc = 0;
            for (double x : s) acc += (x - m) * (x - m);
            return static_cast<double>(acc / (s.size() - 1));
        };
        const double va = var(a) / a.size(), vb = var(b) / b.size();
        const double diff = mean(a) - mean(b);
        double t, p;
        if (va + vb == 0) {
            t = diff == 0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
            p = diff == 0 ? 1.0 : 0.0;
        } else {
            t = diff / std::sqrt(va + vb);
            const double dof = (va + vb) * (va + vb) / (va * va / (a.size() - 1) + vb * vb / (b.size() - 1));
            p = t_two_sided(t, dof);
        }
        if (std::fabs(t) > bestAbs) {
            bestAbs = std::fabs(t);
            bestP = p;
            bestT = t;
            best = static_cast<int>(k);
        }
    }
    Expect e;
    e.fires = bestP < 0.05;
    e.score = 1 - bestP;
    e.indices = {best};
    e.pvalues = {{"p", bestP}};
    if (std::isfinite(bestT)) e.moments = {{"t", bestT}};
    return e;
}

Expect o_evenness(const std::vector<double>& v) {
    if (v.size() < 3) return precondition();
    const double m = mean(v);
    if (m == 0) return precondition();
    const double cv = pop_sd(v) / std::fabs(m);
    Expect e;
    e.fires = cv <= 0.1;
    e.score = 1 - cv / 0.1;
    e.moments = {{"cv", cv}};
    return e;
}

Expect o_skewness(const std::vector<double>& v) {
    if (v.size() < 5 || pop_sd(v) == 0) return precondition();
    const double k = skewness(v);
    Expect e;
    e.fires = std::fabs(k) >= 2;
    e.score = 1 - 2 / std::fabs(k);
    e.moments = {{"skewness", k}};
    return e;
}

Expect o_kurtosis(const std::vector<double>& v) {
    if (v.size() < 5 || pop_sd(v) == 0) return precondition();
    const double k = kurtosis(v);
    Expect e;
    e.fires = k >= 6;
    e.score = 1 - 6 / k;
    e.moments = {{"kurtosis", k}};
    return e;
}

Expect o_dependence(const Matrix2D& m) {
    if (m.size() < 2 || m[0].size() < 2) return precondition();
    LD total = 0;
    std::vector<LD> rs(m.size(), 0), cs(m[0].size(), 0);
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t j = 0; j < m[i].size(); ++j) {
            if (m[i][j] < 0) return precondition();
            rs[i] += m[i][j];
            cs[j] += m[i][j];
            total += m[i][j];
        }
    }
    LD stat = 0, minE = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t j = 0; j < m[i].size(); ++j) {
            const LD ex = rs[i] * cs[j] / total;
            minE = std::min(minE, ex);
            stat += (m[i][j] - ex) * (m[i][j] - ex) / ex;
        }
    }
    if (!(minE >= 5)) return precondition();
    const double dof = static_cast<double>((m.size() - 1) * (m[0].size() - 1));
    const double p = chi2_sf(static_cast<double>(stat), dof);
    Expect e;
    e.fires = p < 0.05;
    e.score = 1 - p;
    e.moments = {{"statistic", static_cast<double>(stat)}};
    e.pvalues = {{"p", p}};
    return e;
}

Expect o_correlation(const Matrix2D& m) {
    if (m.size() < 2 || m[0].size() < 4) return precondition();
    int inc = 0, sig = 0;
    Expect e;
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t j = i + 1; j < m.size(); ++j) {
            const double r = pearson(m[i], m[j]);
            if (std::isnan(r)) continue;
            const double n = static_cast<double>(m[i].size());
            double p;
            if (std::fabs(r) >= 1) {
                p = 0.0;
            } else {
                p = t_two_sided(r * std::sqrt((n - 2) / (1 - r * r)), n - 2);
            }
            ++inc;
            if (p < 0.05) ++sig;
            e.moments.emplace_back("rho", r);
            e.pvalues.emplace_back("p", p);
        }
    }
    const double frac = inc ? static_cast<double>(sig) / inc : 0.0;
    e.fires = inc > 0 && frac > 0.5;
    e.score = frac;
    return e;
}

Expect o_cross(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 4 || pop_sd(x) == 0 || pop_sd(y) == 0) return precondition();
    const double r = pearson(x, y);
    Expect e;
    e.fires = std::fabs(r) >= 0.8;
    e.score = std::fabs(r);
    e.moments = {{"rho", r}};
    return e;
}

// Generators -------------------------------------------------------------------

double nrm(Rng& rng, double mu = 0, double sd = 1) { return mu + sd * standard_normal(rng); }
int between(Rng& rng, int lo, int hi) { return lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1))); }

std::vector<double> gen_1d(InsightKind kind, Rng& rng, bool& powerlaw) {
    std::vector<double> v;
    powerlaw = false;
    switch (kind) {
        case InsightKind::outlier: {
            powerlaw = uniform01(rng) < 0.5;
            const int n = between(rng, powerlaw ? 6 : 5, 12);
            if (powerlaw) {
                const double a = uniform(rng, 0.3, 2.0);
                for (int r = 1; r <= n; ++r) v.push_back(100 * std::pow(r, -a) * std::exp(nrm(rng, 0, 0.1)));
                if (uniform01(rng) < 0.5) v[0] *= uniform(rng, 1.5, 20);
                shuffle(v, rng);
            } else {
                for (int i = 0; i < n; ++i) v.push_back(nrm(rng, 20, 3));
                if (uniform01(rng) < 0.5) v[uniform_index(rng, v.size())] += (uniform01(rng) < 0.5 ? -1 : 1) * uniform(rng, 5, 60);
            }
            break;
        }
        case InsightKind::dominance:
        case InsightKind::top_two: {
            const int n = between(rng, 3, 8);
            for (int i = 0; i < n; ++i) v.push_back(uniform(rng, 0, 10));
            const double boost = uniform(rng, 0, 60);
            v[uniform_index(rng, v.size())] += boost;
            if (kind == InsightKind::top_two) v[uniform_index(rng, v.size())] += boost * uniform(rng, 0.5, 1.2);
            break;
        }
        case InsightKind::outstanding_negative: {
            const int n = between(rng, 4, 10);
            for (int i = 0; i < n; ++i) v.push_back(nrm(rng, uniform(rng, -2, 10), 2));
            if (uniform01(rng) < 0.6) v[uniform_index(rng, v.size())] = -uniform(rng, 1, 40);
            break;
        }
        case InsightKind::trend: {
            const int n = between(rng, 4, 12);
            const double slope = nrm(rng, 0, 2), noise = uniform(rng, 0.1, 8);
            for (int i = 0; i < n; ++i) v.push_back(10 + slope * i + nrm(rng, 0, noise));
            break;
        }
        case InsightKind::change_point: {
            const int n = between(rng, 6, 12);
            const int k = between(rng, 2, n - 2);
            const double jump = uniform(rng, 0, 8);
            for (int i = 0; i < n; ++i) v.push_back(nrm(rng, i < k ? 10 : 10 + jump, uniform(rng, 0.5, 2)));
            break;
        }
        case InsightKind::evenness: {
            const int n = between(rng, 3, 10);
            const double sd = uniform(rng, 0.5, 12);
            for (int i = 0; i < n; ++i) v.push_back(nrm(rng, 50, sd));
            break;
        }
        case InsightKind::skewness:
        case InsightKind::kurtosis: {
            const int n = between(rng, 5, 16);
            for (int i = 0; i < n; ++i) v.push_back(nrm(rng, 10, 2));
            if (uniform01(rng) < 0.6) v[uniform_index(rng, v.size())] += uniform(rng, 5, 60);
            break;
        }
        default: break;
    }
    return v;
}

Matrix2D gen_2d(InsightKind kind, Rng& rng) {
    Matrix2D m;
    if (kind == InsightKind::dependence) {
        const int r = between(rng, 2, 4), c = between(rng, 2, 4);
        const bool dependent = uniform01(rng) < 0.5;
        for (int i = 0; i < r; ++i) {
            std::vector<double> row;
            for (int j = 0; j < c; ++j) {
                double base = uniform(rng, 4, 40);
                if (dependent && i == j) base *= 3;
                row.push_back(std::round(base));
            }
            m.push_back(std::move(row));
        }
    } else {
        const int r = between(rng, 2, 4), c = between(rng, 4, 8);
        std::vector<double> pattern;
        for (int j = 0; j < c; ++j) pattern.push_back(uniform(rng, 0, 10));
        const double noise = uniform(rng, 0.05, 8);
        for (int i = 0; i < r; ++i) {
            std::vector<double> row;
            const double scale = uniform(rng, -2, 3);
            for (int j = 0; j < c; ++j) row.push_back(scale * pattern[static_cast<std::size_t>(j)] + nrm(rng, 0, noise));
            m.push_back(std::move(row));
        }
    }
    return m;
}

struct Observed {
    bool precondition = false;
    std::optional<Finding> finding;
};

template <class F>
Observed observe(F&& f) {
    Observed o;
    try {
        o.finding = f();
    } catch (const Error& e) {
        if (e.code() != ErrorCode::precondition && e.code() != ErrorCode::insufficient_data) throw;
        o.precondition = true;
    }
    return o;
}

double rel_err(double a, double b) {
    if (std::isinf(a) && std::isinf(b) && (a > 0) == (b > 0)) return 0.0;
    return std::fabs(a - b) / std::max(1.0, std::fabs(b));
}

std::string describe(const std::vector<double>& v) {
    std::ostringstream os;
    os.precision(17);
    os << '[';
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << ']';
    return os.str();
}

/// Reads the library's reported value for an oracle quantity.
std::vector<double> reported(const Finding& f, const std::string& key) {
    const auto& p = f.params;
    if (key == "rho" && p.contains("pairs")) {
        std::vector<double> out;
        for (const auto& pr : p["pairs"]) out.push_back(pr["rho"].get<double>());
        return out;
    }
    if (key == "p" && p.contains("pairs")) {
        std::vector<double> out;
        for (const auto& pr : p["pairs"]) out.push_back(pr["p"].get<double>());
        return out;
    }
    if (key == "score") return {f.score};
    if (key == "first") return {p["shares"][0].get<double>()};
    if (key == "second") return {p["shares"][1].get<double>()};
    if (p.contains(key) && p[key].is_number()) return {p[key].get<double>()};
    return {};
}

void compare(DetectorStats& st, const Observed& got, const Expect& want, const std::string& input) {
    ++st.cases;
    auto fail = [&](const std::string& why) {
        ++st.mismatches;
        if (st.firstFailure.empty()) st.firstFailure = why + " on " + input;
    };
    if (got.precondition != want.precondition) return fail("precondition disagreement");
    if (want.precondition) return;
    if (got.finding.has_value() != want.fires) return fail("firing disagreement");
    if (!want.fires) return;
    ++st.fired;
    const Finding& f = *got.finding;
    const double clamped = std::isnan(want.score) ? 0.0 : std::clamp(want.score, 0.0, 1.0);
    const bool pScore = std::any_of(want.pvalues.begin(), want.pvalues.end(), [](const auto& kv) { return kv.first == "score"; }) ||
                        f.kind == InsightKind::change_point || f.kind == InsightKind::dependence;
    const double scoreErr = std::fabs(f.score - clamped);
    if (pScore) {
        st.maxPErr = std::max(st.maxPErr, scoreErr);
        if (scoreErr > 1e-6) return fail("score");
    } else {
        st.maxMomentErr = std::max(st.maxMomentErr, scoreErr);
        if (scoreErr > 1e-9) return fail("score");
    }
    auto check_group = [&](const std::vector<std::pair<std::string, double>>& group, double tol, double& maxErr) {
        std::map<std::string, std::size_t> seen;
        for (const auto& [key, value] : group) {
            const auto vals = reported(f, key);
            const std::size_t k = seen[key]++;
            if (k >= vals.size()) return fail("missing param " + key), false;
            const double err = rel_err(vals[k], value);
            maxErr = std::max(maxErr, err);
            if (err > tol) return fail(key), false;
        }
        return true;
    };
    if (!check_group(want.moments, 1e-9, st.maxMomentErr)) return;
    if (!check_group(want.pvalues, 1e-6, st.maxPErr)) return;
    if (!want.indices.empty()) {
        std::vector<int> idx;
        if (f.params.contains("index")) idx.push_back(f.params["index"].get<int>());
        if (f.params.contains("indices")) {
            for (const auto& v : f.params["indices"]) idx.push_back(v.get<int>());
        }
        if (f.kind == InsightKind::top_two) return;
        if (idx != want.indices) return fail("indices");
    }
}

}  // namespace

DetectorStats check_detector(InsightKind kind, int cases, std::uint64_t seed) {
    DetectorStats st;
    Rng rng(seed);
    for (int c = 0; c < cases; ++c) {
        if (kind == InsightKind::dependence || kind == InsightKind::correlation) {
            const Matrix2D m = gen_2d(kind, rng);
            std::ostringstream in;
            for (const auto& row : m) in << describe(row);
            if (kind == InsightKind::dependence) {
                compare(st, observe([&] { return detect_dependence(m); }), o_dependence(m), in.str());
            } else {
                compare(st, observe([&] { return detect_correlation(m); }), o_correlation(m), in.str());
            }
            continue;
        }
        if (kind == InsightKind::cross_measure) {
            const int n = between(rng, 4, 10);
            const double slope = nrm(rng, 0, 1), noise = uniform(rng, 0.05, 3);
            std::vector<double> x, y;
            for (int i = 0; i < n; ++i) {
                x.push_back(nrm(rng, 5, 2));
                y.push_back(slope * x.back() + nrm(rng, 0, noise));
            }
            compare(st, observe([&] { return detect_cross_measure(x, y); }), o_cross(x, y), describe(x) + describe(y));
            continue;
        }
        bool powerlaw = false;
        const std::vector<double> v = gen_1d(kind, rng, powerlaw);
        const std::span<const double> s(v);
        Observed got;
        Expect want;
        switch (kind) {
            case InsightKind::outlier:
                got = observe([&] { return detect_outlier(s, powerlaw ? OutlierMethod::powerlaw : OutlierMethod::iqr); });
                want = powerlaw ? o_outlier_powerlaw(v) : o_outlier_iqr(v);
                break;
            case InsightKind::dominance: got = observe([&] { return detect_dominance(s); }); want = o_dominance(v); break;
            case InsightKind::top_two: got = observe([&] { return detect_top_two(s); }); want = o_top_two(v); break;
            case InsightKind::outstanding_negative:
                got = observe([&] { return detect_outstanding_negative(s); });
                want = o_negative(v);
                break;
            case InsightKind::trend: got = observe([&] { return detect_trend(s); }); want = o_trend(v); break;
            case InsightKind::change_point: got = observe([&] { return detect_change_point(s); }); want = o_change_point(v); break;
            case InsightKind::evenness: got = observe([&] { return detect_evenness(s); }); want = o_evenness(v); break;
            case InsightKind::skewness: got = observe([&] { return detect_skewness(s); }); want = o_skewness(v); break;
            case InsightKind::kurtosis: got = observe([&] { return detect_kurtosis(s); }); want = o_kurtosis(v); break;
            default: break;
        }
        compare(st, got, want, describe(v));
    }
    return st;
}

// Random tables ------------------------------------------------------------------

LabelTree random_tree(Rng& rng, int maxLeaves, int maxDepth, const std::string& prefix) {
    // Grow by splitting leaves until the budget or depth limit is reached.
    LabelTree root;
    const int leaves = between(rng, 1, maxLeaves);
    const int depth = between(rng, 1, maxDepth);
    std::function<void(LabelTree&, int, int, const std::string&)> grow = [&](LabelTree& node, int budget, int level,
                                                                              const std::string& name) {
        if (level == depth || budget == 1) return;
        const int kids = between(rng, level == 0 ? 1 : 2, std::max(level == 0 ? 1 : 2, std::min(budget, 3)));
        std::vector<int> share(static_cast<std::size_t>(kids), 1);
        for (int extra = budget - kids; extra > 0; --extra) ++share[uniform_index(rng, share.size())];
        for (int k = 0; k < kids && k < budget; ++k) {
            LabelTree child;
            child.label = name + std::to_string(k);
            grow(child, share[static_cast<std::size_t>(k)], level + 1, child.label + ".");
            node.children.push_back(std::move(child));
        }
    };
    grow(root, leaves, 0, prefix);
    if (root.children.empty()) root.children.push_back(LabelTree{prefix + "0", {}});
    return root;
}

TableState random_table(Rng& rng, int maxLeaves, int maxDepth, double missing) {
    const LabelTree rows = random_tree(rng, maxLeaves, maxDepth, "r");
    const LabelTree cols = random_tree(rng, maxLeaves, maxDepth, "c");
    const HeadingTree rt = HeadingTree::build(Side::row, rows), ct = HeadingTree::build(Side::col, cols);
    std::vector<std::vector<CellValue>> values(static_cast<std::size_t>(rt.leafCount()));
    for (auto& row : values) {
        for (int c = 0; c < ct.leafCount(); ++c) {
            if (uniform01(rng) < missing) row.emplace_back(); else row.emplace_back(std::round(nrm(rng, 20, 8) * 100) / 100);
        }
    }
    return make_table(rows, cols, values);
}

bool Tuple::operator<(const Tuple& o) const { return std::tie(row, col, value) < std::tie(o.row, o.col, o.value); }
bool Tuple::operator==(const Tuple& o) const { return row == o.row && col == o.col && value == o.value; }

std::vector<Tuple> labeled_tuples(const TableState& s) {
    std::vector<Tuple> out;
    const auto& rl = s.rowTree.leafOrder();
    const auto& cl = s.colTree.leafOrder();
    for (int r = 0; r < s.grid.rows(); ++r) {
        for (int c = 0; c < s.grid.cols(); ++c) {
            const auto& v = s.grid.value(r, c);
            if (!v) continue;
            // Labels as a set: reshaping moves a level between sides.
            std::vector<std::string> all = s.rowTree.path(rl[static_cast<std::size_t>(r)]);
            const auto cp = s.colTree.path(cl[static_cast<std::size_t>(c)]);
            all.insert(all.end(), cp.begin(), cp.end());
            std::sort(all.begin(), all.end());
            out.push_back(Tuple{all, {}, *v});
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<CellId> cell_ids(const TableState& s) {
    std::vector<CellId> out;
    for (int r = 0; r < s.grid.rows(); ++r) {
        for (int c = 0; c < s.grid.cols(); ++c) {
            if (s.grid.cellId(r, c).valid()) out.push_back(s.grid.cellId(r, c));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

double max_fd_error(nn::ParamSet& params, const std::function<nn::Var(nn::Tape&)>& f, double h) {
    nn::Tape t(&params);
    const nn::Var out = f(t);
    t.backward(out);
    nn::Grads g(params);
    t.accumulate(g);
    double worst = 0.0;
    for (int i = 0; i < params.size(); ++i) {
        nn::Matrix& w = params.at(i).value;
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double orig = w[k];
            w[k] = orig + h;
            nn::Tape tp(&params);
            const double fp = tp.value(f(tp))[0];
            w[k] = orig - h;
            nn::Tape tm(&params);
            const double fm = tm.value(f(tm))[0];
            w[k] = orig;
            const double numeric = (fp - fm) / (2 * h);
            const double analytic = g.at(i)[k];
            const double err = std::fabs(analytic - numeric) / std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
            if (std::fabs(analytic - numeric) > 1e-9) worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace oracle
