#include "tabsight/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tabsight/error.hpp"

namespace tabsight::stats {

namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 10000;

// Continued fraction for the incomplete beta, modified Lentz.
double beta_cf(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw Error(ErrorCode::numeric, "incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw Error(ErrorCode::numeric, "incomplete beta needs a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lnFront = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(lnFront);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double gamma_p(double a, double x) {
    if (a <= 0.0) throw Error(ErrorCode::numeric, "incomplete gamma needs a > 0");
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    if (x < a + 1.0) {
        double ap = a;
        double sum = 1.0 / a;
        double del = sum;
        for (int n = 0; n < kMaxIter; ++n) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * kEps) {
                return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
            }
        }
        throw Error(ErrorCode::numeric, "incomplete gamma series did not converge");
    }
    return 1.0 - gamma_q(a, x);
}

double gamma_q(double a, double x) {
    if (a <= 0.0) throw Error(ErrorCode::numeric, "incomplete gamma needs a > 0");
    if (x <= 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    if (x < a + 1.0) return 1.0 - gamma_p(a, x);
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
    }
    throw Error(ErrorCode::numeric, "incomplete gamma continued fraction did not converge");
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double student_t_two_sided(double t, double dof) {
    if (std::isnan(t)) return 1.0;
    if (std::isinf(t)) return 0.0;
    return incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

double chi_square_sf(double statistic, double dof) {
    if (statistic <= 0.0) return 1.0;
    return gamma_q(0.5 * dof, 0.5 * statistic);
}

double mean(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
    const double mu = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - mu) * (x - mu);
    return s / static_cast<double>(xs.size());
}

double stddev(std::span<const double> xs) { return std::sqrt(variance(xs)); }

double sample_variance(std::span<const double> xs) {
    const double mu = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - mu) * (x - mu);
    return s / static_cast<double>(xs.size() - 1);
}

double skewness(std::span<const double> xs) {
    const double mu = mean(xs);
    double s2 = 0.0, s3 = 0.0;
    for (double x : xs) {
        const double d = x - mu;
        s2 += d * d;
        s3 += d * d * d;
    }
    return std::sqrt(static_cast<double>(xs.size())) * s3 / std::pow(s2, 1.5);
}

double kurtosis(std::span<const double> xs) {
    const double mu = mean(xs);
    double s2 = 0.0, s4 = 0.0;
    for (double x : xs) {
        const double d = x - mu;
        s2 += d * d;
        s4 += d * d * d * d;
    }
    return static_cast<double>(xs.size()) * s4 / (s2 * s2);
}

double quantile(std::span<const double> xs, double q) {
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
    const std::size_t n = xs.size();
    const double mx = mean(xs);
    const double my = mean(ys);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    LinearFit fit;
    if (sxx == 0.0) return fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (syy == 0.0) return fit;  // flat response: r2 = 0, p = 1

    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
        sse += r * r;
    }
    fit.r2 = std::clamp(1.0 - sse / syy, 0.0, 1.0);
    const double dof = static_cast<double>(n) - 2.0;
    const double se = std::sqrt(sse / dof / sxx);
    if (se == 0.0) {
        fit.slopeT = fit.slope > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    } else {
        fit.slopeT = fit.slope / se;
    }
    fit.pValue = student_t_two_sided(fit.slopeT, dof);
    return fit;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
    const std::size_t n = xs.size();
    const double mx = mean(xs);
    const double my = mean(ys);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson_p_value(double rho, std::size_t n) {
    const double dof = static_cast<double>(n) - 2.0;
    if (std::fabs(rho) >= 1.0) return 0.0;
    const double t = rho * std::sqrt(dof / (1.0 - rho * rho));
    return student_t_two_sided(t, dof);
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = mean(a);
    const double mb = mean(b);
    const double va = sample_variance(a) / na;
    const double vb = sample_variance(b) / nb;
    WelchResult r;
    const double se2 = va + vb;
    if (se2 == 0.0) {
        r.dof = na + nb - 2.0;
        if (ma == mb) return r;
        r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.pValue = 0.0;
        return r;
    }
    r.t = (ma - mb) / std::sqrt(se2);
    r.dof = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    r.pValue = student_t_two_sided(r.t, r.dof);
    return r;
}

ChiSquareResult chi_square_independence(const std::vector<std::vector<double>>& table) {
    const std::size_t R = table.size();
    const std::size_t C = table.front().size();
    std::vector<double> rowSum(R, 0.0), colSum(C, 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            rowSum[r] += table[r][c];
            colSum[c] += table[r][c];
            total += table[r][c];
        }
    }
    ChiSquareResult out;
    out.dof = static_cast<double>((R - 1) * (C - 1));
    out.minExpected = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            const double e = rowSum[r] * colSum[c] / total;
            out.minExpected = std::min(out.minExpected, e);
            out.statistic += (table[r][c] - e) * (table[r][c] - e) / e;
        }
    }
    out.pValue = chi_square_sf(out.statistic, out.dof);
    return out;
}

}  // namespace tabsight::stats
