#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "tabsight/insight.hpp"
#include "tabsight/stats.hpp"

namespace tabsight {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 14> kKindNames = {
    "outlier",  "dominance", "top_two",    "outstanding_negative", "trend",       "change_point",    "evenness",
    "skewness", "kurtosis",  "dependence", "correlation",          "cross_measure", "multi_identical", "multi_differs",
};

void require_count(std::span<const double> v, std::size_t n, std::string_view who) {
    if (v.size() < n) {
        throw Error(ErrorCode::insufficient_data,
                    std::string(who) + " needs at least " + std::to_string(n) + " values, got " + std::to_string(v.size()));
    }
}

double clamp01(double x) {
    if (std::isnan(x)) return 0.0;
    return std::clamp(x, 0.0, 1.0);
}

Finding make(InsightKind kind, double score, json params) {
    Finding f;
    f.kind = kind;
    f.score = clamp01(score);
    f.params = std::move(params);
    f.chart = allowed_charts(kind).front();
    return f;
}

std::vector<double> shares_of(std::span<const double> values, std::string_view who) {
    require_count(values, 3, who);
    double sum = 0.0;
    for (double v : values) {
        if (v < 0.0) throw Error(ErrorCode::precondition, std::string(who) + " needs non-negative values");
        sum += v;
    }
    if (sum <= 0.0) throw Error(ErrorCode::precondition, std::string(who) + " needs a positive sum");
    std::vector<double> shares;
    shares.reserve(values.size());
    for (double v : values) shares.push_back(v / sum);
    return shares;
}

void require_spread(std::span<const double> values, std::string_view who) {
    if (stats::variance(values) <= 0.0) throw Error(ErrorCode::precondition, std::string(who) + " needs non-zero variance");
}

}  // namespace

std::string_view to_string(InsightKind kind) { return kKindNames.at(static_cast<std::size_t>(kind)); }

std::optional<InsightKind> kind_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == name) return static_cast<InsightKind>(i);
    }
    return std::nullopt;
}

const std::vector<std::string>& allowed_charts(InsightKind kind) {
    static const std::vector<std::string> box{"box", "bar"};
    static const std::vector<std::string> pie{"pie", "radial"};
    static const std::vector<std::string> bar{"bar"};
    static const std::vector<std::string> line{"line", "horizon"};
    static const std::vector<std::string> density{"density"};
    static const std::vector<std::string> stacked{"stacked-bar-normalized"};
    static const std::vector<std::string> multiLine{"multi-line"};
    static const std::vector<std::string> scatter{"scatter"};
    static const std::vector<std::string> multi{"box",     "bar",   "pie", "radial", "line", "horizon", "density", "stacked-bar-normalized",
                                                "multi-line", "scatter"};
    switch (kind) {
        case InsightKind::outlier: return box;
        case InsightKind::dominance:
        case InsightKind::top_two: return pie;
        case InsightKind::outstanding_negative:
        case InsightKind::evenness: return bar;
        case InsightKind::trend:
        case InsightKind::change_point: return line;
        case InsightKind::skewness:
        case InsightKind::kurtosis: return density;
        case InsightKind::dependence: return stacked;
        case InsightKind::correlation: return multiLine;
        case InsightKind::cross_measure: return scatter;
        case InsightKind::multi_identical:
        case InsightKind::multi_differs: return multi;
    }
    return bar;
}

std::string_view to_string(Provenance p) { return p == Provenance::agent ? "agent" : "manual"; }

void to_json(json& j, const DetectorThresholds& t) {
    j = json{{"dominanceShare", t.dominanceShare},
             {"topTwoShare", t.topTwoShare},
             {"pValue", t.pValue},
             {"trendScore", t.trendScore},
             {"skewness", t.skewness},
             {"kurtosis", t.kurtosis},
             {"crossMeasure", t.crossMeasure},
             {"evennessCv", t.evennessCv},
             {"negativeGapSigmas", t.negativeGapSigmas},
             {"outlierIqrFactor", t.outlierIqrFactor},
             {"powerlawZ", t.powerlawZ},
             {"correlationFraction", t.correlationFraction},
             {"minExpectedCount", t.minExpectedCount}};
}

void from_json(const json& j, DetectorThresholds& t) {
    auto get = [&](const char* key, double& field) {
        if (j.contains(key)) field = j.at(key).get<double>();
    };
    get("dominanceShare", t.dominanceShare);
    get("topTwoShare", t.topTwoShare);
    get("pValue", t.pValue);
    get("trendScore", t.trendScore);
    get("skewness", t.skewness);
    get("kurtosis", t.kurtosis);
    get("crossMeasure", t.crossMeasure);
    get("evennessCv", t.evennessCv);
    get("negativeGapSigmas", t.negativeGapSigmas);
    get("outlierIqrFactor", t.outlierIqrFactor);
    get("powerlawZ", t.powerlawZ);
    get("correlationFraction", t.correlationFraction);
    get("minExpectedCount", t.minExpectedCount);
}

json block_to_json(const Block& b) {
    return json{{"rowEntry", b.rowEntry},
                {"colEntry", b.colEntry},
                {"rows", json::array({b.rowBegin, b.rowEnd})},
                {"cols", json::array({b.colBegin, b.colEnd})}};
}

json record_to_json(const InsightRecord& r) {
    json j{{"id", r.id},
           {"kind", to_string(r.kind)},
           {"block", block_to_json(r.block)},
           {"score", r.score},
           {"params", r.params},
           {"chart", r.chart},
           {"provenance", to_string(r.provenance)}};
    if (!r.blocks.empty()) {
        json arr = json::array();
        for (const Block& b : r.blocks) arr.push_back(block_to_json(b));
        j["blocks"] = std::move(arr);
    }
    return j;
}

// Point insights ------------------------------------------------------------

std::optional<Finding> detect_outlier(std::span<const double> values, OutlierMethod method, const DetectorThresholds& th) {
    if (method == OutlierMethod::iqr) {
        require_count(values, 5, "outlier");
        const double q1 = stats::quantile(values, 0.25);
        const double q3 = stats::quantile(values, 0.75);
        const double iqr = q3 - q1;
        const double lo = q1 - th.outlierIqrFactor * iqr;
        const double hi = q3 + th.outlierIqrFactor * iqr;
        json indices = json::array();
        double maxExceed = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double excess = values[i] > hi ? values[i] - hi : (values[i] < lo ? lo - values[i] : 0.0);
            if (excess > 0.0) {
                indices.push_back(i);
                maxExceed = std::max(maxExceed, excess);
            }
        }
        if (indices.empty()) return std::nullopt;
        const double scale = th.outlierIqrFactor * iqr;
        const double score = scale > 0.0 ? std::min(1.0, maxExceed / scale) : 1.0;
        return make(InsightKind::outlier, score,
                    json{{"method", "iqr"}, {"indices", indices}, {"q1", q1}, {"q3", q3}, {"lower", lo}, {"upper", hi}});
    }

    require_count(values, 6, "power-law outlier");
    for (double v : values) {
        if (v <= 0.0) throw Error(ErrorCode::precondition, "power-law outlier needs positive values");
    }
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    // Fit log value against log rank on ranks 2..n and test the top value.
    std::vector<double> lx, ly;
    for (std::size_t r = 1; r < order.size(); ++r) {
        lx.push_back(std::log(static_cast<double>(r + 1)));
        ly.push_back(std::log(values[order[r]]));
    }
    const stats::LinearFit fit = stats::linear_fit(lx, ly);
    double sse = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const double e = ly[i] - (fit.intercept + fit.slope * lx[i]);
        sse += e * e;
    }
    const double s = std::sqrt(sse / static_cast<double>(lx.size() - 2));
    const double residual = std::log(values[order[0]]) - fit.intercept;
    double z = 0.0;
    if (s > 0.0) {
        z = residual / s;
    } else if (residual > 0.0) {
        z = std::numeric_limits<double>::infinity();
    }
    if (!(z > th.powerlawZ)) return std::nullopt;
    return make(InsightKind::outlier, stats::normal_cdf(z),
                json{{"method", "powerlaw"},
                     {"indices", json::array({order[0]})},
                     {"z", std::isinf(z) ? json(nullptr) : json(z)},
                     {"exponent", fit.slope}});
}

std::optional<Finding> detect_dominance(std::span<const double> values, const DetectorThresholds& th) {
    const std::vector<double> shares = shares_of(values, "dominance");
    const auto it = std::max_element(shares.begin(), shares.end());
    if (*it < th.dominanceShare) return std::nullopt;
    const auto index = static_cast<std::size_t>(it - shares.begin());
    return make(InsightKind::dominance, *it, json{{"index", index}, {"share", *it}});
}

std::optional<Finding> detect_top_two(std::span<const double> values, const DetectorThresholds& th) {
    const std::vector<double> shares = shares_of(values, "top-two");
    std::vector<std::size_t> order(shares.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return shares[a] > shares[b]; });
    const double first = shares[order[0]];
    const double second = shares[order[1]];
    if (first < th.topTwoShare || second < th.topTwoShare) return std::nullopt;
    return make(InsightKind::top_two, second,
                json{{"indices", json::array({order[0], order[1]})}, {"shares", json::array({first, second})}});
}

std::optional<Finding> detect_outstanding_negative(std::span<const double> values, const DetectorThresholds& th) {
    require_count(values, 4, "outstanding negative");
    const auto minIt = std::min_element(values.begin(), values.end());
    const auto minIndex = static_cast<std::size_t>(minIt - values.begin());
    const double minValue = *minIt;
    if (minValue >= 0.0) return std::nullopt;
    std::vector<double> rest;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i != minIndex) rest.push_back(values[i]);
    }
    const double sigma = stats::stddev(rest);
    const double gap = *std::min_element(rest.begin(), rest.end()) - minValue;
    if (!(gap > th.negativeGapSigmas * sigma)) return std::nullopt;
    const double score = sigma > 0.0 ? 1.0 - th.negativeGapSigmas * sigma / gap : 1.0;
    return make(InsightKind::outstanding_negative, score,
                json{{"index", minIndex}, {"value", minValue}, {"gap", gap}, {"sigma", sigma}});
}

// Shape insights ------------------------------------------------------------

namespace {

std::vector<double> positions(std::size_t n) {
    std::vector<double> xs(n);
    std::iota(xs.begin(), xs.end(), 0.0);
    return xs;
}

}  // namespace

double trend_score(std::span<const double> values) {
    const std::vector<double> xs = positions(values.size());
    const stats::LinearFit fit = stats::linear_fit(xs, values);
    if (fit.r2 == 0.0) return 0.0;
    return fit.r2 * (1.0 - fit.pValue);
}

std::optional<Finding> detect_trend(std::span<const double> values, const DetectorThresholds& th) {
    require_count(values, 4, "trend");
    const std::vector<double> xs = positions(values.size());
    const stats::LinearFit fit = stats::linear_fit(xs, values);
    const double score = fit.r2 == 0.0 ? 0.0 : fit.r2 * (1.0 - fit.pValue);
    if (score < th.trendScore) return std::nullopt;
    return make(InsightKind::trend, score,
                json{{"direction", fit.slope > 0 ? "up" : "down"},
                     {"slope", fit.slope},
                     {"r2", fit.r2},
                     {"p", fit.pValue}});
}

std::optional<Finding> detect_change_point(std::span<const double> values, const DetectorThresholds& th) {
    require_count(values, 6, "change point");
    std::size_t best = 0;
    stats::WelchResult bestResult;
    double bestAbs = -1.0;
    for (std::size_t k = 2; k + 2 <= values.size(); ++k) {
        const stats::WelchResult r = stats::welch_t_test(values.subspan(0, k), values.subspan(k));
        const double a = std::fabs(r.t);
        if (a > bestAbs) {
            bestAbs = a;
            best = k;
            bestResult = r;
        }
    }
    if (!(bestResult.pValue < th.pValue)) return std::nullopt;
    return make(InsightKind::change_point, 1.0 - bestResult.pValue,
                json{{"index", best},
                     {"t", std::isinf(bestResult.t) ? json(nullptr) : json(bestResult.t)},
                     {"p", bestResult.pValue}});
}

std::optional<Finding> detect_evenness(std::span<const double> values, const DetectorThresholds& th) {
    require_count(values, 3, "evenness");
    const double mu = stats::mean(values);
    if (mu == 0.0) throw Error(ErrorCode::precondition, "evenness is undefined for a zero mean");
    const double cv = stats::stddev(values) / std::fabs(mu);
    if (cv > th.evennessCv) return std::nullopt;
    return make(InsightKind::evenness, 1.0 - cv / th.evennessCv, json{{"cv", cv}, {"mean", mu}});
}

std::optional<Finding> detect_skewness(std::span<const double> values, const DetectorThresholds& th) {
    require_count(values, 5, "skewness");
    require_spread(values, "skewness");
    const double k1 = stats::skewness(values);
    if (std::fabs(k1) < th.skewness) return std::nullopt;
    return make(InsightKind::skewness, 1.0 - th.skewness / std::fabs(k1), json{{"skewness", k1}});
}

std::optional<Finding> detect_kurtosis(std::span<const double> values, const DetectorThresholds& th) {
    require_count(values, 5, "kurtosis");
    require_spread(values, "kurtosis");
    const double k2 = stats::kurtosis(values);
    if (k2 < th.kurtosis) return std::nullopt;
    return make(InsightKind::kurtosis, 1.0 - th.kurtosis / k2, json{{"kurtosis", k2}});
}

// Compound insights ---------------------------------------------------------

std::optional<Finding> detect_dependence(const Matrix2D& block, const DetectorThresholds& th) {
    if (block.size() < 2 || block.front().size() < 2) {
        throw Error(ErrorCode::insufficient_data, "dependence needs at least a 2x2 block");
    }
    for (const auto& row : block) {
        for (double v : row) {
            if (v < 0.0) throw Error(ErrorCode::precondition, "dependence needs non-negative counts");
        }
    }
    const stats::ChiSquareResult r = stats::chi_square_independence(block);
    if (!(r.minExpected >= th.minExpectedCount)) {
        throw Error(ErrorCode::precondition, "dependence needs every expected count >= " + std::to_string(th.minExpectedCount));
    }
    if (!(r.pValue < th.pValue)) return std::nullopt;
    return make(InsightKind::dependence, 1.0 - r.pValue,
                json{{"statistic", r.statistic}, {"dof", r.dof}, {"p", r.pValue}});
}

std::optional<Finding> detect_correlation(const Matrix2D& block, const DetectorThresholds& th) {
    if (block.size() < 2 || block.front().size() < 4) {
        throw Error(ErrorCode::insufficient_data, "correlation needs at least 2 rows and 4 columns");
    }
    json pairs = json::array();
    int included = 0;
    int significant = 0;
    for (std::size_t i = 0; i < block.size(); ++i) {
        for (std::size_t j = i + 1; j < block.size(); ++j) {
            const double rho = stats::pearson(block[i], block[j]);
            if (std::isnan(rho)) continue;
            const double p = stats::pearson_p_value(rho, block[i].size());
            ++included;
            if (p < th.pValue) ++significant;
            pairs.push_back(json{{"i", i}, {"j", j}, {"rho", rho}, {"p", p}});
        }
    }
    if (included == 0) return std::nullopt;
    const double fraction = static_cast<double>(significant) / included;
    if (!(fraction > th.correlationFraction)) return std::nullopt;
    return make(InsightKind::correlation, fraction, json{{"fraction", fraction}, {"pairs", pairs}});
}

std::optional<Finding> detect_cross_measure(std::span<const double> x, std::span<const double> y, const DetectorThresholds& th) {
    if (x.size() != y.size()) throw Error(ErrorCode::precondition, "cross-measure needs equal lengths");
    require_count(x, 4, "cross-measure");
    require_spread(x, "cross-measure");
    require_spread(y, "cross-measure");
    const double rho = stats::pearson(x, y);
    if (std::fabs(rho) < th.crossMeasure) return std::nullopt;
    return make(InsightKind::cross_measure, std::fabs(rho), json{{"rho", rho}});
}

// Block driver --------------------------------------------------------------

namespace {

template <class F>
void try_detect(std::vector<Finding>& out, F&& f) {
    try {
        if (auto found = f()) out.push_back(std::move(*found));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::insufficient_data && e.code() != ErrorCode::precondition) throw;
    }
}

void remap_indices(json& params, const std::vector<int>& pos) {
    if (params.contains("index")) params["index"] = pos.at(params["index"].get<std::size_t>());
    if (params.contains("indices")) {
        for (auto& v : params["indices"]) v = pos.at(v.get<std::size_t>());
    }
}

}  // namespace

std::vector<InsightRecord> detect_all(const TableState& state, const Block& block, const DetectorThresholds& th) {
    const auto cells = block_values(state, block);
    std::vector<Finding> found;

    if (block.rowCount() == 1 || block.colCount() == 1) {
        std::vector<double> seq;
        std::vector<int> pos;
        int k = 0;
        for (const auto& row : cells) {
            for (const auto& v : row) {
                if (v) {
                    seq.push_back(*v);
                    pos.push_back(k);
                }
                ++k;
            }
        }
        const std::span<const double> s(seq);
        try_detect(found, [&] { return detect_outlier(s, OutlierMethod::iqr, th); });
        try_detect(found, [&] { return detect_dominance(s, th); });
        try_detect(found, [&] { return detect_top_two(s, th); });
        try_detect(found, [&] { return detect_outstanding_negative(s, th); });
        try_detect(found, [&] { return detect_trend(s, th); });
        const bool trendFired = std::any_of(found.begin(), found.end(), [](const Finding& f) { return f.kind == InsightKind::trend; });
        if (!trendFired) try_detect(found, [&] { return detect_change_point(s, th); });
        try_detect(found, [&] { return detect_evenness(s, th); });
        try_detect(found, [&] { return detect_skewness(s, th); });
        try_detect(found, [&] { return detect_kurtosis(s, th); });
        for (Finding& f : found) remap_indices(f.params, pos);
    } else {
        bool complete = true;
        Matrix2D m;
        for (const auto& row : cells) {
            std::vector<double> r;
            for (const auto& v : row) {
                if (!v) complete = false;
                r.push_back(v.value_or(0.0));
            }
            m.push_back(std::move(r));
        }
        if (complete) {
            try_detect(found, [&] { return detect_dependence(m, th); });
            try_detect(found, [&] { return detect_correlation(m, th); });
            if (m.size() == 2) {
                try_detect(found, [&] { return detect_cross_measure(m[0], m[1], th); });
            } else if (m.front().size() == 2) {
                std::vector<double> x, y;
                for (const auto& r : m) {
                    x.push_back(r[0]);
                    y.push_back(r[1]);
                }
                try_detect(found, [&] { return detect_cross_measure(x, y, th); });
            }
        }
    }

    std::stable_sort(found.begin(), found.end(), [](const Finding& a, const Finding& b) {
        if (a.score != b.score) return a.score > b.score;
        return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    });
    std::vector<InsightRecord> out;
    out.reserve(found.size());
    for (Finding& f : found) {
        InsightRecord r;
        r.kind = f.kind;
        r.block = block;
        r.score = f.score;
        r.params = std::move(f.params);
        r.chart = std::move(f.chart);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace tabsight
