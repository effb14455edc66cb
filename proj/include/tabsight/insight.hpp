#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tabsight/table.hpp"

namespace tabsight {

enum class InsightKind {
    outlier,
    dominance,
    top_two,
    outstanding_negative,
    trend,
    change_point,
    evenness,
    skewness,
    kurtosis,
    dependence,
    correlation,
    cross_measure,
    multi_identical,
    multi_differs,
};

/// Number of single-block kinds; the two multi-block patterns follow them.
inline constexpr int kSingleKindCount = 12;

std::string_view to_string(InsightKind kind);
std::optional<InsightKind> kind_from_string(std::string_view name);
inline bool is_single_block(InsightKind k) { return static_cast<int>(k) < kSingleKindCount; }

/// Chart tags a kind may be rendered with; the first one is the default.
const std::vector<std::string>& allowed_charts(InsightKind kind);

enum class Provenance { agent, manual };
std::string_view to_string(Provenance p);

struct DetectorThresholds {
    double dominanceShare = 0.5;
    double topTwoShare = 0.34;
    double pValue = 0.05;
    double trendScore = 0.7;
    double skewness = 2.0;
    double kurtosis = 6.0;
    double crossMeasure = 0.8;
    double evennessCv = 0.1;
    double negativeGapSigmas = 3.0;
    double outlierIqrFactor = 3.0;
    double powerlawZ = 3.0;
    double correlationFraction = 0.5;
    double minExpectedCount = 5.0;
};

void to_json(nlohmann::json& j, const DetectorThresholds& t);
void from_json(const nlohmann::json& j, DetectorThresholds& t);

/// Output of a single detector: indices in params refer to positions in the
/// sequence that was passed in.
struct Finding {
    InsightKind kind = InsightKind::outlier;
    double score = 0.0;
    nlohmann::json params = nlohmann::json::object();
    std::string chart;
};

struct InsightRecord {
    int id = -1;
    InsightKind kind = InsightKind::outlier;
    Block block;
    std::vector<Block> blocks;  // multi-block members, empty otherwise
    double score = 0.0;
    nlohmann::json params = nlohmann::json::object();
    std::string chart;
    Provenance provenance = Provenance::agent;

    bool operator==(const InsightRecord&) const = default;
};

nlohmann::json block_to_json(const Block& b);
nlohmann::json record_to_json(const InsightRecord& r);

// Single-block detectors. Unmet preconditions throw Error(insufficient_data)
// or Error(precondition); unmet thresholds return nullopt.

enum class OutlierMethod { iqr, powerlaw };

std::optional<Finding> detect_outlier(std::span<const double> values, OutlierMethod method = OutlierMethod::iqr,
                                      const DetectorThresholds& th = {});
std::optional<Finding> detect_dominance(std::span<const double> values, const DetectorThresholds& th = {});
std::optional<Finding> detect_top_two(std::span<const double> values, const DetectorThresholds& th = {});
std::optional<Finding> detect_outstanding_negative(std::span<const double> values, const DetectorThresholds& th = {});
std::optional<Finding> detect_trend(std::span<const double> values, const DetectorThresholds& th = {});
/// Score of the trend detector, 0 for a constant sequence.
double trend_score(std::span<const double> values);
std::optional<Finding> detect_change_point(std::span<const double> values, const DetectorThresholds& th = {});
std::optional<Finding> detect_evenness(std::span<const double> values, const DetectorThresholds& th = {});
std::optional<Finding> detect_skewness(std::span<const double> values, const DetectorThresholds& th = {});
std::optional<Finding> detect_kurtosis(std::span<const double> values, const DetectorThresholds& th = {});

using Matrix2D = std::vector<std::vector<double>>;

std::optional<Finding> detect_dependence(const Matrix2D& block, const DetectorThresholds& th = {});
std::optional<Finding> detect_correlation(const Matrix2D& block, const DetectorThresholds& th = {});
std::optional<Finding> detect_cross_measure(std::span<const double> x, std::span<const double> y,
                                            const DetectorThresholds& th = {});

/// Runs every applicable detector on the block. Sorted by score descending,
/// ties broken by kind order. Throws empty_block when no cell has a value.
std::vector<InsightRecord> detect_all(const TableState& state, const Block& block, const DetectorThresholds& th = {});

// Multi-block --------------------------------------------------------------

enum class RelationMechanism { name_based, topology_based };
std::string_view to_string(RelationMechanism m);

struct BlockRelation {
    RelationMechanism mechanism = RelationMechanism::name_based;
    Block anchor;
    std::vector<Block> related;
    Side sharedSide = Side::row;

    bool operator==(const BlockRelation&) const = default;
};

nlohmann::json relation_to_json(const BlockRelation& r);

std::vector<BlockRelation> recommend_blocks(const TableState& state, const Block& anchor);

/// `perBlock[i]` holds the insights detected on `relation.related[i]`.
std::optional<InsightRecord> compose_multiblock(const BlockRelation& relation,
                                                const std::vector<std::vector<InsightRecord>>& perBlock);

}  // namespace tabsight
