#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tabsight/insight.hpp"
#include "tabsight/random.hpp"
#include "tabsight/table.hpp"
#include "tabsight/transform.hpp"

namespace tabsight {

inline constexpr int kTotalKinds = kSingleKindCount;

struct Metrics {
    double AR = 0.0;
    double IR = 0.0;
    double ER = 0.0;
    int coveredCells = 0;
    int totalCells = 0;
    int discoveredKinds = 0;
    int totalKinds = kTotalKinds;
    std::map<InsightKind, int> coverageByKind;

    bool operator==(const Metrics&) const = default;
};

nlohmann::json metrics_to_json(const Metrics& m);

struct RewardWeights {
    double eta1 = 1.0;
    double eta2 = 1.0;
    double eta3 = 1.0;
    double gamma = 0.99;
};

struct RewardBreakdown {
    double deltaAR = 0.0;
    double deltaIR = 0.0;
    double deltaER = 0.0;
    double rC = 0.0;
    double rD = 0.0;
    double rExt = 0.0;
    double rIntHeading = 0.0;
    double rIntContent = 0.0;
};

struct EpisodeConfig {
    int totalSteps = 200;
    double stageRatio = 0.04;
    RewardWeights weights;
    std::uint64_t seed = 0;
    /// Randomizes the sibling order of both headers on reset.
    bool shuffleHeadings = false;
    DetectorThresholds thresholds;

    int transformSteps() const;
};

void to_json(nlohmann::json& j, const EpisodeConfig& c);
void from_json(const nlohmann::json& j, EpisodeConfig& c);

/// Recomputes metrics from the state's size and the surviving ledger; only
/// single-block kinds count toward IR and ER.
Metrics compute_metrics(const TableState& state, const std::vector<InsightRecord>& ledger);

RewardBreakdown reward_between(const Metrics& before, const Metrics& after, const RewardWeights& w);

double discounted_return(std::span<const double> rewards, double gamma);

/// Randomizes the sibling order of both headers, keeping every cell's labels.
TableState shuffle_headings(const TableState& state, Rng& rng);

struct StepResult {
    RewardBreakdown reward;
    bool done = false;
    nlohmann::json info;
};

class Environment {
public:
    Environment(TableState initial, EpisodeConfig config);

    /// Restores the initial table; deterministic given config.seed.
    void reset();

    StepResult step(ActionKind action);

    /// Continues from an arbitrary state whose vizMask already holds `ledger`.
    void restore(TableState state, std::vector<InsightRecord> ledger, int nextInsightId);
    int nextInsightId() const { return nextInsightId_; }

    const TableState& state() const { return state_; }
    const EpisodeConfig& config() const { return config_; }
    Stage stage() const;
    ActionMask legalMask() const;
    bool done() const { return done_; }
    int stepCount() const { return state_.step; }
    const std::vector<InsightRecord>& ledger() const { return ledger_; }
    const Metrics& metrics() const { return metrics_; }

    /// Versioned JSON observation (heading graph, grid, stage, mask).
    nlohmann::json observation() const;

private:
    TableState initial_;
    EpisodeConfig config_;
    TableState state_;
    std::vector<InsightRecord> ledger_;
    Metrics metrics_;
    bool done_ = false;
    int nextInsightId_ = 0;
};

/// Embeds `record` over its block: marks the cells and appends it to the ledger.
void embed_record(TableState& state, std::vector<InsightRecord>& ledger, InsightRecord record);

inline constexpr int kObservationVersion = 1;

/// Edge classes of the heading graph.
enum class EdgeClass { row_parent_child = 0, col_parent_child = 1, root_link = 2 };

struct HeadingGraphNode {
    std::string label;
    int selection = -1;  // 1 selected in the column header, 2 in the row header, -1 otherwise
    Side side = Side::row;
    int treeId = 0;  // id inside its tree; -1 for the top virtual root
};

struct HeadingGraphEdge {
    int parent = 0;
    int child = 0;
    EdgeClass cls = EdgeClass::root_link;
};

/// Three virtual roots: node 0 joins the row root (1) and the column root.
struct HeadingGraph {
    std::vector<HeadingGraphNode> nodes;
    std::vector<HeadingGraphEdge> edges;
};

HeadingGraph heading_graph(const TableState& state);

nlohmann::json observation_json(const TableState& state, Stage stage, const ActionMask& mask,
                                const std::vector<InsightRecord>& ledger);

}  // namespace tabsight
