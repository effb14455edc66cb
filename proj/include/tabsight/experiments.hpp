#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabsight/agent.hpp"

namespace tabsight {

// Stage-ratio x GCN-depth sweep ---------------------------------------------

struct SweepConfig {
    std::vector<double> stageRatios{0.01, 0.04, 0.08, 0.12, 0.16};
    std::vector<int> layers{1, 2, 3, 4, 5};
    int evalEpisodes = 5;
    TrainConfig train;
};

struct SweepCell {
    double stageRatio = 0.0;
    int layers = 0;
    int transformSteps = 0;
    double AR = 0.0;
    double IR = 0.0;
    double ER = 0.0;
    double reward = 0.0;
};

std::vector<SweepCell> run_sweep(const std::vector<TableState>& tables, const SweepConfig& cfg);
/// One row per L, one IR/AR/ER column group per SR.
std::string format_sweep_table(const std::vector<SweepCell>& cells);

// Robustness over randomized heading orders ----------------------------------

struct RobustnessReport {
    std::vector<Metrics> perInit;
    double meanAR = 0.0, stdAR = 0.0;
    double meanIR = 0.0, stdIR = 0.0;
    double meanER = 0.0, stdER = 0.0;
};

/// Greedy episodes from `initializations` shuffled heading orders.
RobustnessReport run_robustness(const TableState& table, const EpisodeConfig& cfg, int initializations, std::uint64_t seed);
nlohmann::json robustness_to_json(const RobustnessReport& r);

// Per-kind insight counts -----------------------------------------------------

struct ExtractReport {
    int blocks = 0;
    /// Blocks on which each kind fires.
    std::map<InsightKind, int> firing;
    /// Blocks whose top-scoring insight is each kind.
    std::map<InsightKind, int> heads;
};

/// Scans every (row entry, column entry) block of the table.
ExtractReport extract_counts(const TableState& table, const DetectorThresholds& th = {});
nlohmann::json extract_to_json(const ExtractReport& r);
std::string format_extract(const ExtractReport& r);

}  // namespace tabsight
