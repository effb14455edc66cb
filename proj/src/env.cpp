#include "tabsight/env.hpp"

#include <cmath>
#include <numeric>
#include <set>

namespace tabsight {

using nlohmann::json;

int EpisodeConfig::transformSteps() const {
    const long s = std::lround(stageRatio * totalSteps);
    return static_cast<int>(std::max(1L, s));
}

void to_json(json& j, const EpisodeConfig& c) {
    j = json{{"totalSteps", c.totalSteps},
             {"stageRatio", c.stageRatio},
             {"eta1", c.weights.eta1},
             {"eta2", c.weights.eta2},
             {"eta3", c.weights.eta3},
             {"gamma", c.weights.gamma},
             {"seed", c.seed},
             {"shuffleHeadings", c.shuffleHeadings},
             {"thresholds", c.thresholds}};
}

void from_json(const json& j, EpisodeConfig& c) {
    if (j.contains("totalSteps")) c.totalSteps = j.at("totalSteps").get<int>();
    if (j.contains("stageRatio")) c.stageRatio = j.at("stageRatio").get<double>();
    if (j.contains("eta1")) c.weights.eta1 = j.at("eta1").get<double>();
    if (j.contains("eta2")) c.weights.eta2 = j.at("eta2").get<double>();
    if (j.contains("eta3")) c.weights.eta3 = j.at("eta3").get<double>();
    if (j.contains("gamma")) c.weights.gamma = j.at("gamma").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("shuffleHeadings")) c.shuffleHeadings = j.at("shuffleHeadings").get<bool>();
    if (j.contains("thresholds")) c.thresholds = j.at("thresholds").get<DetectorThresholds>();
    if (c.totalSteps < 1) throw Error(ErrorCode::config, "totalSteps must be positive");
    if (c.stageRatio < 0.0 || c.stageRatio >= 1.0) throw Error(ErrorCode::config, "stageRatio must lie in [0, 1)");
    if (c.weights.gamma < 0.0 || c.weights.gamma > 1.0) throw Error(ErrorCode::config, "gamma must lie in [0, 1]");
}

json metrics_to_json(const Metrics& m) {
    json byKind = json::object();
    for (const auto& [k, n] : m.coverageByKind) byKind[std::string(to_string(k))] = n;
    return json{{"AR", m.AR},
                {"IR", m.IR},
                {"ER", m.ER},
                {"coveredCells", m.coveredCells},
                {"totalCells", m.totalCells},
                {"discoveredKinds", m.discoveredKinds},
                {"totalKinds", m.totalKinds},
                {"coverageByKind", byKind}};
}

Metrics compute_metrics(const TableState& state, const std::vector<InsightRecord>& ledger) {
    Metrics m;
    m.totalCells = state.grid.size();
    std::set<std::pair<int, int>> covered;
    for (const InsightRecord& r : ledger) {
        if (!is_single_block(r.kind)) continue;
        for (int i = r.block.rowBegin; i < r.block.rowEnd; ++i) {
            for (int j = r.block.colBegin; j < r.block.colEnd; ++j) covered.emplace(i, j);
        }
        m.coverageByKind[r.kind] += r.block.cellCount();
    }
    m.coveredCells = static_cast<int>(covered.size());
    m.discoveredKinds = static_cast<int>(m.coverageByKind.size());
    if (m.totalCells > 0) m.AR = static_cast<double>(m.coveredCells) / m.totalCells;
    m.IR = static_cast<double>(m.discoveredKinds) / m.totalKinds;
    if (m.coveredCells > 0) {
        double er = 0.0;
        for (const auto& [k, n] : m.coverageByKind) {
            const double p = static_cast<double>(n) / m.coveredCells;
            if (p > 0.0) er -= p * std::log(p);
        }
        m.ER = er;
    }
    return m;
}

RewardBreakdown reward_between(const Metrics& before, const Metrics& after, const RewardWeights& w) {
    RewardBreakdown r;
    r.deltaAR = after.AR - before.AR;
    r.deltaIR = after.IR - before.IR;
    r.deltaER = after.ER - before.ER;
    r.rC = w.eta1 * r.deltaAR;
    r.rD = w.eta2 * r.deltaIR + w.eta3 * r.deltaER;
    r.rExt = r.rC + r.rD;
    return r;
}

double discounted_return(std::span<const double> rewards, double gamma) {
    double g = 0.0;
    for (std::size_t i = rewards.size(); i-- > 0;) g = rewards[i] + gamma * g;
    return g;
}

TableState shuffle_headings(const TableState& state, Rng& rng) {
    std::vector<int> rows(static_cast<std::size_t>(state.grid.rows()));
    std::vector<int> cols(static_cast<std::size_t>(state.grid.cols()));
    std::iota(rows.begin(), rows.end(), 0);
    std::iota(cols.begin(), cols.end(), 0);
    shuffle(rows, rng);
    shuffle(cols, rng);
    return permute_lines(state, rows, cols);
}

void embed_record(TableState& state, std::vector<InsightRecord>& ledger, InsightRecord record) {
    const Block& b = record.block;
    for (int i = b.rowBegin; i < b.rowEnd; ++i) {
        for (int j = b.colBegin; j < b.colEnd; ++j) {
            if (state.grid.viz(i, j) != kNoInsight) throw Error(ErrorCode::conflict, "block overlaps an embedded insight");
        }
    }
    for (int i = b.rowBegin; i < b.rowEnd; ++i) {
        for (int j = b.colBegin; j < b.colEnd; ++j) state.grid.setViz(i, j, record.id);
    }
    ledger.push_back(std::move(record));
}

Environment::Environment(TableState initial, EpisodeConfig config) : initial_(std::move(initial)), config_(config) {
    if (config_.totalSteps < 1) throw Error(ErrorCode::config, "totalSteps must be positive");
    reset();
}

void Environment::reset() {
    state_ = initial_;
    if (config_.shuffleHeadings) {
        Rng rng(config_.seed);
        state_ = shuffle_headings(state_, rng);
    }
    state_.step = 0;
    state_.grid.clearViz();
    ledger_.clear();
    metrics_ = compute_metrics(state_, ledger_);
    done_ = false;
    nextInsightId_ = 0;
}

void Environment::restore(TableState state, std::vector<InsightRecord> ledger, int nextInsightId) {
    state_ = std::move(state);
    ledger_ = std::move(ledger);
    metrics_ = compute_metrics(state_, ledger_);
    nextInsightId_ = nextInsightId;
    done_ = state_.step >= config_.totalSteps;
}

Stage Environment::stage() const { return state_.step < config_.transformSteps() ? Stage::transform : Stage::select; }

ActionMask Environment::legalMask() const { return legal_actions(state_, stage()); }

StepResult Environment::step(ActionKind action) {
    if (done_) throw Error(ErrorCode::illegal_action, "episode is done");
    const ActionMask mask = legalMask();
    if (!mask[static_cast<std::size_t>(index_of(action))]) {
        std::string legal;
        for (int i = 0; i < kActionCount; ++i) {
            if (mask[static_cast<std::size_t>(i)]) legal += (legal.empty() ? "" : ",") + std::string(to_string(action_at(i)));
        }
        throw Error(ErrorCode::illegal_action,
                    "action " + std::string(to_string(action)) + " is not legal; legal: [" + legal + "]");
    }

    StepResult out;
    out.info = json{{"action", to_string(action)}, {"embedded", false}};
    const int nextStep = state_.step + 1;
    if (is_transform(action)) {
        state_ = apply_action(state_, action);
        ledger_.clear();
        metrics_ = compute_metrics(state_, ledger_);
    } else {
        state_ = move_selection(state_, action);
        const Block block = resolve_block(state_);
        if (!overlaps_mask(state_, block)) {
            std::vector<InsightRecord> found;
            try {
                found = detect_all(state_, block, config_.thresholds);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::empty_block) throw;
            }
            if (!found.empty()) {
                InsightRecord head = std::move(found.front());
                head.id = nextInsightId_++;
                head.provenance = Provenance::agent;
                out.info["embedded"] = true;
                out.info["insight"] = record_to_json(head);
                embed_record(state_, ledger_, std::move(head));
                const Metrics after = compute_metrics(state_, ledger_);
                out.reward = reward_between(metrics_, after, config_.weights);
                metrics_ = after;
            }
        }
    }
    state_.step = nextStep;

    if (state_.step >= config_.totalSteps) done_ = true;
    if (metrics_.totalCells > 0 && metrics_.coveredCells == metrics_.totalCells) done_ = true;
    if (!done_ && stage() == Stage::select) {
        const ActionMask next = legalMask();
        bool any = false;
        for (bool b : next) any = any || b;
        if (!any) done_ = true;
    }
    out.done = done_;
    return out;
}

json Environment::observation() const { return observation_json(state_, stage(), legalMask(), ledger_); }

}  // namespace tabsight
