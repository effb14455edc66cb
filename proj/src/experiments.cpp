#include "tabsight/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace tabsight {

using nlohmann::json;

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(xs.size()));
}

std::string fixed(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::vector<SweepCell> run_sweep(const std::vector<TableState>& tables, const SweepConfig& cfg) {
    if (cfg.evalEpisodes < 1) throw Error(ErrorCode::config, "evalEpisodes must be positive");
    std::vector<SweepCell> out;
    for (int L : cfg.layers) {
        for (double sr : cfg.stageRatios) {
            TrainConfig tc = cfg.train;
            tc.encoder.gcnLayers = L;
            tc.episode.stageRatio = sr;
            const TrainResult trained = train(tables, tc);
            SweepCell cell;
            cell.stageRatio = sr;
            cell.layers = L;
            cell.transformSteps = tc.episode.transformSteps();
            for (int e = 0; e < cfg.evalEpisodes; ++e) {
                const TableState& t = tables[static_cast<std::size_t>(e) % tables.size()];
                const EpisodeTrace tr = run_policy(trained.policy, t, tc.episode, derive_seed(tc.seed, 5000 + static_cast<std::uint64_t>(e)));
                cell.AR += tr.metrics.AR;
                cell.IR += tr.metrics.IR;
                cell.ER += tr.metrics.ER;
                cell.reward += tr.totalReward;
            }
            const double n = cfg.evalEpisodes;
            cell.AR /= n;
            cell.IR /= n;
            cell.ER /= n;
            cell.reward /= n;
            out.push_back(cell);
        }
    }
    return out;
}

std::string format_sweep_table(const std::vector<SweepCell>& cells) {
    std::vector<double> srs;
    std::vector<int> layers;
    for (const auto& c : cells) {
        if (std::find(srs.begin(), srs.end(), c.stageRatio) == srs.end()) srs.push_back(c.stageRatio);
        if (std::find(layers.begin(), layers.end(), c.layers) == layers.end()) layers.push_back(c.layers);
    }
    std::ostringstream os;
    os << "| L |";
    for (double sr : srs) os << " SR=" << fixed(sr, 2) << " IR | AR | ER |";
    os << "\n|---|";
    for (std::size_t i = 0; i < srs.size(); ++i) os << "---|---|---|";
    os << '\n';
    for (int L : layers) {
        os << "| " << L << " |";
        for (double sr : srs) {
            for (const auto& c : cells) {
                if (c.layers == L && c.stageRatio == sr) os << ' ' << fixed(c.IR) << " | " << fixed(c.AR) << " | " << fixed(c.ER) << " |";
            }
        }
        os << '\n';
    }
    os << "\nstage-1 length:";
    for (double sr : srs) {
        for (const auto& c : cells) {
            if (c.stageRatio == sr && c.layers == layers.front()) os << " SR=" << fixed(sr, 2) << ':' << c.transformSteps;
        }
    }
    os << '\n';
    return os.str();
}

RobustnessReport run_robustness(const TableState& table, const EpisodeConfig& cfg, int initializations, std::uint64_t seed) {
    if (initializations < 1) throw Error(ErrorCode::config, "initializations must be positive");
    RobustnessReport r;
    std::vector<double> ar, ir, er;
    for (int i = 0; i < initializations; ++i) {
        EpisodeConfig ec = cfg;
        ec.shuffleHeadings = true;
        ec.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        const EpisodeTrace tr = run_baseline(BaselineSpec{PolicyKind::greedy}, table, ec, derive_seed(seed, 100 + static_cast<std::uint64_t>(i)));
        r.perInit.push_back(tr.metrics);
        ar.push_back(tr.metrics.AR);
        ir.push_back(tr.metrics.IR);
        er.push_back(tr.metrics.ER);
    }
    mean_std(ar, r.meanAR, r.stdAR);
    mean_std(ir, r.meanIR, r.stdIR);
    mean_std(er, r.meanER, r.stdER);
    return r;
}

json robustness_to_json(const RobustnessReport& r) {
    json per = json::array();
    for (const auto& m : r.perInit) per.push_back(metrics_to_json(m));
    return json{{"AR", {{"mean", r.meanAR}, {"std", r.stdAR}}},
                {"IR", {{"mean", r.meanIR}, {"std", r.stdIR}}},
                {"ER", {{"mean", r.meanER}, {"std", r.stdER}}},
                {"initializations", std::move(per)}};
}

ExtractReport extract_counts(const TableState& table, const DetectorThresholds& th) {
    ExtractReport r;
    for (int k = 0; k < kSingleKindCount; ++k) {
        r.firing[static_cast<InsightKind>(k)] = 0;
        r.heads[static_cast<InsightKind>(k)] = 0;
    }
    for (int re = 1; re < table.rowTree.size(); ++re) {
        for (int ce = 1; ce < table.colTree.size(); ++ce) {
            const Block b = block_for(table, re, ce);
            ++r.blocks;
            std::vector<InsightRecord> found;
            try {
                found = detect_all(table, b, th);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::empty_block) throw;
            }
            if (found.empty()) continue;
            ++r.heads[found.front().kind];
            for (const auto& f : found) ++r.firing[f.kind];
        }
    }
    return r;
}

json extract_to_json(const ExtractReport& r) {
    json firing = json::object(), heads = json::object();
    for (const auto& [k, n] : r.firing) firing[std::string(to_string(k))] = n;
    for (const auto& [k, n] : r.heads) heads[std::string(to_string(k))] = n;
    return json{{"blocks", r.blocks}, {"firing", std::move(firing)}, {"heads", std::move(heads)}};
}

std::string format_extract(const ExtractReport& r) {
    std::ostringstream os;
    os << "blocks " << r.blocks << '\n';
    os << "kind                 firing  head\n";
    for (const auto& [k, n] : r.firing) {
        char line[96];
        std::snprintf(line, sizeof line, "%-20s %6d %5d\n", std::string(to_string(k)).c_str(), n, r.heads.at(k));
        os << line;
    }
    return os.str();
}

}  // namespace tabsight
