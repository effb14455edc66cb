#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "tabsight/config.hpp"
#include "tabsight/env.hpp"

using namespace tabsight;

namespace {

TableState two_by_four() {
    const LabelTree rows{"", {{"A", {{"a1", {}}, {"a2", {}}}}}};
    const LabelTree cols{"", {{"X", {{"x1", {}}, {"x2", {}}}}, {"Y", {{"y1", {}}, {"y2", {}}}}}};
    return make_table(rows, cols, {{1, 2, 3, 4}, {5, 6, 7, 8}});
}

InsightRecord record_on(const TableState& s, int rowEntry, int colEntry, InsightKind kind, int id) {
    InsightRecord r;
    r.id = id;
    r.kind = kind;
    r.block = block_for(s, rowEntry, colEntry);
    return r;
}

TableState planted() { return load_table_file(std::string(TABSIGHT_DATA_DIR) + "/planted_8x8.json"); }

}  // namespace

TEST_SUITE("env") {
    TEST_CASE("metrics: coverage, diversity and evenness") {
        TableState s = two_by_four();
        std::vector<InsightRecord> ledger;
        const int a1 = *s.rowTree.find({"A", "a1"});
        const int a2 = *s.rowTree.find({"A", "a2"});
        embed_record(s, ledger, record_on(s, a1, 1, InsightKind::dominance, 0));
        embed_record(s, ledger, record_on(s, a2, 4, InsightKind::trend, 1));
        const Metrics m = compute_metrics(s, ledger);
        CHECK(m.coveredCells == 4);
        CHECK(m.totalCells == 8);
        CHECK(m.AR == 0.5);
        CHECK(m.IR == 2.0 / 12.0);
        CHECK(std::fabs(m.ER - std::log(2.0)) < 1e-12);
        CHECK_THROWS_AS(embed_record(s, ledger, record_on(s, a1, 1, InsightKind::trend, 2)), Error);

        // Multi-block records do not count.
        InsightRecord multi = record_on(s, a1, 4, InsightKind::multi_identical, 3);
        ledger.push_back(multi);
        CHECK(compute_metrics(s, ledger).AR == 0.5);
    }

    TEST_CASE("reward is the weighted metric difference") {
        Metrics a, b;
        b.AR = 0.25;
        b.IR = 1.0 / 12;
        b.ER = 0.5;
        const RewardWeights w{2.0, 3.0, 0.5, 0.99};
        const RewardBreakdown r = reward_between(a, b, w);
        CHECK(r.rC == doctest::Approx(0.5));
        CHECK(r.rD == doctest::Approx(3.0 / 12 + 0.25));
        CHECK(r.rExt == doctest::Approx(r.rC + r.rD));
        const std::vector<double> rs = {1, 0, 2};
        CHECK(discounted_return(rs, 0.5) == doctest::Approx(1 + 0.25 * 2));
    }

    TEST_CASE("stages, legality and termination") {
        EpisodeConfig cfg;
        cfg.totalSteps = 50;
        cfg.stageRatio = 0.1;
        CHECK(cfg.transformSteps() == 5);
        cfg.stageRatio = 0.0;
        CHECK(cfg.transformSteps() == 1);
        cfg.stageRatio = 0.1;
        Environment env(planted(), cfg);
        CHECK(env.stage() == Stage::transform);
        CHECK_THROWS_AS(env.step(ActionKind::row_down), Error);
        for (int i = 0; i < 5; ++i) env.step(ActionKind::transpose);
        CHECK(env.stage() == Stage::select);
        CHECK_THROWS_AS(env.step(ActionKind::transpose), Error);
        int steps = 5;
        Rng rng(3);
        while (!env.done()) {
            const ActionMask m = env.legalMask();
            std::vector<int> legal;
            for (int i = 0; i < kActionCount; ++i) {
                if (m[static_cast<std::size_t>(i)]) legal.push_back(i);
            }
            env.step(action_at(legal[uniform_index(rng, legal.size())]));
            ++steps;
        }
        CHECK(steps <= 50);
        CHECK_THROWS_AS(env.step(ActionKind::row_down), Error);
        env.reset();
        CHECK(env.stepCount() == 0);
        CHECK(env.ledger().empty());
        CHECK_FALSE(env.done());
    }

    TEST_CASE("select steps embed the head insight of a fresh block") {
        EpisodeConfig cfg;
        cfg.totalSteps = 20;
        cfg.stageRatio = 0.05;
        Environment env(planted(), cfg);
        env.step(ActionKind::aggregate);
        REQUIRE(env.stage() == Stage::select);
        double total = 0.0;
        for (ActionKind a : {ActionKind::row_right, ActionKind::row_down, ActionKind::col_right, ActionKind::row_down}) {
            if (!env.legalMask()[static_cast<std::size_t>(index_of(a))]) continue;
            const StepResult r = env.step(a);
            total += r.reward.rExt;
            if (r.info["embedded"].get<bool>()) CHECK(r.reward.rExt != 0.0);
        }
        const Metrics& m = env.metrics();
        CHECK(total == doctest::Approx(m.AR + m.IR + m.ER).epsilon(1e-12));
    }

    TEST_CASE("restore continues from a given ledger") {
        EpisodeConfig cfg;
        cfg.totalSteps = 30;
        TableState s = two_by_four();
        std::vector<InsightRecord> ledger;
        embed_record(s, ledger, record_on(s, *s.rowTree.find({"A", "a1"}), 1, InsightKind::dominance, 4));
        s.step = 10;
        Environment env(two_by_four(), cfg);
        env.restore(s, ledger, 5);
        CHECK(env.stepCount() == 10);
        CHECK(env.metrics().AR == 0.25);
        CHECK(env.nextInsightId() == 5);
        CHECK(env.stage() == Stage::select);
    }

    TEST_CASE("shuffled headings keep every labeled cell and are seed-deterministic") {
        const TableState s = planted();
        Rng a(9), b(9);
        const TableState x = shuffle_headings(s, a), y = shuffle_headings(s, b);
        CHECK(x == y);
        CHECK(oracle::labeled_tuples(x) == oracle::labeled_tuples(s));
        CHECK(oracle::cell_ids(x) == oracle::cell_ids(s));
    }

    TEST_CASE("observation carries graph, grid, stage and mask") {
        EpisodeConfig cfg;
        Environment env(two_by_four(), cfg);
        const nlohmann::json o = env.observation();
        CHECK(o["version"] == kObservationVersion);
        CHECK(o["stage"] == "transform");
        CHECK(o["grid"]["rows"] == 2);
        CHECK(o["grid"]["cellIds"][1][3] == 7);
        CHECK(o["legalActions"].size() == 6);
        const HeadingGraph g = heading_graph(env.state());
        CHECK(g.nodes.size() == 1 + 4 + 7);
        int roots = 0;
        for (const auto& e : g.edges) roots += e.cls == EdgeClass::root_link;
        CHECK(roots == 2);
        CHECK(g.edges.size() == 2 + 3 + 6);
        int selected = 0;
        for (const auto& n : g.nodes) selected += n.selection != -1;
        CHECK(selected == 2);
    }

    TEST_CASE("configuration documents") {
        const AppConfig c = parse_config(nlohmann::json::parse(
            R"({"thresholds": {"dominanceShare": 0.6}, "episode": {"totalSteps": 100, "stageRatio": 0.08},
                "train": {"intrinsicWeight": 0.02}, "service": {"port": 9000}})"));
        CHECK(c.episode.thresholds.dominanceShare == 0.6);
        CHECK(c.episode.totalSteps == 100);
        CHECK(c.train.episode.totalSteps == 100);
        CHECK(c.train.intrinsicWeight == 0.02);
        CHECK(c.service.port == 9000);
        CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"train": {"learningRate": -1}})")), Error);
        const AppConfig back = parse_config(config_to_json(c));
        CHECK(config_to_json(back) == config_to_json(c));
    }
}
