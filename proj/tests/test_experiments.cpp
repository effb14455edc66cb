#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

#include "tabsight/config.hpp"
#include "tabsight/experiments.hpp"

using namespace tabsight;

namespace {

TableState planted() { return load_table_file(std::string(TABSIGHT_DATA_DIR) + "/planted_8x8.json"); }

// Runs a shell command, returns (exit status, stdout).
std::pair<int, std::string> run(const std::string& cmd) {
    std::string out;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
    const int status = pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

}  // namespace

TEST_SUITE("experiments") {
    TEST_CASE("sweep emits one row per depth and the stage-1 lengths") {
        SweepConfig sc;
        sc.stageRatios = {0.01, 0.16};
        sc.layers = {1, 2};
        sc.evalEpisodes = 1;
        sc.train.totalSteps = 16;
        sc.train.parallelEnvs = 1;
        sc.train.rolloutSteps = 16;
        sc.train.minibatch = 16;
        sc.train.epochs = 1;
        sc.train.encoder.embedDim = 4;
        sc.train.encoder.gcnHidden = 4;
        sc.train.encoder.lstmHidden = 2;
        sc.train.encoder.contentOut = 4;
        sc.train.trunkHidden = 8;
        sc.train.episode.totalSteps = 50;
        const auto cells = run_sweep({planted()}, sc);
        REQUIRE(cells.size() == 4);
        CHECK(cells[0].transformSteps == 1);
        CHECK(cells[1].transformSteps == 8);
        const std::string table = format_sweep_table(cells);
        CHECK(table.find("| L | SR=0.01 IR | AR | ER | SR=0.16 IR | AR | ER |") == 0);
        CHECK(table.find("\n| 1 |") != std::string::npos);
        CHECK(table.find("\n| 2 |") != std::string::npos);
        CHECK(table.find("stage-1 length: SR=0.01:1 SR=0.16:8") != std::string::npos);
    }

    TEST_CASE("robustness reports finite spread over shuffled headings") {
        EpisodeConfig ec;
        ec.totalSteps = 40;
        const RobustnessReport r = run_robustness(planted(), ec, 3, 5);
        CHECK(r.perInit.size() == 3);
        CHECK(std::isfinite(r.stdAR));
        for (const auto& m : r.perInit) CHECK(m.AR > 0.0);
        const auto j = robustness_to_json(r);
        CHECK(j["AR"]["mean"].get<double>() == doctest::Approx(r.meanAR));
        CHECK_THROWS_AS(run_robustness(planted(), ec, 0, 5), Error);
    }

    TEST_CASE("extract counts every entry pair") {
        const TableState t = planted();
        const ExtractReport r = extract_counts(t, {});
        CHECK(r.blocks == (t.rowTree.size() - 1) * (t.colTree.size() - 1));
        int heads = 0;
        for (const auto& [k, n] : r.heads) heads += n;
        CHECK(heads <= r.blocks);
        CHECK(format_extract(r) == format_extract(extract_counts(t, {})));
        CHECK(extract_to_json(r)["firing"].size() == 12);
    }

    TEST_CASE("command-line tool") {
        const std::string cli = TABSIGHT_CLI;
        const std::string table = std::string(TABSIGHT_DATA_DIR) + "/console_sales.json";
        const auto a = run(cli + " extract --json --table " + table);
        const auto b = run(cli + " extract --json --table " + table);
        CHECK(a.first == 0);
        CHECK(a.second == b.second);
        CHECK(nlohmann::json::parse(a.second)["blocks"].get<int>() > 0);

        const auto base = run(cli + " baseline --policy greedy --episodes 2 --table " + std::string(TABSIGHT_DATA_DIR) + "/planted_8x8.json");
        CHECK(base.first == 0);
        CHECK(nlohmann::json::parse(base.second)["episodes"] == 2);

        const auto bad = run(cli + " extract --table /nonexistent.json 2>/dev/null");
        CHECK(bad.first == 2);
        const auto badPolicy = run(cli + " baseline --policy oracle --table " + table + " 2>/dev/null");
        CHECK(badPolicy.first == 2);
    }
}
