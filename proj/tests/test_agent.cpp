#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "oracles.hpp"
#include "tabsight/agent.hpp"
#include "tabsight/config.hpp"

using namespace tabsight;

namespace {

TableState planted() { return load_table_file(std::string(TABSIGHT_DATA_DIR) + "/planted_8x8.json"); }

EncoderConfig toy_encoder() {
    EncoderConfig e;
    e.embedDim = 8;
    e.gcnHidden = 8;
    e.gcnLayers = 2;
    e.lstmHidden = 4;
    e.contentOut = 8;
    return e;
}

TrainConfig toy_train() {
    TrainConfig tc;
    tc.encoder = toy_encoder();
    tc.trunkHidden = 16;
    tc.parallelEnvs = 2;
    tc.rolloutSteps = 16;
    tc.minibatch = 16;
    tc.epochs = 2;
    tc.totalSteps = 64;
    tc.episode.totalSteps = 24;
    tc.seed = 17;
    return tc;
}

}  // namespace

TEST_SUITE("agent") {
    TEST_CASE("label embedding is normalized and deterministic") {
        const auto a = embed_text("North America", 16);
        double n = 0.0;
        for (double x : a) n += x * x;
        CHECK(n == doctest::Approx(1.0));
        CHECK(embed_text("North America", 16) == a);
        CHECK(embed_text("Europe", 16) != a);
        const auto empty = embed_text("", 16);
        CHECK(std::all_of(empty.begin(), empty.end(), [](double x) { return x == 0.0; }));
    }

    TEST_CASE("agent input shapes") {
        EpisodeConfig cfg;
        Environment env(planted(), cfg);
        const AgentInput in = make_agent_input(env, 8);
        CHECK(in.nodeFeatures.cols() == 9);
        CHECK(in.nodeFeatures.rows() == 1 + env.state().rowTree.size() + env.state().colTree.size());
        CHECK(in.cellFeatures.rows() == 64);
        CHECK(in.cellFeatures.cols() == kCellFeatures);
        CHECK(in.mask.size() == static_cast<std::size_t>(kActionCount));
        CHECK(in.stageFlag == 0.0);
    }

    TEST_CASE("policy respects the action mask") {
        PolicyNet net(toy_encoder(), 16, 5);
        EpisodeConfig cfg;
        Environment env(planted(), cfg);
        for (int stage = 0; stage < 2; ++stage) {
            const AgentInput in = make_agent_input(env, 8);
            const auto p = net.probabilities(in);
            double sum = 0.0;
            for (int i = 0; i < kActionCount; ++i) {
                if (!in.mask[static_cast<std::size_t>(i)]) CHECK(p[static_cast<std::size_t>(i)] == 0.0);
                sum += p[static_cast<std::size_t>(i)];
            }
            CHECK(sum == doctest::Approx(1.0));
            while (env.stage() == Stage::transform) env.step(ActionKind::transpose);
        }
        Rng rng(1);
        const std::vector<double> probs = {0.0, 0.0, 1.0, 0.0};
        CHECK(sample_action(probs, rng) == 2);
    }

    TEST_CASE("heading encoder is invariant to node and edge order") {
        nn::ParamSet ps;
        Rng rng(4);
        const HeadingEncoder enc(ps, "h", 9, 8, 3, rng);
        EpisodeConfig cfg;
        Environment env(planted(), cfg);
        const AgentInput in = make_agent_input(env, 8);
        const int n = in.nodeFeatures.rows();
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        shuffle(perm, rng);
        nn::Matrix moved(n, in.nodeFeatures.cols());
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < moved.cols(); ++c) moved(perm[static_cast<std::size_t>(i)], c) = in.nodeFeatures(i, c);
        }
        std::vector<nn::GraphEdge> edges;
        for (const auto& e : in.edges) edges.push_back(nn::GraphEdge{perm[static_cast<std::size_t>(e.b)], perm[static_cast<std::size_t>(e.a)], e.cls});
        std::reverse(edges.begin(), edges.end());
        nn::Tape t1(&ps), t2(&ps);
        CHECK(t1.value(enc.forward(t1, in.nodeFeatures, in.edges)) == t2.value(enc.forward(t2, moved, edges)));
    }

    TEST_CASE("advantages: discounted returns and GAE") {
        const std::vector<double> r = {1, 0, 2}, v = {0.5, 0.5, 0.5};
        const std::vector<bool> d = {false, true, false};
        std::vector<double> adv, ret;
        compute_advantages(r, v, d, 3.0, 0.9, false, 0.95, adv, ret);
        CHECK(ret[2] == doctest::Approx(2 + 0.9 * 3));
        CHECK(ret[1] == doctest::Approx(0.0));
        CHECK(ret[0] == doctest::Approx(1.0));
        CHECK(adv[0] == doctest::Approx(0.5));
        compute_advantages(r, v, d, 3.0, 0.9, true, 1.0, adv, ret);
        // lambda = 1 reproduces the Monte Carlo advantage.
        CHECK(adv[2] == doctest::Approx(2 + 0.9 * 3 - 0.5));
        CHECK(adv[0] == doctest::Approx(0.5));
        std::vector<double> a = {1, 2, 3, 4};
        normalize_advantages(a);
        CHECK(std::accumulate(a.begin(), a.end(), 0.0) == doctest::Approx(0.0));
        std::vector<double> c = {2, 2};
        normalize_advantages(c);
        CHECK(c == std::vector<double>{0, 0});
    }

    TEST_CASE("running std matches population formula") {
        RunningStd s;
        for (double x : {1.0, 2.0, 4.0, 7.0}) s.push(x);
        CHECK(s.stddev() == doctest::Approx(oracle::pop_sd({1, 2, 4, 7})));
    }

    TEST_CASE("training is bit-deterministic and checkpoints round-trip") {
        const TrainConfig tc = toy_train();
        const TrainResult a = train({planted()}, tc);
        const TrainResult b = train({planted()}, tc);
        CHECK(a.steps >= 64);
        CHECK(a.policy.params.hash() == b.policy.params.hash());
        CHECK(a.curiosity.predictors.hash() == b.curiosity.predictors.hash());
        CHECK_FALSE(a.curve.empty());

        const auto path = (std::filesystem::temp_directory_path() / "tabsight_ckpt_test.json").string();
        save_checkpoint(a, path);
        const TrainResult c = load_checkpoint(path);
        CHECK(c.policy.params == a.policy.params);
        CHECK(c.curiosity.predictors == a.curiosity.predictors);
        CHECK(c.config.totalSteps == tc.totalSteps);
        std::remove(path.c_str());

        TrainConfig eipo = tc;
        eipo.eipo = true;
        eipo.eipoPeriod = 1;
        CHECK(train({planted()}, eipo).steps >= 64);
    }

    TEST_CASE("baselines") {
        CHECK(parse_baseline("random").kind == PolicyKind::random);
        CHECK(parse_baseline("beam:3").beamWidth == 3);
        CHECK_THROWS_AS(parse_baseline("beam:x"), Error);
        CHECK_THROWS_AS(parse_baseline("oracle"), Error);
        EpisodeConfig cfg;
        cfg.totalSteps = 40;
        const TableState t = planted();
        const EpisodeTrace g1 = run_baseline(parse_baseline("greedy"), t, cfg, 3);
        const EpisodeTrace g2 = run_baseline(parse_baseline("greedy"), t, cfg, 3);
        CHECK(g1.actions == g2.actions);
        CHECK(g1.totalReward > 0.0);
        CHECK(g1.totalReward == doctest::Approx(g1.metrics.AR + g1.metrics.IR + g1.metrics.ER).epsilon(1e-12));
        const EpisodeTrace r = run_baseline(parse_baseline("random"), t, cfg, 3);
        CHECK(r.actions.size() <= 40);
    }

    TEST_CASE("policy rollouts and continuation") {
        PolicyNet net(toy_encoder(), 16, 8);
        EpisodeConfig cfg;
        cfg.totalSteps = 30;
        const EpisodeTrace a = run_policy(net, planted(), cfg, 4);
        const EpisodeTrace b = run_policy(net, planted(), cfg, 4);
        CHECK(a.actions == b.actions);
        Environment env(planted(), cfg);
        while (env.stage() == Stage::transform) env.step(ActionKind::transpose);
        const int before = env.stepCount();
        const EpisodeTrace c = continue_episode(env, nullptr, 5, 1);
        CHECK(env.stepCount() - before <= 5);
        CHECK(static_cast<int>(c.actions.size()) == env.stepCount() - before);
    }
}
