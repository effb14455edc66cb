#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "tabsight/config.hpp"
#include "tabsight/experiments.hpp"
#include "tabsight/service.hpp"

using namespace tabsight;
using nlohmann::json;

namespace {

HttpService* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

AppConfig config_from(const std::string& path) {
    AppConfig cfg = path.empty() ? AppConfig{} : load_config(path);
    apply_env_overrides(cfg);
    return cfg;
}

std::vector<TableState> load_tables(const std::vector<std::string>& paths) {
    std::vector<TableState> out;
    for (const auto& p : paths) out.push_back(load_table_file(p));
    return out;
}

json summarize(const std::vector<EpisodeTrace>& traces) {
    double reward = 0.0, ar = 0.0, ir = 0.0, er = 0.0;
    json per = json::array();
    for (const auto& t : traces) {
        reward += t.totalReward;
        ar += t.metrics.AR;
        ir += t.metrics.IR;
        er += t.metrics.ER;
        per.push_back(json{{"reward", t.totalReward}, {"metrics", metrics_to_json(t.metrics)}});
    }
    const double n = static_cast<double>(traces.size());
    return json{{"episodes", traces.size()},
                {"meanReward", reward / n},
                {"meanAR", ar / n},
                {"meanIR", ir / n},
                {"meanER", er / n},
                {"perEpisode", std::move(per)}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical-table insight engine"};
    app.require_subcommand(1);

    std::string configPath;
    app.add_option("--config", configPath, "JSON configuration document");

    std::vector<std::string> tables;
    std::string checkpoint, curvePath, policy = "greedy", sessionLog, dataDir;
    int episodes = 20, port = -1, inits = 10, evalEpisodes = 3;
    long steps = -1;
    std::uint64_t seed = 7;
    bool argmax = false, asJson = false;

    auto* trainCmd = app.add_subcommand("train", "Train an agent with PPO");
    trainCmd->add_option("--table", tables, "Table document(s)")->required();
    trainCmd->add_option("--out", checkpoint, "Checkpoint path")->required();
    trainCmd->add_option("--curve", curvePath, "Learning-curve CSV path");
    trainCmd->add_option("--steps", steps, "Override total environment steps");

    auto* evalCmd = app.add_subcommand("eval", "Evaluate a trained checkpoint");
    evalCmd->add_option("--checkpoint", checkpoint)->required();
    evalCmd->add_option("--table", tables)->required();
    evalCmd->add_option("--episodes", episodes);
    evalCmd->add_option("--seed", seed);
    evalCmd->add_flag("--argmax", argmax, "Act greedily on the policy instead of sampling");

    auto* baseCmd = app.add_subcommand("baseline", "Run a baseline policy");
    baseCmd->add_option("--policy", policy, "random | greedy | beam:k");
    baseCmd->add_option("--table", tables)->required();
    baseCmd->add_option("--episodes", episodes);
    baseCmd->add_option("--seed", seed);

    auto* serveCmd = app.add_subcommand("serve", "Run the HTTP service");
    serveCmd->add_option("--port", port);
    serveCmd->add_option("--data-dir", dataDir);
    serveCmd->add_option("--checkpoint", checkpoint);

    auto* extractCmd = app.add_subcommand("extract", "Count insight kinds over every block");
    extractCmd->add_option("--table", tables)->required();
    extractCmd->add_flag("--json", asJson);

    auto* replayCmd = app.add_subcommand("replay", "Rebuild a session from its event log");
    replayCmd->add_option("--session-log", sessionLog)->required();

    auto* sweepCmd = app.add_subcommand("sweep", "Stage-ratio x GCN-depth sweep");
    sweepCmd->add_option("--table", tables)->required();
    sweepCmd->add_option("--steps", steps, "Training steps per cell");
    sweepCmd->add_option("--episodes", evalEpisodes, "Evaluation episodes per cell");

    auto* robustCmd = app.add_subcommand("robustness", "Greedy metrics over shuffled heading orders");
    robustCmd->add_option("--table", tables)->required();
    robustCmd->add_option("--inits", inits);
    robustCmd->add_option("--seed", seed);

    CLI11_PARSE(app, argc, argv);

    try {
        AppConfig cfg = config_from(configPath);
        if (trainCmd->parsed()) {
            TrainConfig tc = cfg.train;
            if (steps >= 0) tc.totalSteps = steps;
            const TrainResult r = train(load_tables(tables), tc);
            save_checkpoint(r, checkpoint);
            if (!curvePath.empty()) write_curve_csv(r.curve, curvePath);
            std::cout << json{{"steps", r.steps}, {"checkpoint", checkpoint}}.dump() << '\n';
        } else if (evalCmd->parsed()) {
            const TrainResult r = load_checkpoint(checkpoint);
            const auto ts = load_tables(tables);
            std::vector<EpisodeTrace> traces;
            for (int e = 0; e < episodes; ++e) {
                traces.push_back(run_policy(r.policy, ts[static_cast<std::size_t>(e) % ts.size()], r.config.episode,
                                            derive_seed(seed, static_cast<std::uint64_t>(e)), argmax));
            }
            std::cout << summarize(traces).dump(2) << '\n';
        } else if (baseCmd->parsed()) {
            const BaselineSpec spec = parse_baseline(policy);
            const auto ts = load_tables(tables);
            std::vector<EpisodeTrace> traces;
            for (int e = 0; e < episodes; ++e) {
                traces.push_back(run_baseline(spec, ts[static_cast<std::size_t>(e) % ts.size()], cfg.episode,
                                              derive_seed(seed, static_cast<std::uint64_t>(e))));
            }
            std::cout << summarize(traces).dump(2) << '\n';
        } else if (serveCmd->parsed()) {
            if (port >= 0) cfg.service.port = port;
            if (!dataDir.empty()) cfg.service.dataDir = dataDir;
            if (!checkpoint.empty()) cfg.service.checkpoint = checkpoint;
            std::shared_ptr<const PolicyNet> net;
            if (!cfg.service.checkpoint.empty()) {
                net = std::make_shared<const PolicyNet>(load_checkpoint(cfg.service.checkpoint).policy);
            }
            SessionStore store(cfg.service, cfg.episode, net);
            HttpService server(store);
            const int bound = server.bind(cfg.service.host, cfg.service.port);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on " << cfg.service.host << ':' << bound << '\n';
            server.listen();
        } else if (extractCmd->parsed()) {
            for (const auto& path : tables) {
                const ExtractReport r = extract_counts(load_table_file(path), cfg.episode.thresholds);
                if (asJson) {
                    json j = extract_to_json(r);
                    j["table"] = path;
                    std::cout << j.dump() << '\n';
                } else {
                    std::cout << "# " << path << '\n' << format_extract(r);
                }
            }
        } else if (replayCmd->parsed()) {
            std::cout << replay_session_log(sessionLog, cfg.episode.thresholds).dump() << '\n';
        } else if (sweepCmd->parsed()) {
            SweepConfig sc;
            sc.train = cfg.train;
            if (steps >= 0) sc.train.totalSteps = steps;
            sc.evalEpisodes = evalEpisodes;
            std::cout << format_sweep_table(run_sweep(load_tables(tables), sc));
        } else if (robustCmd->parsed()) {
            const auto ts = load_tables(tables);
            json out = json::array();
            for (std::size_t i = 0; i < ts.size(); ++i) {
                json j = robustness_to_json(run_robustness(ts[i], cfg.episode, inits, seed));
                j["table"] = tables[i];
                out.push_back(std::move(j));
            }
            std::cout << out.dump(2) << '\n';
        }
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.code()) << "): " << e.what();
        if (!e.path().empty()) std::cerr << " at " << e.path();
        std::cerr << '\n';
        return 2;
    }
    return 0;
}
