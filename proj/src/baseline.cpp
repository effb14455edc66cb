#include <algorithm>
#include <cmath>

#include "tabsight/agent.hpp"

namespace tabsight {

BaselineSpec parse_baseline(const std::string& text) {
    BaselineSpec spec;
    if (text == "random") {
        spec.kind = PolicyKind::random;
    } else if (text == "greedy") {
        spec.kind = PolicyKind::greedy;
    } else if (text.rfind("beam:", 0) == 0) {
        spec.kind = PolicyKind::beam;
        try {
            spec.beamWidth = std::stoi(text.substr(5));
        } catch (const std::exception&) {
            throw Error(ErrorCode::config, "beam width must be an integer: " + text);
        }
        if (spec.beamWidth < 1) throw Error(ErrorCode::config, "beam width must be positive");
    } else {
        throw Error(ErrorCode::config, "unknown baseline policy: " + text);
    }
    return spec;
}

namespace {

std::vector<ActionKind> legal_list(const Environment& env) {
    std::vector<ActionKind> out;
    const ActionMask mask = env.legalMask();
    for (int i = 0; i < kActionCount; ++i) {
        if (mask[static_cast<std::size_t>(i)]) out.push_back(action_at(i));
    }
    return out;
}

ActionKind random_action(const Environment& env, Rng& rng) {
    const auto legal = legal_list(env);
    return legal[static_cast<std::size_t>(uniform_index(rng, legal.size()))];
}

struct Beam {
    Environment env;
    double total = 0.0;
    ActionKind first = ActionKind::transpose;
};

}  // namespace

int insight_blocks(const TableState& s, const DetectorThresholds& th) {
    int n = 0;
    for (int re = 1; re < s.rowTree.size(); ++re) {
        for (int ce = 1; ce < s.colTree.size(); ++ce) {
            try {
                n += !detect_all(s, block_for(s, re, ce), th).empty();
            } catch (const Error& e) {
                if (e.code() != ErrorCode::empty_block) throw;
            }
        }
    }
    return n;
}

// Transforms earn nothing immediately, so greedy ranks them by the blocks with a firing insight.
ActionKind greedy_action(const Environment& env, Rng& rng) {
    auto legal = legal_list(env);
    shuffle(legal, rng);
    ActionKind best = legal.front();
    double bestReward = -std::numeric_limits<double>::infinity();
    const bool transforming = env.stage() == Stage::transform;
    for (ActionKind a : legal) {
        Environment trial = env;
        const double stepReward = trial.step(a).reward.rExt;
        const double r = transforming ? insight_blocks(trial.state(), env.config().thresholds) : stepReward;
        if (r > bestReward) {
            bestReward = r;
            best = a;
        }
    }
    return best;
}

ActionKind beam_action(const Environment& env, int width, int depth, Rng& rng) {
    std::vector<Beam> beams{Beam{env, 0.0, ActionKind::transpose}};
    for (int d = 0; d < depth; ++d) {
        std::vector<Beam> next;
        for (const Beam& b : beams) {
            if (b.env.done()) {
                next.push_back(b);
                continue;
            }
            auto legal = legal_list(b.env);
            shuffle(legal, rng);
            for (ActionKind a : legal) {
                Beam c{b.env, b.total, d == 0 ? a : b.first};
                c.total += c.env.step(a).reward.rExt;
                next.push_back(std::move(c));
            }
        }
        std::stable_sort(next.begin(), next.end(), [](const Beam& x, const Beam& y) { return x.total > y.total; });
        if (static_cast<int>(next.size()) > width) next.erase(next.begin() + width, next.end());
        beams = std::move(next);
    }
    return beams.front().first;
}

namespace {

void record(EpisodeTrace& trace, ActionKind a, const StepResult& r) {
    trace.actions.push_back(a);
    trace.rewards.push_back(r.reward.rExt);
    trace.totalReward += r.reward.rExt;
}

}  // namespace

EpisodeTrace run_baseline(const BaselineSpec& spec, const TableState& table, const EpisodeConfig& cfg, std::uint64_t seed) {
    Environment env(table, cfg);
    Rng rng(seed);
    EpisodeTrace trace;
    while (!env.done()) {
        ActionKind a = ActionKind::transpose;
        switch (spec.kind) {
            case PolicyKind::random: a = random_action(env, rng); break;
            case PolicyKind::greedy: a = greedy_action(env, rng); break;
            case PolicyKind::beam: a = beam_action(env, spec.beamWidth, spec.beamDepth, rng); break;
            case PolicyKind::agent: throw Error(ErrorCode::config, "agent policy needs a checkpoint");
        }
        record(trace, a, env.step(a));
    }
    trace.metrics = env.metrics();
    trace.ledger = env.ledger();
    return trace;
}

EpisodeTrace continue_episode(Environment& env, const PolicyNet* net, int budget, std::uint64_t seed) {
    Rng rng(seed);
    EpisodeTrace trace;
    for (int i = 0; i < budget && !env.done(); ++i) {
        ActionKind a;
        if (net) {
            const auto probs = net->probabilities(make_agent_input(env, net->encoder.embedDim));
            a = action_at(sample_action(probs, rng));
        } else {
            a = greedy_action(env, rng);
        }
        record(trace, a, env.step(a));
    }
    trace.metrics = env.metrics();
    trace.ledger = env.ledger();
    return trace;
}

EpisodeTrace run_policy(const PolicyNet& net, const TableState& table, const EpisodeConfig& cfg, std::uint64_t seed, bool argmax) {
    Environment env(table, cfg);
    Rng rng(seed);
    EpisodeTrace trace;
    while (!env.done()) {
        const auto probs = net.probabilities(make_agent_input(env, net.encoder.embedDim));
        const int a = argmax ? static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin())
                             : sample_action(probs, rng);
        record(trace, action_at(a), env.step(action_at(a)));
    }
    trace.metrics = env.metrics();
    trace.ledger = env.ledger();
    return trace;
}

}  // namespace tabsight
