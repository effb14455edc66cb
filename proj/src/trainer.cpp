#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "tabsight/agent.hpp"
#include "tabsight/parallel.hpp"

namespace tabsight {

namespace {

struct Step {
    std::vector<double> probs;
    double value = 0.0;
};

Step evaluate(const PolicyNet& net, const AgentInput& in) {
    nn::Tape t(&net.params);
    const PolicyOutput out = net.forward(t, in);
    const nn::Matrix& lp = t.value(out.logp);
    Step s;
    s.probs.resize(lp.size());
    for (std::size_t i = 0; i < lp.size(); ++i) s.probs[i] = in.mask[i] ? std::exp(lp[i]) : 0.0;
    s.value = t.value(out.value)[0];
    return s;
}

struct EnvSlot {
    Environment env;
    Rng rng;
    double episodeReturn = 0.0;
};

struct Segment {
    std::vector<Transition> steps;
    std::vector<IntrinsicReward> raw;
    std::vector<bool> selectStage;
    double bootstrap = 0.0;
    std::vector<double> finishedReturns;
    std::vector<Metrics> finishedMetrics;
};

void collect(const PolicyNet& net, const Curiosity* curiosity, EnvSlot& slot, int steps, int embedDim, Segment& seg) {
    seg = Segment{};
    AgentInput in = make_agent_input(slot.env, embedDim);
    for (int s = 0; s < steps; ++s) {
        const Step st = evaluate(net, in);
        const int a = sample_action(st.probs, slot.rng);
        const bool select = slot.env.stage() == Stage::select;
        const StepResult r = slot.env.step(action_at(a));
        Transition tr;
        tr.action = a;
        tr.logp = std::log(st.probs[static_cast<std::size_t>(a)]);
        tr.value = st.value;
        tr.rExt = r.reward.rExt;
        tr.done = r.done;
        slot.episodeReturn += r.reward.rExt;
        tr.input = std::move(in);
        AgentInput next = make_agent_input(slot.env, embedDim);
        seg.raw.push_back(curiosity ? curiosity->raw(next) : IntrinsicReward{});
        seg.selectStage.push_back(select);
        if (r.done) {
            seg.finishedReturns.push_back(slot.episodeReturn);
            seg.finishedMetrics.push_back(slot.env.metrics());
            slot.episodeReturn = 0.0;
            slot.env.reset();
            in = make_agent_input(slot.env, embedDim);
        } else {
            in = next;
        }
        tr.next = std::move(next);
        seg.steps.push_back(std::move(tr));
    }
    seg.bootstrap = seg.steps.back().done ? 0.0 : evaluate(net, in).value;
}

}  // namespace

TrainResult train(const std::vector<TableState>& tables, const TrainConfig& cfg) {
    validate(cfg);
    if (tables.empty()) throw Error(ErrorCode::config, "training needs at least one table");

    TrainResult res;
    res.config = cfg;
    res.policy = PolicyNet(cfg.encoder, cfg.trunkHidden, derive_seed(cfg.seed, 1));
    res.curiosity = Curiosity(cfg.encoder, cfg.rndOutDim, cfg.rndLearningRate, derive_seed(cfg.seed, 2));
    res.rng = Rng(derive_seed(cfg.seed, 3));
    if (cfg.totalSteps == 0) return res;

    nn::Adam adam(res.policy.params, cfg.learningRate);
    PolicyNet extrinsic;
    nn::Adam extrinsicAdam;
    if (cfg.eipo) {
        extrinsic = res.policy;
        extrinsicAdam = nn::Adam(extrinsic.params, cfg.learningRate);
    }

    std::vector<EnvSlot> slots;
    for (int i = 0; i < cfg.parallelEnvs; ++i) {
        EpisodeConfig ec = cfg.episode;
        ec.seed = derive_seed(cfg.episode.seed, static_cast<std::uint64_t>(100 + i));
        slots.push_back(EnvSlot{Environment(tables[static_cast<std::size_t>(i) % tables.size()], ec),
                                Rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(1000 + i))), 0.0});
    }

    const int embedDim = cfg.encoder.embedDim;
    double lastReturn = 0.0, lastAR = 0.0, lastIR = 0.0, lastER = 0.0;
    double mixedScore = -std::numeric_limits<double>::infinity();
    double extrinsicScore = -std::numeric_limits<double>::infinity();
    long iteration = 0;
    while (res.steps < cfg.totalSteps) {
        const bool useExtrinsic = cfg.eipo && iteration % 2 == 1;
        PolicyNet& net = useExtrinsic ? extrinsic : res.policy;
        nn::Adam& opt = useExtrinsic ? extrinsicAdam : adam;
        const Curiosity* cur = cfg.useRnd ? &res.curiosity : nullptr;

        std::vector<Segment> segs(slots.size());
        parallel_for(static_cast<int>(slots.size()), cfg.workers, [&](int i) {
            collect(net, cur, slots[static_cast<std::size_t>(i)], cfg.rolloutSteps, embedDim, segs[static_cast<std::size_t>(i)]);
        });

        std::vector<Transition> rollout;
        std::vector<double> advantages, returns;
        double intrinsicSum = 0.0;
        std::vector<double> finished;
        double arSum = 0.0, irSum = 0.0, erSum = 0.0;
        for (Segment& seg : segs) {
            std::vector<double> rewards, values;
            std::vector<bool> dones;
            for (std::size_t s = 0; s < seg.steps.size(); ++s) {
                Transition& tr = seg.steps[s];
                if (cfg.useRnd) {
                    tr.rInt = res.curiosity.normalizedTotal(seg.raw[s]);
                    if (cfg.intrinsicInTransformStageOnly && seg.selectStage[s]) tr.rInt = 0.0;
                    intrinsicSum += seg.raw[s].heading + seg.raw[s].content;
                }
                const double lambda = useExtrinsic ? 0.0 : cfg.intrinsicWeight;
                rewards.push_back(tr.rExt + lambda * tr.rInt);
                values.push_back(tr.value);
                dones.push_back(tr.done);
            }
            std::vector<double> adv, ret;
            compute_advantages(rewards, values, dones, seg.bootstrap, cfg.gamma, cfg.useGae, cfg.gaeLambda, adv, ret);
            advantages.insert(advantages.end(), adv.begin(), adv.end());
            returns.insert(returns.end(), ret.begin(), ret.end());
            for (std::size_t k = 0; k < seg.finishedReturns.size(); ++k) {
                finished.push_back(seg.finishedReturns[k]);
                arSum += seg.finishedMetrics[k].AR;
                irSum += seg.finishedMetrics[k].IR;
                erSum += seg.finishedMetrics[k].ER;
            }
            for (Transition& tr : seg.steps) rollout.push_back(std::move(tr));
        }
        normalize_advantages(advantages);
        ppo_update(net, opt, rollout, advantages, returns, cfg, res.rng);

        if (cfg.useRnd) {
            for (std::size_t start = 0; start < rollout.size(); start += static_cast<std::size_t>(cfg.minibatch)) {
                std::vector<const AgentInput*> batch;
                for (std::size_t k = start; k < std::min(rollout.size(), start + static_cast<std::size_t>(cfg.minibatch)); ++k) {
                    batch.push_back(&rollout[k].next);
                }
                res.curiosity.update(batch);
            }
        }

        res.steps += static_cast<long>(rollout.size());
        if (!finished.empty()) {
            double s = 0.0;
            for (double f : finished) s += f;
            const double n = static_cast<double>(finished.size());
            lastReturn = s / n;
            lastAR = arSum / n;
            lastIR = irSum / n;
            lastER = erSum / n;
            (useExtrinsic ? extrinsicScore : mixedScore) = lastReturn;
        }
        if (cfg.eipo && (iteration + 1) % (2 * cfg.eipoPeriod) == 0 && extrinsicScore > mixedScore) {
            // Extrinsic optimality check: fall back to the extrinsic policy.
            res.policy.params = extrinsic.params;
            adam = extrinsicAdam;
            mixedScore = extrinsicScore;
        }
        ++iteration;
        res.curve.push_back(CurvePoint{iteration, res.steps, lastReturn, lastAR, lastIR, lastER,
                                       rollout.empty() ? 0.0 : intrinsicSum / static_cast<double>(rollout.size())});
    }
    return res;
}

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    out << "iteration,steps,rext_mean,ar,ir,er,intrinsic_mean\n";
    out << std::setprecision(10);
    for (const auto& p : curve) {
        out << p.iteration << ',' << p.steps << ',' << p.rExtMean << ',' << p.AR << ',' << p.IR << ',' << p.ER << ','
            << p.intrinsicMean << '\n';
    }
}

}  // namespace tabsight
