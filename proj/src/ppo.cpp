#include <cmath>
#include <numeric>
#include <sstream>

#include "tabsight/agent.hpp"
#include "tabsight/parallel.hpp"

namespace tabsight {

using nlohmann::json;
using nn::Tape;
using nn::Var;

void to_json(json& j, const TrainConfig& c) {
    j = json{{"learningRate", c.learningRate},
             {"parallelEnvs", c.parallelEnvs},
             {"rolloutSteps", c.rolloutSteps},
             {"minibatch", c.minibatch},
             {"epochs", c.epochs},
             {"clip", c.clip},
             {"valueCoef", c.valueCoef},
             {"entropyCoef", c.entropyCoef},
             {"maxGradNorm", c.maxGradNorm},
             {"totalSteps", c.totalSteps},
             {"intrinsicWeight", c.intrinsicWeight},
             {"useRnd", c.useRnd},
             {"intrinsicInTransformStageOnly", c.intrinsicInTransformStageOnly},
             {"rndLearningRate", c.rndLearningRate},
             {"rndOutDim", c.rndOutDim},
             {"gamma", c.gamma},
             {"useGae", c.useGae},
             {"gaeLambda", c.gaeLambda},
             {"eipo", c.eipo},
             {"eipoPeriod", c.eipoPeriod},
             {"trunkHidden", c.trunkHidden},
             {"workers", c.workers},
             {"seed", c.seed},
             {"encoder", c.encoder},
             {"episode", c.episode}};
}

void from_json(const json& j, TrainConfig& c) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("learningRate", c.learningRate);
    get("parallelEnvs", c.parallelEnvs);
    get("rolloutSteps", c.rolloutSteps);
    get("minibatch", c.minibatch);
    get("epochs", c.epochs);
    get("clip", c.clip);
    get("valueCoef", c.valueCoef);
    get("entropyCoef", c.entropyCoef);
    get("maxGradNorm", c.maxGradNorm);
    get("totalSteps", c.totalSteps);
    get("intrinsicWeight", c.intrinsicWeight);
    get("useRnd", c.useRnd);
    get("intrinsicInTransformStageOnly", c.intrinsicInTransformStageOnly);
    get("rndLearningRate", c.rndLearningRate);
    get("rndOutDim", c.rndOutDim);
    get("gamma", c.gamma);
    get("useGae", c.useGae);
    get("gaeLambda", c.gaeLambda);
    get("eipo", c.eipo);
    get("eipoPeriod", c.eipoPeriod);
    get("trunkHidden", c.trunkHidden);
    get("workers", c.workers);
    get("seed", c.seed);
    get("encoder", c.encoder);
    get("episode", c.episode);
    validate(c);
}

void validate(const TrainConfig& c) {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::config, what); };
    if (!(c.learningRate > 0.0)) fail("learningRate must be positive");
    if (c.parallelEnvs < 1) fail("parallelEnvs must be positive");
    if (c.rolloutSteps < 1) fail("rolloutSteps must be positive");
    if (c.minibatch < 1) fail("minibatch must be positive");
    if (c.epochs < 1) fail("epochs must be positive");
    if (!(c.clip > 0.0)) fail("clip must be positive");
    if (c.valueCoef < 0.0 || c.entropyCoef < 0.0) fail("loss coefficients must be non-negative");
    if (!(c.maxGradNorm > 0.0)) fail("maxGradNorm must be positive");
    if (c.totalSteps < 0) fail("totalSteps must be non-negative");
    if (c.intrinsicWeight < 0.0) fail("intrinsicWeight must be non-negative");
    if (!(c.rndLearningRate > 0.0) || c.rndOutDim < 1) fail("curiosity settings must be positive");
    if (c.gamma < 0.0 || c.gamma > 1.0) fail("gamma must lie in [0, 1]");
    if (c.gaeLambda < 0.0 || c.gaeLambda > 1.0) fail("gaeLambda must lie in [0, 1]");
    if (c.eipoPeriod < 1) fail("eipoPeriod must be positive");
    if (c.trunkHidden < 1 || c.workers < 1) fail("trunkHidden and workers must be positive");
}

void compute_advantages(const std::vector<double>& rewards, const std::vector<double>& values,
                        const std::vector<bool>& dones, double bootstrap, double gamma, bool useGae, double lambda,
                        std::vector<double>& advantages, std::vector<double>& returns) {
    const std::size_t n = rewards.size();
    advantages.assign(n, 0.0);
    returns.assign(n, 0.0);
    if (useGae) {
        double gae = 0.0;
        for (std::size_t i = n; i-- > 0;) {
            const double nextV = i + 1 == n ? bootstrap : values[i + 1];
            const double cont = dones[i] ? 0.0 : 1.0;
            const double delta = rewards[i] + gamma * nextV * cont - values[i];
            gae = delta + gamma * lambda * cont * gae;
            advantages[i] = gae;
            returns[i] = gae + values[i];
        }
        return;
    }
    double ret = bootstrap;
    for (std::size_t i = n; i-- > 0;) {
        ret = rewards[i] + gamma * (dones[i] ? 0.0 : ret);
        returns[i] = ret;
        advantages[i] = ret - values[i];
    }
}

void normalize_advantages(std::vector<double>& adv) {
    if (adv.empty()) return;
    double mu = 0.0;
    for (double a : adv) mu += a;
    mu /= static_cast<double>(adv.size());
    double var = 0.0;
    for (double a : adv) var += (a - mu) * (a - mu);
    const double sd = std::sqrt(var / static_cast<double>(adv.size()));
    for (double& a : adv) a = sd < 1e-8 ? a - mu : (a - mu) / sd;
}

namespace {

constexpr int kGradChunks = 8;

}  // namespace

LossReport ppo_gradients(const PolicyNet& net, const std::vector<const Transition*>& batch,
                         const std::vector<double>& advantages, const std::vector<double>& returns,
                         const TrainConfig& cfg, nn::Grads& grads) {
    const int n = static_cast<int>(batch.size());
    const double w = 1.0 / n;
    std::vector<nn::Grads> chunkGrads(kGradChunks, nn::Grads(net.params));
    std::vector<LossReport> chunkReports(kGradChunks);
    parallel_for(kGradChunks, cfg.workers, [&](int k) {
        for (int i = k * n / kGradChunks; i < (k + 1) * n / kGradChunks; ++i) {
            const Transition& tr = *batch[static_cast<std::size_t>(i)];
            Tape t(&net.params);
            const PolicyOutput out = net.forward(t, tr.input);
            const Var lp = nn::pick(t, out.logp, 0, tr.action);
            const Var pl = nn::ppo_clip_loss(t, lp, tr.logp, advantages[static_cast<std::size_t>(i)], cfg.clip);
            const Var vl = nn::square(t, nn::sub(t, out.value, t.constant(nn::Matrix(1, 1, returns[static_cast<std::size_t>(i)]))));
            Var loss = nn::add(t, pl, nn::scale(t, vl, cfg.valueCoef));
            loss = nn::sub(t, loss, nn::scale(t, out.entropy, cfg.entropyCoef));
            loss = nn::scale(t, loss, w);
            t.backward(loss);
            t.accumulate(chunkGrads[static_cast<std::size_t>(k)]);
            LossReport& r = chunkReports[static_cast<std::size_t>(k)];
            r.policyLoss += w * t.value(pl)[0];
            r.valueLoss += w * t.value(vl)[0];
            r.entropy += w * t.value(out.entropy)[0];
        }
    });
    LossReport total;
    for (int k = 0; k < kGradChunks; ++k) {
        grads.addInPlace(chunkGrads[static_cast<std::size_t>(k)]);
        total.policyLoss += chunkReports[static_cast<std::size_t>(k)].policyLoss;
        total.valueLoss += chunkReports[static_cast<std::size_t>(k)].valueLoss;
        total.entropy += chunkReports[static_cast<std::size_t>(k)].entropy;
    }
    return total;
}

LossReport ppo_update(PolicyNet& net, nn::Adam& adam, const std::vector<Transition>& rollout,
                      const std::vector<double>& advantages, const std::vector<double>& returns, const TrainConfig& cfg,
                      Rng& rng) {
    LossReport report;
    int updates = 0;
    std::vector<int> order(rollout.size());
    std::iota(order.begin(), order.end(), 0);
    for (int e = 0; e < cfg.epochs; ++e) {
        shuffle(order, rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.minibatch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
            std::vector<const Transition*> batch;
            std::vector<double> adv, ret;
            for (std::size_t k = start; k < end; ++k) {
                const auto i = static_cast<std::size_t>(order[k]);
                batch.push_back(&rollout[i]);
                adv.push_back(advantages[i]);
                ret.push_back(returns[i]);
            }
            nn::Grads g(net.params);
            const LossReport r = ppo_gradients(net, batch, adv, ret, cfg, g);
            if (!g.finite() || !std::isfinite(r.policyLoss) || !std::isfinite(r.valueLoss)) {
                std::ostringstream msg;
                msg << "non-finite PPO update (policy loss " << r.policyLoss << ", value loss " << r.valueLoss
                    << ", entropy " << r.entropy << ", epoch " << e << ")";
                throw Error(ErrorCode::numeric, msg.str());
            }
            report.gradNorm += g.clip(cfg.maxGradNorm);
            adam.step(net.params, g);
            report.policyLoss += r.policyLoss;
            report.valueLoss += r.valueLoss;
            report.entropy += r.entropy;
            ++updates;
        }
    }
    if (updates > 0) {
        report.policyLoss /= updates;
        report.valueLoss /= updates;
        report.entropy /= updates;
        report.gradNorm /= updates;
    }
    return report;
}

}  // namespace tabsight
