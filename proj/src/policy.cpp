#include <cmath>

#include "tabsight/agent.hpp"

namespace tabsight {

using nn::Matrix;
using nn::Tape;
using nn::Var;

PolicyNet::PolicyNet(const EncoderConfig& cfg, int trunk, std::uint64_t seed) : encoder(cfg), trunkHidden(trunk) {
    Rng rng(seed);
    heading = HeadingEncoder(params, "heading", cfg.embedDim + 1, cfg.gcnHidden, cfg.gcnLayers, rng);
    content = ContentEncoder(params, "content", cfg.lstmHidden, cfg.contentOut, cfg.meanPoolContent, rng);
    trunk1 = nn::Linear::create(params, "trunk1", cfg.gcnHidden + cfg.contentOut + 2, trunk, rng);
    trunk2 = nn::Linear::create(params, "trunk2", trunk, trunk, rng);
    transformHead = nn::Linear::create(params, "head.transform", trunk, kTransformActionCount, rng);
    selectHead = nn::Linear::create(params, "head.select", trunk, kSelectActionCount, rng);
    valueHead = nn::Linear::create(params, "head.value", trunk, 1, rng);
    // Small output layers start the policy close to uniform over legal actions.
    for (const nn::Linear* head : {&transformHead, &selectHead}) {
        for (double& w : params.at(head->weight).value.data()) w *= 0.01;
    }
}

PolicyOutput PolicyNet::forward(Tape& t, const AgentInput& in) const {
    const Var hH = heading.forward(t, in.nodeFeatures, in.edges);
    const ContentParts hD = content.forward(t, in.cellFeatures, in.rows, in.cols);
    const Var extra = t.constant(Matrix::row({in.stageFlag, in.progress}));
    const Var x = nn::concat_cols(t, {hH, hD.out, extra});
    const Var z1 = nn::tanh(t, trunk1(t, x));
    const Var z2 = nn::tanh(t, trunk2(t, z1));
    const Var logits = nn::concat_cols(t, {transformHead(t, z2), selectHead(t, z2)});
    PolicyOutput out;
    out.logp = nn::masked_log_softmax(t, logits, in.mask);
    out.value = valueHead(t, z2);
    out.entropy = nn::masked_entropy(t, out.logp, in.mask);
    return out;
}

std::vector<double> PolicyNet::probabilities(const AgentInput& in) const {
    Tape t(&params);
    const PolicyOutput out = forward(t, in);
    const Matrix& lp = t.value(out.logp);
    std::vector<double> p(lp.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = in.mask[i] ? std::exp(lp[i]) : 0.0;
    return p;
}

double PolicyNet::valueOf(const AgentInput& in) const {
    Tape t(&params);
    return t.value(forward(t, in).value)[0];
}

int sample_action(const std::vector<double>& probs, Rng& rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    int last = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last = static_cast<int>(i);
        if (u < acc) return last;
    }
    if (last < 0) throw Error(ErrorCode::illegal_action, "no action has positive probability");
    return last;
}

}  // namespace tabsight
