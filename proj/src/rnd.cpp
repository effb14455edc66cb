#include <cmath>

#include "tabsight/agent.hpp"

namespace tabsight {

using nn::Matrix;
using nn::Tape;
using nn::Var;

void RunningStd::push(double x) {
    count += 1.0;
    const double d = x - mean;
    mean += d / count;
    m2 += d * (x - mean);
}

double RunningStd::stddev() const { return count > 1.0 ? std::sqrt(m2 / count) : 0.0; }

Curiosity::Curiosity(const EncoderConfig& cfg, int out, double lr, std::uint64_t seed) : encoder(cfg), outDim(out) {
    Rng rng(seed);
    auto build = [&](nn::ParamSet& ps, const std::string& prefix, HeadingEncoder& h, nn::Linear& hOut, ContentEncoder& d,
                     nn::Linear& dOut) {
        h = HeadingEncoder(ps, prefix + ".heading", cfg.embedDim + 1, cfg.gcnHidden, cfg.gcnLayers, rng);
        hOut = nn::Linear::create(ps, prefix + ".heading.out", cfg.gcnHidden, out, rng);
        d = ContentEncoder(ps, prefix + ".content", cfg.lstmHidden, cfg.contentOut, cfg.meanPoolContent, rng);
        dOut = nn::Linear::create(ps, prefix + ".content.out", cfg.contentOut, out, rng);
    };
    build(targets, "rnd.target", targetH, targetHOut, targetD, targetDOut);
    build(predictors, "rnd.predictor", predictorH, predictorHOut, predictorD, predictorDOut);
    adam = nn::Adam(predictors, lr);
}

namespace {

struct Features {
    Matrix heading;
    Matrix content;
};

Features encode(const nn::ParamSet& ps, const HeadingEncoder& h, const nn::Linear& hOut, const ContentEncoder& d,
                const nn::Linear& dOut, const AgentInput& in) {
    Tape t(&ps);
    const Var fh = hOut(t, h.forward(t, in.nodeFeatures, in.edges));
    const Var fd = dOut(t, d.forward(t, in.cellFeatures, in.rows, in.cols).out);
    return Features{t.value(fh), t.value(fd)};
}

double sq(const Matrix& a, const Matrix& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

}  // namespace

IntrinsicReward Curiosity::raw(const AgentInput& in) const {
    const Features target = encode(targets, targetH, targetHOut, targetD, targetDOut, in);
    const Features pred = encode(predictors, predictorH, predictorHOut, predictorD, predictorDOut, in);
    return IntrinsicReward{sq(pred.heading, target.heading), sq(pred.content, target.content)};
}

double Curiosity::normalizedTotal(const IntrinsicReward& r) {
    statsH.push(r.heading);
    statsD.push(r.content);
    const double sh = statsH.stddev();
    const double sd = statsD.stddev();
    return r.heading / (sh > 1e-8 ? sh : 1.0) + r.content / (sd > 1e-8 ? sd : 1.0);
}

double Curiosity::predictorLoss(const AgentInput& in, nn::Grads* grads, double weight) const {
    const Features target = encode(targets, targetH, targetHOut, targetD, targetDOut, in);
    Tape t(&predictors);
    const Var ph = predictorHOut(t, predictorH.forward(t, in.nodeFeatures, in.edges));
    const Var pd = predictorDOut(t, predictorD.forward(t, in.cellFeatures, in.rows, in.cols).out);
    const Var loss = nn::add(t, nn::squared_distance(t, ph, t.constant(target.heading)),
                             nn::squared_distance(t, pd, t.constant(target.content)));
    const double value = t.value(loss)[0];
    if (grads) {
        const Var scaled = nn::scale(t, loss, weight);
        t.backward(scaled);
        t.accumulate(*grads);
    }
    return value;
}

double Curiosity::update(const std::vector<const AgentInput*>& batch) {
    if (batch.empty()) return 0.0;
    nn::Grads g(predictors);
    double total = 0.0;
    const double w = 1.0 / static_cast<double>(batch.size());
    for (const AgentInput* in : batch) total += predictorLoss(*in, &g, w);
    if (!g.finite()) throw Error(ErrorCode::numeric, "non-finite curiosity predictor gradient");
    adam.step(predictors, g);
    return total * w;
}

void Curiosity::copyTargetsToPredictors() {
    for (int i = 0; i < targets.size(); ++i) predictors.at(i).value = targets.at(i).value;
}

}  // namespace tabsight
