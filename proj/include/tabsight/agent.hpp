#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabsight/env.hpp"
#include "tabsight/nn.hpp"

namespace tabsight {

// Text embedding --------------------------------------------------------------

/// Feature-hashed character 3-grams of "^label$" folded into `dim` signed
/// buckets, L2-normalized. The empty label maps to the zero vector.
std::vector<double> embed_text(std::string_view label, int dim);

// Agent-facing observation -----------------------------------------------------

/// Number of per-cell content features.
inline constexpr int kCellFeatures = 5;

struct AgentInput {
    nn::Matrix nodeFeatures;  // N x (embedDim + 1)
    std::vector<nn::GraphEdge> edges;
    nn::Matrix cellFeatures;  // (R*C) x kCellFeatures, row-major cells
    int rows = 0;
    int cols = 0;
    double stageFlag = 0.0;  // 0 transform, 1 select
    double progress = 0.0;   // step / T
    std::vector<bool> mask;  // kActionCount entries
};

AgentInput make_agent_input(const TableState& state, Stage stage, const ActionMask& mask,
                            const std::vector<InsightRecord>& ledger, int totalSteps, int embedDim);
AgentInput make_agent_input(const Environment& env, int embedDim);

/// Per-cell features: standardized value, missing flag, embedded flag, embedded
/// kind code, original-id position code.
nn::Matrix cell_features(const TableState& state, const std::vector<InsightRecord>& ledger);

// Encoders --------------------------------------------------------------------

struct EncoderConfig {
    int embedDim = 16;
    int gcnHidden = 32;
    int gcnLayers = 3;
    int lstmHidden = 16;
    int contentOut = 32;
    bool meanPoolContent = false;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

class HeadingEncoder {
public:
    HeadingEncoder() = default;
    HeadingEncoder(nn::ParamSet& ps, const std::string& name, int inDim, int hidden, int layers, Rng& rng);

    nn::Var forward(nn::Tape& t, const nn::Matrix& nodeFeatures, const std::vector<nn::GraphEdge>& edges) const;
    int outDim() const { return hidden_; }

    nn::Linear input;
    std::vector<nn::Linear> layers;
    std::vector<int> gates;  // 1 x 3 per layer, one scalar per edge class

private:
    int hidden_ = 0;
};

struct ContentParts {
    nn::Var rowPool;  // 1 x 2H
    nn::Var colPool;  // 1 x 2H
    nn::Var out;      // 1 x contentOut
};

class ContentEncoder {
public:
    ContentEncoder() = default;
    ContentEncoder(nn::ParamSet& ps, const std::string& name, int hidden, int outDim, bool meanPool, Rng& rng);

    ContentParts forward(nn::Tape& t, const nn::Matrix& cells, int rows, int cols) const;
    int outDim() const { return out_.out; }

    struct Direction {
        int wx = -1;
        int wh = -1;
        int b = -1;
    };
    Direction fwd, bwd;
    nn::Linear meanPoolProj;

private:
    nn::Var run_pass(nn::Tape& t, nn::Var cells, int batch, int length, bool alongRows) const;
    nn::Var lstm_direction(nn::Tape& t, nn::Var cells, const Direction& dir, int batch, int length, bool alongRows,
                           bool reverse) const;

    int hidden_ = 0;
    bool meanPool_ = false;
    nn::Linear out_;
};

// Policy ----------------------------------------------------------------------

struct PolicyOutput {
    nn::Var logp;   // 1 x kActionCount masked log-probabilities
    nn::Var value;  // 1 x 1
    nn::Var entropy;
};

class PolicyNet {
public:
    PolicyNet() = default;
    PolicyNet(const EncoderConfig& cfg, int trunkHidden, std::uint64_t seed);

    PolicyOutput forward(nn::Tape& t, const AgentInput& in) const;

    /// Probabilities over all actions for the given input (masked entries are 0).
    std::vector<double> probabilities(const AgentInput& in) const;
    double valueOf(const AgentInput& in) const;

    nn::ParamSet params;
    EncoderConfig encoder;
    int trunkHidden = 64;
    HeadingEncoder heading;
    ContentEncoder content;
    nn::Linear trunk1, trunk2, transformHead, selectHead, valueHead;
};

/// Samples an index from `probs` (must sum to ~1) with the given RNG.
int sample_action(const std::vector<double>& probs, Rng& rng);

// Curiosity -------------------------------------------------------------------

/// Running standard deviation (Welford).
struct RunningStd {
    double count = 0.0;
    double mean = 0.0;
    double m2 = 0.0;
    void push(double x);
    double stddev() const;
};

struct IntrinsicReward {
    double heading = 0.0;
    double content = 0.0;
};

class Curiosity {
public:
    Curiosity() = default;
    Curiosity(const EncoderConfig& cfg, int outDim, double lr, std::uint64_t seed);

    /// Raw squared errors ||f_hat(x) - f(x)||^2 for both components.
    IntrinsicReward raw(const AgentInput& in) const;
    /// Pushes raw values into the running statistics and returns r_H/s_H + r_D/s_D.
    double normalizedTotal(const IntrinsicReward& r);
    /// One Adam step on the mean predictor loss over `batch`; returns the loss.
    double update(const std::vector<const AgentInput*>& batch);
    /// Adds the predictor loss gradient for one input into `grads`, returns the loss.
    double predictorLoss(const AgentInput& in, nn::Grads* grads, double weight) const;

    void copyTargetsToPredictors();

    EncoderConfig encoder;
    int outDim = 16;
    nn::ParamSet targets;
    nn::ParamSet predictors;
    HeadingEncoder targetH, predictorH;
    ContentEncoder targetD, predictorD;
    nn::Linear targetHOut, predictorHOut, targetDOut, predictorDOut;
    nn::Adam adam;
    RunningStd statsH, statsD;
};

// Training --------------------------------------------------------------------

struct TrainConfig {
    double learningRate = 2e-4;
    int parallelEnvs = 8;
    int rolloutSteps = 64;
    int minibatch = 64;
    int epochs = 4;
    double clip = 0.2;
    double valueCoef = 0.5;
    double entropyCoef = 0.01;
    double maxGradNorm = 0.5;
    long totalSteps = 200000;
    double intrinsicWeight = 0.1;
    bool useRnd = true;
    bool intrinsicInTransformStageOnly = false;
    double rndLearningRate = 1e-3;
    int rndOutDim = 16;
    double gamma = 0.99;
    bool useGae = false;
    double gaeLambda = 0.95;
    bool eipo = false;
    int eipoPeriod = 4;
    int trunkHidden = 64;
    int workers = 1;
    std::uint64_t seed = 1;
    EncoderConfig encoder;
    EpisodeConfig episode;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void validate(const TrainConfig& c);

/// One stored transition.
struct Transition {
    AgentInput input;
    AgentInput next;
    int action = 0;
    double logp = 0.0;
    double value = 0.0;
    double rExt = 0.0;
    double rInt = 0.0;
    bool done = false;
};

struct LossReport {
    double policyLoss = 0.0;
    double valueLoss = 0.0;
    double entropy = 0.0;
    double rndLoss = 0.0;
    double gradNorm = 0.0;
};

/// Discounted-return (or GAE) advantages for one env's trajectory segment.
/// `bootstrap` is V(s_T) for an unfinished segment.
void compute_advantages(const std::vector<double>& rewards, const std::vector<double>& values,
                        const std::vector<bool>& dones, double bootstrap, double gamma, bool useGae, double lambda,
                        std::vector<double>& advantages, std::vector<double>& returns);

/// Normalizes in place; when the standard deviation is below 1e-8 only the mean is removed.
void normalize_advantages(std::vector<double>& adv);

/// Gradient of the PPO objective for one minibatch, summed in a fixed order.
LossReport ppo_gradients(const PolicyNet& net, const std::vector<const Transition*>& batch,
                         const std::vector<double>& advantages, const std::vector<double>& returns,
                         const TrainConfig& cfg, nn::Grads& grads);

/// Full PPO update over a rollout: epochs x shuffled minibatches.
LossReport ppo_update(PolicyNet& net, nn::Adam& adam, const std::vector<Transition>& rollout,
                      const std::vector<double>& advantages, const std::vector<double>& returns,
                      const TrainConfig& cfg, Rng& rng);

struct CurvePoint {
    long iteration = 0;
    long steps = 0;
    double rExtMean = 0.0;  // mean extrinsic return of episodes finished this iteration
    double AR = 0.0;
    double IR = 0.0;
    double ER = 0.0;
    double intrinsicMean = 0.0;
};

struct TrainResult {
    PolicyNet policy;
    Curiosity curiosity;
    std::vector<CurvePoint> curve;
    TrainConfig config;
    Rng rng;
    long steps = 0;
};

/// Trains on the given tables (episodes cycle over them).
TrainResult train(const std::vector<TableState>& tables, const TrainConfig& cfg);

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path);

// Checkpoints -----------------------------------------------------------------

void save_checkpoint(const TrainResult& r, const std::string& path);
TrainResult load_checkpoint(const std::string& path);

// Evaluation and baselines ----------------------------------------------------

struct EpisodeTrace {
    std::vector<ActionKind> actions;
    std::vector<double> rewards;
    double totalReward = 0.0;
    Metrics metrics;
    std::vector<InsightRecord> ledger;
};

enum class PolicyKind { random, greedy, beam, agent };

struct BaselineSpec {
    PolicyKind kind = PolicyKind::random;
    int beamWidth = 1;
    int beamDepth = 3;
};

/// Parses "random", "greedy" or "beam:k".
BaselineSpec parse_baseline(const std::string& text);

EpisodeTrace run_baseline(const BaselineSpec& spec, const TableState& table, const EpisodeConfig& cfg, std::uint64_t seed);

/// Number of entry pairs whose block has at least one firing insight.
int insight_blocks(const TableState& s, const DetectorThresholds& th);
/// Greedy / beam action choice from the current environment state.
ActionKind greedy_action(const Environment& env, Rng& rng);
ActionKind beam_action(const Environment& env, int width, int depth, Rng& rng);

/// Stochastic rollout of the trained policy.
EpisodeTrace run_policy(const PolicyNet& net, const TableState& table, const EpisodeConfig& cfg, std::uint64_t seed,
                        bool argmax = false);

/// Continues an existing environment for at most `budget` steps with the policy
/// (or greedily when `net` is null).
EpisodeTrace continue_episode(Environment& env, const PolicyNet* net, int budget, std::uint64_t seed);

}  // namespace tabsight
