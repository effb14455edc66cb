#include <cmath>
#include <map>

#include "tabsight/agent.hpp"

namespace tabsight {

using nlohmann::json;
using nn::Matrix;
using nn::Tape;
using nn::Var;

std::vector<double> embed_text(std::string_view label, int dim) {
    std::vector<double> v(static_cast<std::size_t>(dim), 0.0);
    const std::string s = "^" + std::string(label) + "$";
    if (label.empty()) return v;
    for (std::size_t i = 0; i + 3 <= s.size(); ++i) {
        std::uint64_t h = 1469598103934665603ULL;
        for (std::size_t k = i; k < i + 3; ++k) {
            h ^= static_cast<unsigned char>(s[k]);
            h *= 1099511628211ULL;
        }
        const auto bucket = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim));
        v[bucket] += (h >> 63) ? -1.0 : 1.0;
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 0.0) {
        for (double& x : v) x /= n;
    }
    return v;
}

Matrix cell_features(const TableState& state, const std::vector<InsightRecord>& ledger) {
    const int R = state.grid.rows(), C = state.grid.cols();
    std::map<int, InsightKind> kindOf;
    for (const auto& r : ledger) kindOf[r.id] = r.kind;

    double sum = 0.0, sq = 0.0;
    int n = 0;
    std::int32_t maxId = 0;
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            if (const auto& v = state.grid.value(r, c)) {
                sum += *v;
                ++n;
            }
            const CellId& id = state.grid.cellId(r, c);
            if (id.valid() && !id.derived) maxId = std::max(maxId, id.value);
        }
    }
    const double mu = n > 0 ? sum / n : 0.0;
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            if (const auto& v = state.grid.value(r, c)) sq += (*v - mu) * (*v - mu);
        }
    }
    double sd = n > 0 ? std::sqrt(sq / n) : 0.0;
    if (!(sd > 1e-12)) sd = 1.0;

    Matrix f(R * C, kCellFeatures);
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            double* row = f.rowPtr(r * C + c);
            const auto& v = state.grid.value(r, c);
            row[0] = v ? (*v - mu) / sd : 0.0;
            row[1] = v ? 0.0 : 1.0;
            const int viz = state.grid.viz(r, c);
            row[2] = viz == kNoInsight ? 0.0 : 1.0;
            if (viz != kNoInsight) {
                auto it = kindOf.find(viz);
                row[3] = it == kindOf.end() ? 0.0 : (static_cast<double>(it->second) + 1.0) / kSingleKindCount;
            }
            const CellId& id = state.grid.cellId(r, c);
            if (!id.valid()) {
                row[4] = 0.0;
            } else if (id.derived) {
                row[4] = -0.5;
            } else {
                row[4] = (static_cast<double>(id.value) + 1.0) / (static_cast<double>(maxId) + 1.0);
            }
        }
    }
    return f;
}

AgentInput make_agent_input(const TableState& state, Stage stage, const ActionMask& mask,
                            const std::vector<InsightRecord>& ledger, int totalSteps, int embedDim) {
    AgentInput in;
    const HeadingGraph g = heading_graph(state);
    in.nodeFeatures = Matrix(static_cast<int>(g.nodes.size()), embedDim + 1);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const auto e = embed_text(g.nodes[i].label, embedDim);
        double* row = in.nodeFeatures.rowPtr(static_cast<int>(i));
        std::copy(e.begin(), e.end(), row);
        row[embedDim] = g.nodes[i].selection;
    }
    for (const auto& e : g.edges) in.edges.push_back(nn::GraphEdge{e.parent, e.child, static_cast<int>(e.cls)});
    in.cellFeatures = cell_features(state, ledger);
    in.rows = state.grid.rows();
    in.cols = state.grid.cols();
    in.stageFlag = stage == Stage::select ? 1.0 : 0.0;
    in.progress = static_cast<double>(state.step) / std::max(1, totalSteps);
    in.mask.assign(mask.begin(), mask.end());
    return in;
}

AgentInput make_agent_input(const Environment& env, int embedDim) {
    return make_agent_input(env.state(), env.stage(), env.legalMask(), env.ledger(), env.config().totalSteps, embedDim);
}

void to_json(json& j, const EncoderConfig& c) {
    j = json{{"embedDim", c.embedDim},     {"gcnHidden", c.gcnHidden},   {"gcnLayers", c.gcnLayers},
             {"lstmHidden", c.lstmHidden}, {"contentOut", c.contentOut}, {"meanPoolContent", c.meanPoolContent}};
}

void from_json(const json& j, EncoderConfig& c) {
    if (j.contains("embedDim")) c.embedDim = j.at("embedDim").get<int>();
    if (j.contains("gcnHidden")) c.gcnHidden = j.at("gcnHidden").get<int>();
    if (j.contains("gcnLayers")) c.gcnLayers = j.at("gcnLayers").get<int>();
    if (j.contains("lstmHidden")) c.lstmHidden = j.at("lstmHidden").get<int>();
    if (j.contains("contentOut")) c.contentOut = j.at("contentOut").get<int>();
    if (j.contains("meanPoolContent")) c.meanPoolContent = j.at("meanPoolContent").get<bool>();
    if (c.embedDim < 1 || c.gcnHidden < 1 || c.gcnLayers < 1 || c.lstmHidden < 1 || c.contentOut < 1) {
        throw Error(ErrorCode::config, "encoder dimensions and layer count must be positive");
    }
}

// Heading encoder ---------------------------------------------------------------

HeadingEncoder::HeadingEncoder(nn::ParamSet& ps, const std::string& name, int inDim, int hidden, int layerCount, Rng& rng)
    : hidden_(hidden) {
    input = nn::Linear::create(ps, name + ".in", inDim, hidden, rng);
    for (int l = 0; l < layerCount; ++l) {
        layers.push_back(nn::Linear::create(ps, name + ".layer" + std::to_string(l), hidden, hidden, rng));
        gates.push_back(ps.add(name + ".gate" + std::to_string(l), Matrix(1, 3, 1.0)));
    }
}

Var HeadingEncoder::forward(Tape& t, const Matrix& nodeFeatures, const std::vector<nn::GraphEdge>& edges) const {
    Var h = nn::relu(t, input(t, t.constant(nodeFeatures)));
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Var agg = nn::graph_aggregate(t, h, t.param(gates[l]), edges);
        h = nn::relu(t, layers[l](t, agg));
    }
    return nn::mean_rows_sorted(t, h);
}

// Content encoder ---------------------------------------------------------------

ContentEncoder::ContentEncoder(nn::ParamSet& ps, const std::string& name, int hidden, int outDim, bool meanPool, Rng& rng)
    : hidden_(hidden), meanPool_(meanPool) {
    auto direction = [&](const std::string& d) {
        Direction dir;
        dir.wx = ps.add(name + "." + d + ".wx", nn::glorot(kCellFeatures, 4 * hidden, rng));
        dir.wh = ps.add(name + "." + d + ".wh", nn::glorot(hidden, 4 * hidden, rng));
        Matrix b(1, 4 * hidden);
        for (int j = hidden; j < 2 * hidden; ++j) b[static_cast<std::size_t>(j)] = 1.0;  // forget-gate bias
        dir.b = ps.add(name + "." + d + ".b", std::move(b));
        return dir;
    };
    if (meanPool_) {
        meanPoolProj = nn::Linear::create(ps, name + ".pool", kCellFeatures, 2 * hidden, rng);
    } else {
        fwd = direction("fwd");
        bwd = direction("bwd");
    }
    out_ = nn::Linear::create(ps, name + ".out", 4 * hidden, outDim, rng);
}

Var ContentEncoder::lstm_direction(Tape& t, Var cells, const Direction& dir, int batch, int length, bool alongRows,
                                   bool reverse) const {
    const int C = alongRows ? length : batch;
    std::vector<std::vector<int>> steps(static_cast<std::size_t>(length), std::vector<int>(static_cast<std::size_t>(batch)));
    for (int s = 0; s < length; ++s) {
        const int pos = reverse ? length - 1 - s : s;
        for (int k = 0; k < batch; ++k) {
            // Sequence k, element pos: along rows the cell is (k, pos), along columns (pos, k).
            steps[static_cast<std::size_t>(s)][static_cast<std::size_t>(k)] = alongRows ? k * C + pos : pos * C + k;
        }
    }
    return nn::lstm_sequence(t, cells, t.param(dir.wx), t.param(dir.wh), t.param(dir.b), steps);
}

Var ContentEncoder::run_pass(Tape& t, Var cells, int batch, int length, bool alongRows) const {
    if (meanPool_) {
        const Matrix& F = t.value(cells);
        const int C = alongRows ? length : batch;
        Matrix means(batch, kCellFeatures);
        for (int k = 0; k < batch; ++k) {
            for (int s = 0; s < length; ++s) {
                const int cell = alongRows ? k * C + s : s * C + k;
                for (int j = 0; j < kCellFeatures; ++j) means(k, j) += F(cell, j) / length;
            }
        }
        return nn::mean_rows_sorted(t, nn::tanh(t, meanPoolProj(t, t.constant(std::move(means)))));
    }
    const Var hf = lstm_direction(t, cells, fwd, batch, length, alongRows, false);
    const Var hb = lstm_direction(t, cells, bwd, batch, length, alongRows, true);
    return nn::mean_rows_sorted(t, nn::concat_cols(t, {hf, hb}));
}

ContentParts ContentEncoder::forward(Tape& t, const Matrix& cells, int rows, int cols) const {
    const Var x = t.constant(cells);
    ContentParts p;
    p.rowPool = run_pass(t, x, rows, cols, true);
    p.colPool = run_pass(t, x, cols, rows, false);
    p.out = nn::tanh(t, out_(t, nn::concat_cols(t, {p.rowPool, p.colPool})));
    return p;
}

}  // namespace tabsight
