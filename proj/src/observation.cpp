#include "tabsight/env.hpp"

namespace tabsight {

using nlohmann::json;

HeadingGraph heading_graph(const TableState& state) {
    HeadingGraph g;
    g.nodes.push_back(HeadingGraphNode{"", -1, Side::row, -1});
    for (Side side : {Side::row, Side::col}) {
        const HeadingTree& tree = state.tree(side);
        const int offset = static_cast<int>(g.nodes.size());
        for (const HeadingNode& n : tree.nodes()) {
            int code = -1;
            if (n.id == tree.selected()) code = side == Side::row ? 2 : 1;
            g.nodes.push_back(HeadingGraphNode{n.label, code, side, n.id});
            if (n.parent >= 0) {
                g.edges.push_back(HeadingGraphEdge{offset + n.parent, offset + n.id,
                                                   side == Side::row ? EdgeClass::row_parent_child : EdgeClass::col_parent_child});
            }
        }
        g.edges.push_back(HeadingGraphEdge{0, offset, EdgeClass::root_link});
    }
    return g;
}

json observation_json(const TableState& state, Stage stage, const ActionMask& mask, const std::vector<InsightRecord>& ledger) {
    const HeadingGraph g = heading_graph(state);
    json nodes = json::array();
    for (const auto& n : g.nodes) {
        nodes.push_back(json{{"label", n.label}, {"selection", n.selection}, {"side", to_string(n.side)}, {"treeId", n.treeId}});
    }
    json edges = json::array();
    for (const auto& e : g.edges) {
        edges.push_back(json{{"parent", e.parent}, {"child", e.child}, {"class", static_cast<int>(e.cls)}});
    }

    json values = json::array(), ids = json::array(), viz = json::array();
    for (int r = 0; r < state.grid.rows(); ++r) {
        json vr = json::array(), ir = json::array(), zr = json::array();
        for (int c = 0; c < state.grid.cols(); ++c) {
            const auto& v = state.grid.value(r, c);
            vr.push_back(v ? json(*v) : json(nullptr));
            const CellId& id = state.grid.cellId(r, c);
            if (!id.valid()) {
                ir.push_back(nullptr);
            } else if (id.derived) {
                ir.push_back("d" + std::to_string(id.value));
            } else {
                ir.push_back(id.value);
            }
            zr.push_back(state.grid.viz(r, c));
        }
        values.push_back(std::move(vr));
        ids.push_back(std::move(ir));
        viz.push_back(std::move(zr));
    }

    json legal = json::array();
    for (int i = 0; i < kActionCount; ++i) {
        if (mask[static_cast<std::size_t>(i)]) legal.push_back(to_string(action_at(i)));
    }
    json records = json::array();
    for (const auto& r : ledger) records.push_back(record_to_json(r));

    return json{{"version", kObservationVersion},
                {"step", state.step},
                {"stage", to_string(stage)},
                {"legalActions", legal},
                {"graph", {{"nodes", nodes}, {"edges", edges}}},
                {"grid", {{"rows", state.grid.rows()}, {"cols", state.grid.cols()}, {"values", values}, {"cellIds", ids}, {"viz", viz}}},
                {"ledger", records}};
}

}  // namespace tabsight
