#include <map>

#include "tabsight/insight.hpp"

namespace tabsight {

using nlohmann::json;

std::string_view to_string(RelationMechanism m) { return m == RelationMechanism::name_based ? "name" : "topology"; }

json relation_to_json(const BlockRelation& r) {
    json related = json::array();
    for (const Block& b : r.related) related.push_back(block_to_json(b));
    return json{{"mechanism", to_string(r.mechanism)},
                {"anchor", block_to_json(r.anchor)},
                {"related", related},
                {"sharedSide", to_string(r.sharedSide)}};
}

namespace {

Block block_with(const TableState& state, const Block& anchor, Side varying, int node) {
    return varying == Side::row ? block_for(state, node, anchor.colEntry) : block_for(state, anchor.rowEntry, node);
}

void relations_along(const TableState& state, const Block& anchor, Side varying, std::vector<BlockRelation>& out) {
    const HeadingTree& tree = state.tree(varying);
    const int entry = varying == Side::row ? anchor.rowEntry : anchor.colEntry;
    const HeadingNode& e = tree.node(entry);
    const Side shared = opposite(varying);

    // Same label at the same depth elsewhere in the tree.
    {
        BlockRelation rel{RelationMechanism::name_based, anchor, {anchor}, shared};
        for (int id : tree.nodesAtDepth(e.depth)) {
            if (id == entry || tree.node(id).label != e.label) continue;
            Block b = block_with(state, anchor, varying, id);
            if (b.sameShape(anchor)) rel.related.push_back(b);
        }
        if (rel.related.size() >= 2) out.push_back(std::move(rel));
    }

    // Siblings of the varying entry, in layout order.
    {
        BlockRelation rel{RelationMechanism::topology_based, anchor, {}, shared};
        for (int id : tree.node(e.parent).children) {
            Block b = block_with(state, anchor, varying, id);
            if (b.sameShape(anchor)) rel.related.push_back(b);
        }
        if (rel.related.size() >= 2) out.push_back(std::move(rel));
    }

    // Children of the varying entry: the largest same-shape group.
    if (!e.isLeaf()) {
        std::map<std::pair<int, int>, std::vector<Block>> groups;
        std::vector<std::pair<int, int>> firstSeen;
        for (int id : e.children) {
            Block b = block_with(state, anchor, varying, id);
            const auto key = std::make_pair(b.rowCount(), b.colCount());
            if (!groups.count(key)) firstSeen.push_back(key);
            groups[key].push_back(b);
        }
        const std::vector<Block>* best = nullptr;
        for (const auto& key : firstSeen) {
            if (!best || groups[key].size() > best->size()) best = &groups[key];
        }
        if (best && best->size() >= 2) out.push_back(BlockRelation{RelationMechanism::topology_based, anchor, *best, shared});
    }
}

}  // namespace

std::vector<BlockRelation> recommend_blocks(const TableState& state, const Block& anchor) {
    std::vector<BlockRelation> out;
    relations_along(state, anchor, Side::col, out);
    relations_along(state, anchor, Side::row, out);
    return out;
}

std::optional<InsightRecord> compose_multiblock(const BlockRelation& relation,
                                                const std::vector<std::vector<InsightRecord>>& perBlock) {
    const std::size_t n = relation.related.size();
    if (n < 2) throw Error(ErrorCode::precondition, "multi-block composition needs at least two blocks");
    if (perBlock.size() != n) throw Error(ErrorCode::precondition, "one insight list per related block is required");
    for (const Block& b : relation.related) {
        if (!b.sameShape(relation.related.front())) throw Error(ErrorCode::precondition, "related blocks differ in shape");
    }

    auto score_of = [&](std::size_t i, InsightKind k) -> std::optional<double> {
        for (const InsightRecord& r : perBlock[i]) {
            if (r.kind == k) return r.score;
        }
        return std::nullopt;
    };

    std::optional<InsightRecord> differs;
    for (int k = 0; k < kSingleKindCount; ++k) {
        const auto kind = static_cast<InsightKind>(k);
        std::size_t firing = 0;
        std::size_t missing = n;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (auto s = score_of(i, kind)) {
                ++firing;
                total += *s;
            } else {
                missing = i;
            }
        }
        if (firing == 0) continue;
        InsightRecord r;
        r.block = relation.anchor;
        r.blocks = relation.related;
        r.score = total / static_cast<double>(firing);
        r.chart = allowed_charts(kind).front();
        r.params = json{{"baseKind", to_string(kind)}, {"relation", relation_to_json(relation)}};
        if (firing == n) {
            r.kind = InsightKind::multi_identical;
            return r;
        }
        if (!differs && n >= 3 && firing == n - 1) {
            r.kind = InsightKind::multi_differs;
            r.params["differingIndex"] = missing;
            differs = std::move(r);
        }
    }
    return differs;
}

}  // namespace tabsight
