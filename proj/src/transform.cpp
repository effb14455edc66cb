#include "tabsight/transform.hpp"

#include <algorithm>
#include <map>

namespace tabsight {

namespace {

constexpr std::array<std::string_view, kActionCount> kActionNames = {
    "transpose", "aggregate", "stack",    "unstack",   "swap_row", "swap_col",  "row_up",
    "row_down",  "row_left",  "row_right", "col_up",   "col_down", "col_left", "col_right",
};

using Path = std::vector<std::string>;

// Layout-free view of a table: one label path per leaf line plus the cells.
struct Flat {
    std::string rowRoot;
    std::string colRoot;
    std::vector<Path> rows;
    std::vector<Path> cols;
    std::vector<CellValue> values;  // row-major rows.size() x cols.size()
    std::vector<CellId> ids;
    std::int32_t nextDerivedId = 0;
    int step = 0;

    std::size_t at(std::size_t r, std::size_t c) const { return r * cols.size() + c; }
};

Flat flatten(const TableState& s) {
    Flat f;
    f.rowRoot = s.rowTree.root().label;
    f.colRoot = s.colTree.root().label;
    for (int leaf : s.rowTree.leafOrder()) f.rows.push_back(s.rowTree.path(leaf));
    for (int leaf : s.colTree.leafOrder()) f.cols.push_back(s.colTree.path(leaf));
    for (int r = 0; r < s.grid.rows(); ++r) {
        for (int c = 0; c < s.grid.cols(); ++c) {
            f.values.push_back(s.grid.value(r, c));
            f.ids.push_back(s.grid.cellId(r, c));
        }
    }
    f.nextDerivedId = s.nextDerivedId;
    f.step = s.step;
    return f;
}

void insert_path(LabelTree& root, const Path& path) {
    LabelTree* cur = &root;
    for (const auto& label : path) {
        auto it = std::find_if(cur->children.begin(), cur->children.end(),
                               [&](const LabelTree& t) { return t.label == label; });
        if (it == cur->children.end()) {
            cur->children.push_back(LabelTree{label, {}});
            cur = &cur->children.back();
        } else {
            cur = &*it;
        }
    }
}

// Drops leaf lines that hold no cell id at all (label combinations that never
// existed in the source), then rebuilds both trees in first-appearance order
// and permutes the cells into the new depth-first leaf order.
TableState assemble(Flat f) {
    const std::size_t R = f.rows.size();
    const std::size_t C = f.cols.size();
    std::vector<bool> keepRow(R, false), keepCol(C, false);
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            if (f.ids[f.at(r, c)].valid()) keepRow[r] = keepCol[c] = true;
        }
    }

    LabelTree rowRoot{f.rowRoot, {}}, colRoot{f.colRoot, {}};
    std::map<Path, std::size_t> rowIndex, colIndex;
    for (std::size_t r = 0; r < R; ++r) {
        if (!keepRow[r]) continue;
        insert_path(rowRoot, f.rows[r]);
        rowIndex.emplace(f.rows[r], r);
    }
    for (std::size_t c = 0; c < C; ++c) {
        if (!keepCol[c]) continue;
        insert_path(colRoot, f.cols[c]);
        colIndex.emplace(f.cols[c], c);
    }

    TableState s;
    s.rowTree = HeadingTree::build(Side::row, rowRoot);
    s.colTree = HeadingTree::build(Side::col, colRoot);
    std::vector<std::size_t> rowSrc, colSrc;
    for (int leaf : s.rowTree.leafOrder()) rowSrc.push_back(rowIndex.at(s.rowTree.path(leaf)));
    for (int leaf : s.colTree.leafOrder()) colSrc.push_back(colIndex.at(s.colTree.path(leaf)));

    s.grid = CellGrid(static_cast<int>(rowSrc.size()), static_cast<int>(colSrc.size()));
    for (std::size_t r = 0; r < rowSrc.size(); ++r) {
        for (std::size_t c = 0; c < colSrc.size(); ++c) {
            const std::size_t src = f.at(rowSrc[r], colSrc[c]);
            s.grid.value(static_cast<int>(r), static_cast<int>(c)) = f.values[src];
            s.grid.cellId(static_cast<int>(r), static_cast<int>(c)) = f.ids[src];
        }
    }
    s.nextDerivedId = f.nextDerivedId;
    s.step = f.step;
    return s;
}

bool reshapeable(const HeadingTree& t) { return t.levels() >= 2 && t.balanced(); }

// Moves the innermost level of `from` to become the innermost level of the
// other side. stack = from col, unstack = from row.
TableState move_innermost(const TableState& s, Side from) {
    if (!reshapeable(s.tree(from))) {
        throw Error(ErrorCode::precondition,
                    std::string(from == Side::col ? "stack" : "unstack") + " needs a balanced " +
                        std::string(to_string(from)) + " header with at least two levels");
    }
    const Flat f = flatten(s);
    const bool fromCol = from == Side::col;
    const auto& fromLines = fromCol ? f.cols : f.rows;
    const auto& toLines = fromCol ? f.rows : f.cols;

    std::vector<std::string> innermost;
    std::vector<Path> prefixes;
    std::map<Path, std::size_t> fromIndex;
    for (std::size_t i = 0; i < fromLines.size(); ++i) {
        const Path& p = fromLines[i];
        fromIndex.emplace(p, i);
        if (std::find(innermost.begin(), innermost.end(), p.back()) == innermost.end()) innermost.push_back(p.back());
        Path prefix(p.begin(), p.end() - 1);
        if (std::find(prefixes.begin(), prefixes.end(), prefix) == prefixes.end()) prefixes.push_back(prefix);
    }

    std::vector<Path> newTo;
    std::vector<std::pair<std::size_t, std::string>> newToSrc;
    for (std::size_t g = 0; g < toLines.size(); ++g) {
        for (const auto& q : innermost) {
            Path p = toLines[g];
            p.push_back(q);
            newTo.push_back(std::move(p));
            newToSrc.emplace_back(g, q);
        }
    }

    Flat out;
    out.rowRoot = f.rowRoot;
    out.colRoot = f.colRoot;
    out.nextDerivedId = f.nextDerivedId;
    out.step = f.step;
    if (fromCol) {
        out.rows = newTo;
        out.cols = prefixes;
    } else {
        out.rows = prefixes;
        out.cols = newTo;
    }
    out.values.resize(out.rows.size() * out.cols.size());
    out.ids.resize(out.values.size());
    for (std::size_t gi = 0; gi < newTo.size(); ++gi) {
        const auto& [g, q] = newToSrc[gi];
        for (std::size_t pi = 0; pi < prefixes.size(); ++pi) {
            Path full = prefixes[pi];
            full.push_back(q);
            auto hit = fromIndex.find(full);
            const std::size_t dst = fromCol ? out.at(gi, pi) : out.at(pi, gi);
            if (hit == fromIndex.end()) continue;  // hole: no value, no id
            const std::size_t src = fromCol ? f.at(g, hit->second) : f.at(hit->second, g);
            out.values[dst] = f.values[src];
            out.ids[dst] = f.ids[src];
        }
    }
    return assemble(std::move(out));
}

}  // namespace

std::string_view to_string(ActionKind a) { return kActionNames[static_cast<std::size_t>(a)]; }

std::optional<ActionKind> action_from_string(std::string_view name) {
    for (int i = 0; i < kActionCount; ++i) {
        if (kActionNames[static_cast<std::size_t>(i)] == name) return action_at(i);
    }
    return std::nullopt;
}

std::string_view to_string(Stage s) { return s == Stage::transform ? "transform" : "select"; }

TableState transpose(const TableState& s) {
    TableState t;
    t.rowTree = s.colTree.withSide(Side::row);
    t.colTree = s.rowTree.withSide(Side::col);
    t.grid = CellGrid(s.grid.cols(), s.grid.rows());
    for (int r = 0; r < s.grid.rows(); ++r) {
        for (int c = 0; c < s.grid.cols(); ++c) {
            t.grid.value(c, r) = s.grid.value(r, c);
            t.grid.cellId(c, r) = s.grid.cellId(r, c);
        }
    }
    t.step = s.step;
    t.nextDerivedId = s.nextDerivedId;
    return t;
}

TableState stack(const TableState& s) { return move_innermost(s, Side::col); }

TableState unstack(const TableState& s) { return move_innermost(s, Side::row); }

TableState swap(const TableState& s, Side side) {
    if (!reshapeable(s.tree(side))) {
        throw Error(ErrorCode::precondition,
                    "swap needs a balanced " + std::string(to_string(side)) + " header with at least two levels");
    }
    Flat f = flatten(s);
    auto& lines = side == Side::row ? f.rows : f.cols;
    for (auto& p : lines) std::swap(p[p.size() - 1], p[p.size() - 2]);
    return assemble(std::move(f));
}

TableState aggregate(const TableState& s, AggregateFn fn) {
    const HeadingTree& rows = s.rowTree;
    const Flat f = flatten(s);
    Flat out = f;
    out.rows.clear();
    out.values.clear();
    out.ids.clear();

    auto copyLine = [&](std::size_t r) {
        out.rows.push_back(f.rows[r]);
        for (std::size_t c = 0; c < f.cols.size(); ++c) {
            out.values.push_back(f.values[f.at(r, c)]);
            out.ids.push_back(f.ids[f.at(r, c)]);
        }
    };

    for (int leafPos = 0; leafPos < rows.leafCount(); ++leafPos) {
        copyLine(static_cast<std::size_t>(leafPos));
        const HeadingNode& leaf = rows.node(rows.leafOrder()[static_cast<std::size_t>(leafPos)]);
        const HeadingNode& parent = rows.node(leaf.parent);
        if (parent.children.back() != leaf.id) continue;
        const bool allLeaves = std::all_of(parent.children.begin(), parent.children.end(),
                                           [&](int k) { return rows.node(k).isLeaf(); });
        const bool hasDerived = std::any_of(parent.children.begin(), parent.children.end(),
                                            [&](int k) { return rows.node(k).label == kAggregateLabel; });
        if (!allLeaves || hasDerived) continue;

        Path derived = rows.path(parent.id);
        derived.emplace_back(kAggregateLabel);
        out.rows.push_back(derived);
        for (std::size_t c = 0; c < f.cols.size(); ++c) {
            double total = 0.0;
            int present = 0;
            for (int k = parent.leafBegin; k < parent.leafEnd; ++k) {
                const auto& v = f.values[f.at(static_cast<std::size_t>(k), c)];
                if (v) {
                    total += *v;
                    ++present;
                }
            }
            if (present == 0) {
                out.values.emplace_back();
            } else {
                out.values.emplace_back(fn == AggregateFn::mean ? total / present : total);
            }
            out.ids.push_back(CellId{out.nextDerivedId++, true});
        }
    }
    return assemble(std::move(out));
}

std::optional<int> selection_target(const TableState& s, ActionKind a) {
    if (is_transform(a)) return std::nullopt;
    const int rel = index_of(a) - index_of(ActionKind::row_up);
    const Side side = rel < 4 ? Side::row : Side::col;
    const HeadingTree& t = s.tree(side);
    const HeadingNode& n = t.node(t.selected());
    switch (rel % 4) {
        case 0:
        case 1: {
            const auto level = t.nodesAtDepth(n.depth);
            const auto pos = std::find(level.begin(), level.end(), n.id) - level.begin();
            const auto next = pos + (rel % 4 == 0 ? -1 : 1);
            if (next < 0 || next >= static_cast<std::ptrdiff_t>(level.size())) return std::nullopt;
            return level[static_cast<std::size_t>(next)];
        }
        case 2:
            if (n.depth <= 0) return std::nullopt;
            return n.parent;
        default:
            if (n.isLeaf()) return std::nullopt;
            return n.children.front();
    }
}

TableState move_selection(const TableState& s, ActionKind a) {
    if (is_transform(a)) throw Error(ErrorCode::illegal_action, "not a selection action");
    auto target = selection_target(s, a);
    if (!target) {
        throw Error(ErrorCode::illegal_action, std::string(to_string(a)) + " would leave the heading tree");
    }
    TableState t = s;
    const Side side = index_of(a) < index_of(ActionKind::col_up) ? Side::row : Side::col;
    t.tree(side).select(*target);
    return t;
}

bool transform_applicable(const TableState& s, ActionKind a) {
    switch (a) {
        case ActionKind::transpose:
        case ActionKind::aggregate: return true;
        case ActionKind::stack: return reshapeable(s.colTree);
        case ActionKind::unstack:
        case ActionKind::swap_row: return reshapeable(s.rowTree);
        case ActionKind::swap_col: return reshapeable(s.colTree);
        default: return false;
    }
}

ActionMask legal_actions(const TableState& s, Stage stage) {
    ActionMask mask{};
    for (int i = 0; i < kActionCount; ++i) {
        const ActionKind a = action_at(i);
        if (is_transform(a)) {
            mask[static_cast<std::size_t>(i)] = stage == Stage::transform && transform_applicable(s, a);
            continue;
        }
        if (stage != Stage::select) continue;
        auto target = selection_target(s, a);
        if (!target) continue;
        const bool rowMove = i < index_of(ActionKind::col_up);
        const Block b = rowMove ? block_for(s, *target, s.colTree.selected()) : block_for(s, s.rowTree.selected(), *target);
        mask[static_cast<std::size_t>(i)] = !overlaps_mask(s, b);
    }
    return mask;
}

TableState permute_lines(const TableState& s, const std::vector<int>& rowOrder, const std::vector<int>& colOrder) {
    const Flat f = flatten(s);
    if (rowOrder.size() != f.rows.size() || colOrder.size() != f.cols.size()) {
        throw Error(ErrorCode::precondition, "line permutation does not match the table shape");
    }
    Flat out;
    out.rowRoot = f.rowRoot;
    out.colRoot = f.colRoot;
    out.nextDerivedId = f.nextDerivedId;
    out.step = f.step;
    for (int r : rowOrder) out.rows.push_back(f.rows.at(static_cast<std::size_t>(r)));
    for (int c : colOrder) out.cols.push_back(f.cols.at(static_cast<std::size_t>(c)));
    for (int r : rowOrder) {
        for (int c : colOrder) {
            const std::size_t src = f.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
            out.values.push_back(f.values[src]);
            out.ids.push_back(f.ids[src]);
        }
    }
    return assemble(std::move(out));
}

TableState apply_action(const TableState& s, ActionKind a) {
    switch (a) {
        case ActionKind::transpose: return transpose(s);
        case ActionKind::aggregate: return aggregate(s);
        case ActionKind::stack: return stack(s);
        case ActionKind::unstack: return unstack(s);
        case ActionKind::swap_row: return swap(s, Side::row);
        case ActionKind::swap_col: return swap(s, Side::col);
        default: return move_selection(s, a);
    }
}

}  // namespace tabsight
