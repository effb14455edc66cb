#include "tabsight/table.hpp"

#include <algorithm>
#include <set>

namespace tabsight {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::schema: return "schema";
        case ErrorCode::ragged_matrix: return "ragged_matrix";
        case ErrorCode::leaf_count_mismatch: return "leaf_count_mismatch";
        case ErrorCode::duplicate_label: return "duplicate_label";
        case ErrorCode::empty_block: return "empty_block";
        case ErrorCode::precondition: return "precondition";
        case ErrorCode::insufficient_data: return "insufficient_data";
        case ErrorCode::illegal_action: return "illegal_action";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::conflict: return "conflict";
        case ErrorCode::not_applicable: return "not_applicable";
        case ErrorCode::numeric: return "numeric";
        case ErrorCode::config: return "config";
        case ErrorCode::io: return "io";
    }
    return "unknown";
}

std::string_view to_string(Side side) { return side == Side::row ? "row" : "col"; }

// HeadingTree ---------------------------------------------------------------

namespace {

void append_preorder(std::vector<HeadingNode>& nodes, const LabelTree& src, int parent, int depth,
                     const std::string& path) {
    const int id = static_cast<int>(nodes.size());
    HeadingNode n;
    n.id = id;
    n.label = src.label;
    n.parent = parent;
    n.depth = depth;
    nodes.push_back(std::move(n));

    std::set<std::string> seen;
    for (std::size_t i = 0; i < src.children.size(); ++i) {
        const auto& child = src.children[i];
        if (!seen.insert(child.label).second) {
            throw Error(ErrorCode::duplicate_label, "duplicate sibling label '" + child.label + "'",
                        path + "/children/" + std::to_string(i));
        }
        const int childId = static_cast<int>(nodes.size());
        nodes[static_cast<std::size_t>(id)].children.push_back(childId);
        append_preorder(nodes, child, id, depth + 1, path + "/children/" + std::to_string(i));
    }
}

}  // namespace

HeadingTree HeadingTree::build(Side side, const LabelTree& root) {
    if (root.children.empty()) {
        throw Error(ErrorCode::schema, "heading tree needs at least one entry", "/children");
    }
    HeadingTree t;
    t.side_ = side;
    append_preorder(t.nodes_, root, -1, -1, "");

    // Leaf spans: children were appended after their parent, so a reverse sweep
    // sees every child before its parent.
    int nextLeaf = 0;
    for (auto& n : t.nodes_) {
        if (n.isLeaf()) {
            n.leafBegin = nextLeaf;
            n.leafEnd = ++nextLeaf;
            t.leafOrder_.push_back(n.id);
        }
    }
    for (auto it = t.nodes_.rbegin(); it != t.nodes_.rend(); ++it) {
        if (!it->isLeaf()) {
            it->leafBegin = t.nodes_[static_cast<std::size_t>(it->children.front())].leafBegin;
            it->leafEnd = t.nodes_[static_cast<std::size_t>(it->children.back())].leafEnd;
        }
    }

    int minDepth = 1 << 30;
    int maxDepth = -1;
    for (int leaf : t.leafOrder_) {
        minDepth = std::min(minDepth, t.nodes_[static_cast<std::size_t>(leaf)].depth);
        maxDepth = std::max(maxDepth, t.nodes_[static_cast<std::size_t>(leaf)].depth);
    }
    t.levels_ = maxDepth + 1;
    t.balanced_ = minDepth == maxDepth;
    t.selected_ = t.firstEntry();
    return t;
}

Selection HeadingTree::selection(int id) const {
    if (id != selected_) return Selection::unselected;
    return side_ == Side::row ? Selection::selected_row : Selection::selected_col;
}

void HeadingTree::select(int id) {
    if (id <= 0 || id >= size()) {
        throw Error(ErrorCode::precondition, "selection must be a non-virtual node");
    }
    selected_ = id;
}

std::vector<std::string> HeadingTree::path(int id) const {
    std::vector<std::string> out;
    for (int cur = id; cur > 0; cur = node(cur).parent) out.push_back(node(cur).label);
    std::reverse(out.begin(), out.end());
    return out;
}

std::optional<int> HeadingTree::find(const std::vector<std::string>& labels) const {
    int cur = 0;
    for (const auto& label : labels) {
        const auto& kids = node(cur).children;
        auto it = std::find_if(kids.begin(), kids.end(), [&](int k) { return node(k).label == label; });
        if (it == kids.end()) return std::nullopt;
        cur = *it;
    }
    if (cur == 0) return std::nullopt;
    return cur;
}

std::vector<int> HeadingTree::nodesAtDepth(int depth) const {
    std::vector<int> out;
    for (const auto& n : nodes_) {
        if (n.depth == depth) out.push_back(n.id);
    }
    return out;
}

LabelTree HeadingTree::labels() const {
    // Preorder storage lets us rebuild bottom-up in one reverse pass.
    std::vector<LabelTree> built(nodes_.size());
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        auto& lt = built[static_cast<std::size_t>(it->id)];
        lt.label = it->label;
        for (int c : it->children) lt.children.push_back(std::move(built[static_cast<std::size_t>(c)]));
    }
    return std::move(built.front());
}

HeadingTree HeadingTree::withSide(Side side) const {
    HeadingTree t = *this;
    t.side_ = side;
    return t;
}

bool HeadingTree::operator==(const HeadingTree& other) const {
    if (side_ != other.side_ || selected_ != other.selected_ || nodes_.size() != other.nodes_.size()) return false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& a = nodes_[i];
        const auto& b = other.nodes_[i];
        if (a.label != b.label || a.parent != b.parent || a.children != b.children) return false;
    }
    return true;
}

// CellGrid ------------------------------------------------------------------

CellGrid::CellGrid(int rows, int cols)
    : rows_(rows),
      cols_(cols),
      values_(static_cast<std::size_t>(rows * cols)),
      ids_(static_cast<std::size_t>(rows * cols)),
      viz_(static_cast<std::size_t>(rows * cols), kNoInsight) {}

void CellGrid::clearViz() { std::fill(viz_.begin(), viz_.end(), kNoInsight); }

// TableState ----------------------------------------------------------------

void TableState::validate() const {
    if (rowTree.side() != Side::row || colTree.side() != Side::col) {
        throw Error(ErrorCode::precondition, "heading trees are attached to the wrong side");
    }
    if (rowTree.leafCount() != grid.rows() || colTree.leafCount() != grid.cols()) {
        throw Error(ErrorCode::leaf_count_mismatch, "leaf counts do not match the grid shape");
    }
    std::vector<CellId> ids;
    for (int r = 0; r < grid.rows(); ++r) {
        for (int c = 0; c < grid.cols(); ++c) {
            if (grid.cellId(r, c).valid()) ids.push_back(grid.cellId(r, c));
        }
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw Error(ErrorCode::precondition, "duplicate cell id");
    }
}

// Ingestion -----------------------------------------------------------------

namespace {

LabelTree parse_node(const nlohmann::json& j, const std::string& path) {
    if (!j.is_object()) throw Error(ErrorCode::schema, "heading node must be an object", path);
    auto label = j.find("label");
    if (label == j.end() || !label->is_string()) {
        throw Error(ErrorCode::schema, "heading node needs a string label", path + "/label");
    }
    LabelTree out;
    out.label = label->get<std::string>();
    if (auto kids = j.find("children"); kids != j.end()) {
        if (!kids->is_array()) throw Error(ErrorCode::schema, "children must be an array", path + "/children");
        for (std::size_t i = 0; i < kids->size(); ++i) {
            out.children.push_back(parse_node((*kids)[i], path + "/children/" + std::to_string(i)));
        }
    }
    return out;
}

nlohmann::json node_json(const LabelTree& t) {
    nlohmann::json kids = nlohmann::json::array();
    for (const auto& c : t.children) kids.push_back(node_json(c));
    return {{"label", t.label}, {"children", std::move(kids)}};
}

}  // namespace

TableState make_table(const LabelTree& rows, const LabelTree& cols, const std::vector<std::vector<CellValue>>& values) {
    TableState s;
    s.rowTree = HeadingTree::build(Side::row, rows);
    s.colTree = HeadingTree::build(Side::col, cols);
    const int R = static_cast<int>(values.size());
    const int C = R > 0 ? static_cast<int>(values.front().size()) : 0;
    for (int r = 0; r < R; ++r) {
        if (static_cast<int>(values[static_cast<std::size_t>(r)].size()) != C) {
            throw Error(ErrorCode::ragged_matrix, "values matrix is ragged", "/values/" + std::to_string(r));
        }
    }
    if (R != s.rowTree.leafCount() || C != s.colTree.leafCount()) {
        throw Error(ErrorCode::leaf_count_mismatch,
                    "values matrix is " + std::to_string(R) + "x" + std::to_string(C) + " but trees have " +
                        std::to_string(s.rowTree.leafCount()) + "x" + std::to_string(s.colTree.leafCount()) +
                        " leaves",
                    "/values");
    }
    s.grid = CellGrid(R, C);
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            s.grid.value(r, c) = values[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            s.grid.cellId(r, c) = CellId{r * C + c, false};
        }
    }
    return s;
}

TableState parse_table(const nlohmann::json& doc) {
    if (!doc.is_object()) throw Error(ErrorCode::schema, "document must be an object", "");
    for (const char* key : {"rowTree", "colTree", "values"}) {
        if (!doc.contains(key)) throw Error(ErrorCode::schema, std::string("missing key '") + key + "'", std::string("/") + key);
    }
    const LabelTree rows = parse_node(doc.at("rowTree"), "/rowTree");
    const LabelTree cols = parse_node(doc.at("colTree"), "/colTree");
    const auto& vals = doc.at("values");
    if (!vals.is_array()) throw Error(ErrorCode::schema, "values must be an array of rows", "/values");
    std::vector<std::vector<CellValue>> matrix;
    for (std::size_t r = 0; r < vals.size(); ++r) {
        const auto& row = vals[r];
        const std::string rowPath = "/values/" + std::to_string(r);
        if (!row.is_array()) throw Error(ErrorCode::schema, "values row must be an array", rowPath);
        auto& out = matrix.emplace_back();
        for (std::size_t c = 0; c < row.size(); ++c) {
            const auto& v = row[c];
            if (v.is_null()) {
                out.emplace_back();
            } else if (v.is_number()) {
                out.emplace_back(v.get<double>());
            } else {
                throw Error(ErrorCode::schema, "cell must be a number or null", rowPath + "/" + std::to_string(c));
            }
        }
    }
    return make_table(rows, cols, matrix);
}

TableState parse_table(std::string_view document) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(document);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::schema, std::string("malformed JSON: ") + e.what(), "");
    }
    return parse_table(doc);
}

nlohmann::json serialize_table(const TableState& s) {
    nlohmann::json values = nlohmann::json::array();
    for (int r = 0; r < s.grid.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < s.grid.cols(); ++c) {
            const auto& v = s.grid.value(r, c);
            if (v) row.push_back(*v); else row.push_back(nullptr);
        }
        values.push_back(std::move(row));
    }
    nlohmann::json doc;
    doc["rowTree"] = node_json(s.rowTree.labels());
    doc["colTree"] = node_json(s.colTree.labels());
    doc["values"] = std::move(values);
    return doc;
}

std::string serialize_table_text(const TableState& s) { return serialize_table(s).dump(); }

// Blocks --------------------------------------------------------------------

Block block_for(const TableState& s, int rowEntry, int colEntry) {
    if (rowEntry <= 0 || rowEntry >= s.rowTree.size() || colEntry <= 0 || colEntry >= s.colTree.size()) {
        throw Error(ErrorCode::not_found, "block entries must be non-virtual nodes of their trees");
    }
    const auto& rn = s.rowTree.node(rowEntry);
    const auto& cn = s.colTree.node(colEntry);
    return Block{rowEntry, colEntry, rn.leafBegin, rn.leafEnd, cn.leafBegin, cn.leafEnd};
}

Block resolve_block(const TableState& s) { return block_for(s, s.rowTree.selected(), s.colTree.selected()); }

std::vector<std::vector<CellValue>> block_values(const TableState& s, const Block& b) {
    std::vector<std::vector<CellValue>> out;
    bool any = false;
    for (int r = b.rowBegin; r < b.rowEnd; ++r) {
        auto& row = out.emplace_back();
        for (int c = b.colBegin; c < b.colEnd; ++c) {
            row.push_back(s.grid.value(r, c));
            any = any || row.back().has_value();
        }
    }
    if (!any) throw Error(ErrorCode::empty_block, "block contains only missing cells");
    return out;
}

bool overlaps_mask(const TableState& s, const Block& b) {
    for (int r = b.rowBegin; r < b.rowEnd; ++r) {
        for (int c = b.colBegin; c < b.colEnd; ++c) {
            if (s.grid.viz(r, c) != kNoInsight) return true;
        }
    }
    return false;
}

}  // namespace tabsight
