#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tabsight/error.hpp"

namespace tabsight {

enum class Side { row, col };
enum class Selection { unselected, selected_row, selected_col };

std::string_view to_string(Side side);
inline Side opposite(Side s) { return s == Side::row ? Side::col : Side::row; }

/// Nested label structure used to build trees and to (de)serialize them.
struct LabelTree {
    std::string label;
    std::vector<LabelTree> children;

    bool operator==(const LabelTree&) const = default;
};

struct HeadingNode {
    int id = 0;  // preorder index inside its tree, 0 is the virtual root
    std::string label;
    int parent = -1;
    std::vector<int> children;
    int depth = -1;  // virtual root is -1, outermost entries are 0
    int leafBegin = 0;  // leaf span [leafBegin, leafEnd) in the current layout
    int leafEnd = 0;

    bool isLeaf() const { return children.empty(); }
};

/// One side of the table header. Nodes are stored in preorder so node ids are
/// reproducible from the label structure alone.
class HeadingTree {
public:
    HeadingTree() = default;
    static HeadingTree build(Side side, const LabelTree& root);

    Side side() const { return side_; }
    int size() const { return static_cast<int>(nodes_.size()); }
    const HeadingNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
    const HeadingNode& root() const { return nodes_.front(); }
    const std::vector<HeadingNode>& nodes() const { return nodes_; }

    const std::vector<int>& leafOrder() const { return leafOrder_; }
    int leafCount() const { return static_cast<int>(leafOrder_.size()); }

    int selected() const { return selected_; }
    Selection selection(int id) const;
    void select(int id);

    /// Top-left entry: first child of the virtual root.
    int firstEntry() const { return root().children.front(); }

    /// Number of header levels (deepest leaf depth + 1).
    int levels() const { return levels_; }
    /// True when every leaf sits at the same depth.
    bool balanced() const { return balanced_; }

    /// Labels from the outermost entry down to `id` (root excluded).
    std::vector<std::string> path(int id) const;
    /// Node id reached by following `labels` from the root, if any.
    std::optional<int> find(const std::vector<std::string>& labels) const;

    /// Nodes at `depth` in preorder, which is also their left-to-right order.
    std::vector<int> nodesAtDepth(int depth) const;

    LabelTree labels() const;
    HeadingTree withSide(Side side) const;

    bool operator==(const HeadingTree& other) const;

private:
    Side side_ = Side::row;
    std::vector<HeadingNode> nodes_;
    std::vector<int> leafOrder_;
    int selected_ = 0;
    int levels_ = 0;
    bool balanced_ = true;
};

/// Immutable cell identifier. Original cells are numbered row-major at
/// ingestion; cells derived by aggregation carry the derived flag; holes
/// created by reshaping carry no id at all.
struct CellId {
    std::int32_t value = -1;
    bool derived = false;

    bool valid() const { return value >= 0; }
    bool operator==(const CellId&) const = default;
    auto operator<=>(const CellId&) const = default;
};

using CellValue = std::optional<double>;
inline constexpr int kNoInsight = -1;

class CellGrid {
public:
    CellGrid() = default;
    CellGrid(int rows, int cols);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int size() const { return rows_ * cols_; }

    const CellValue& value(int r, int c) const { return values_[index(r, c)]; }
    CellValue& value(int r, int c) { return values_[index(r, c)]; }
    const CellId& cellId(int r, int c) const { return ids_[index(r, c)]; }
    CellId& cellId(int r, int c) { return ids_[index(r, c)]; }
    int viz(int r, int c) const { return viz_[index(r, c)]; }
    void setViz(int r, int c, int insightId) { viz_[index(r, c)] = insightId; }
    void clearViz();

    bool operator==(const CellGrid&) const = default;

private:
    std::size_t index(int r, int c) const {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
    }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<CellValue> values_;
    std::vector<CellId> ids_;
    std::vector<int> viz_;
};

struct TableState {
    HeadingTree rowTree;
    HeadingTree colTree;
    CellGrid grid;
    int step = 0;
    std::int32_t nextDerivedId = 0;

    const HeadingTree& tree(Side s) const { return s == Side::row ? rowTree : colTree; }
    HeadingTree& tree(Side s) { return s == Side::row ? rowTree : colTree; }

    /// Throws on any violated structural invariant.
    void validate() const;

    bool operator==(const TableState&) const = default;
};

struct Block {
    int rowEntry = 0;
    int colEntry = 0;
    int rowBegin = 0;
    int rowEnd = 0;
    int colBegin = 0;
    int colEnd = 0;

    int rowCount() const { return rowEnd - rowBegin; }
    int colCount() const { return colEnd - colBegin; }
    int cellCount() const { return rowCount() * colCount(); }
    bool contains(int r, int c) const { return r >= rowBegin && r < rowEnd && c >= colBegin && c < colEnd; }
    bool sameShape(const Block& o) const { return rowCount() == o.rowCount() && colCount() == o.colCount(); }

    bool operator==(const Block&) const = default;
};

// Ingestion / egress --------------------------------------------------------

TableState parse_table(std::string_view document);
TableState parse_table(const nlohmann::json& document);
nlohmann::json serialize_table(const TableState& state);
std::string serialize_table_text(const TableState& state);

/// Builds a state from label trees plus a value matrix; cell ids numbered row-major.
TableState make_table(const LabelTree& rows, const LabelTree& cols, const std::vector<std::vector<CellValue>>& values);

// Blocks --------------------------------------------------------------------

Block block_for(const TableState& state, int rowEntry, int colEntry);
Block resolve_block(const TableState& state);

/// Block cells in row-major order; missing cells stay empty optionals.
std::vector<std::vector<CellValue>> block_values(const TableState& state, const Block& block);

bool overlaps_mask(const TableState& state, const Block& block);

}  // namespace tabsight
