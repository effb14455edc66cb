#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "tabsight/table.hpp"

namespace tabsight {

enum class ActionKind {
    transpose,
    aggregate,
    stack,
    unstack,
    swap_row,
    swap_col,
    row_up,
    row_down,
    row_left,
    row_right,
    col_up,
    col_down,
    col_left,
    col_right,
};

inline constexpr int kActionCount = 14;
inline constexpr int kTransformActionCount = 6;
inline constexpr int kSelectActionCount = 8;

enum class Stage { transform, select };

using ActionMask = std::array<bool, kActionCount>;

std::string_view to_string(ActionKind a);
std::optional<ActionKind> action_from_string(std::string_view name);
inline int index_of(ActionKind a) { return static_cast<int>(a); }
inline ActionKind action_at(int i) { return static_cast<ActionKind>(i); }
inline bool is_transform(ActionKind a) { return index_of(a) < kTransformActionCount; }
std::string_view to_string(Stage s);

/// Label used for rows derived by `aggregate`.
inline constexpr std::string_view kAggregateLabel = "__avg__";

enum class AggregateFn { mean, sum };

ActionMask legal_actions(const TableState& state, Stage stage);
bool transform_applicable(const TableState& state, ActionKind action);

TableState transpose(const TableState& state);
TableState stack(const TableState& state);
TableState unstack(const TableState& state);
TableState swap(const TableState& state, Side side);
TableState aggregate(const TableState& state, AggregateFn fn = AggregateFn::mean);
TableState move_selection(const TableState& state, ActionKind action);

/// Target node of a selection move, or nullopt when the move leaves the tree.
std::optional<int> selection_target(const TableState& state, ActionKind action);

/// Re-derives the layout after visiting leaf lines in the given orders; the
/// resulting sibling order is the order of first appearance.
TableState permute_lines(const TableState& state, const std::vector<int>& rowOrder, const std::vector<int>& colOrder);

/// Dispatches any of the 14 actions (agent parametrization).
TableState apply_action(const TableState& state, ActionKind action);

}  // namespace tabsight
