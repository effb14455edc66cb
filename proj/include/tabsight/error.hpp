#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tabsight {

enum class ErrorCode {
    schema,
    ragged_matrix,
    leaf_count_mismatch,
    duplicate_label,
    empty_block,
    precondition,
    insufficient_data,
    illegal_action,
    not_found,
    conflict,
    not_applicable,
    numeric,
    config,
    io,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library. `path` carries a JSON-pointer-like
/// location for schema problems and is empty otherwise.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what, std::string path = {})
        : std::runtime_error(what), code_(code), path_(std::move(path)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& path() const noexcept { return path_; }

private:
    ErrorCode code_;
    std::string path_;
};

}  // namespace tabsight
