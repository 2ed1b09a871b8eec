#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace agealign {

enum class ErrorKind {
    InvalidArgument,
    InvalidNorm,
    InvalidScore,
    Parse,
    UnknownAoa,
    Build,
    Template,
    Auth,
    RateLimit,
    MalformedResponse,
    Transport,
    Provider,
    Sequencing,
    State,
    Incomplete,
    Rank,
    Join,
    Infeasible,
    Dimension,
    Degenerate,
    NotFound,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace agealign
