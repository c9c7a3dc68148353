#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rbfvae {

enum class ErrorKind {
    usage,
    dimension,
    config,
    schema,
    data,
    gap,
    insufficient_data,
    lookup,
    stale_cache,
    size,
    io,
    numeric,
    training,
};

const char* to_string(ErrorKind kind) noexcept;

/// CLI exit status for an error kind: 1 usage, 2 data/config, 3 numeric/training.
int exit_code(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Raised by CSV ingestion when timestamps are missing or duplicated.
/// `hour` is the 0-based hour index that was expected but not found.
class GapError : public Error {
public:
    GapError(std::size_t hour, std::size_t line, const std::string& message);

    std::size_t hour() const noexcept { return hour_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t hour_;
    std::size_t line_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace rbfvae
