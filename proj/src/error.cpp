#include "rbfvae/error.hpp"

namespace rbfvae {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::usage: return "usage";
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::config: return "config";
        case ErrorKind::schema: return "schema";
        case ErrorKind::data: return "data";
        case ErrorKind::gap: return "gap";
        case ErrorKind::insufficient_data: return "insufficient_data";
        case ErrorKind::lookup: return "lookup";
        case ErrorKind::stale_cache: return "stale_cache";
        case ErrorKind::size: return "size";
        case ErrorKind::io: return "io";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::training: return "training";
    }
    return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::usage:
        case ErrorKind::dimension:
            return 1;
        case ErrorKind::numeric:
        case ErrorKind::training:
            return 3;
        default:
            return 2;
    }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

GapError::GapError(std::size_t hour, std::size_t line, const std::string& message)
    : Error(ErrorKind::gap, message), hour_(hour), line_(line) {}

void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace rbfvae
