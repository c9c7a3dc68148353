#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "rbfvae/error.hpp"

namespace rbfvae::cli {

/// Environment variable naming the directory used when --out is omitted.
inline constexpr const char* output_root_env = "RBFVAE_OUTPUT_ROOT";

std::filesystem::path default_output_root();

/// `error: kind=<kind> message="<escaped message>"`
std::string format_error(const Error& error);

/// Runs one command; `args` excludes the program name. Returns the process exit code:
/// 0 success, 1 usage, 2 data/config, 3 numeric/training.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rbfvae::cli
