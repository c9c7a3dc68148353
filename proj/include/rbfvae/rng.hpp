#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "rbfvae/types.hpp"

namespace rbfvae {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Independent seed for a named stream ("init", "shuffle", "epsilon", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept;

/// Independent seed for an indexed substream (one per scenario, per candidate, ...).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

Rng make_stream(std::uint64_t seed, std::string_view stream);

/// Fills a [rows x cols] matrix with N(0, 1) draws in row-major order.
Matrix standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols);

double standard_normal(Rng& rng);

}  // namespace rbfvae
