#include "rbfvae/rng.hpp"

#include "rbfvae/hash.hpp"

namespace rbfvae {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept {
    return splitmix64(seed ^ fnv1a(stream));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(seed) + index);
}

Rng make_stream(std::uint64_t seed, std::string_view stream) {
    return Rng(derive_seed(seed, stream));
}

double standard_normal(Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

Matrix standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            out(i, j) = dist(rng);
        }
    }
    return out;
}

}  // namespace rbfvae
