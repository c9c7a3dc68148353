#include "rbfvae/hash.hpp"

#include <cstring>

namespace rbfvae {

namespace {
constexpr std::uint64_t fnv_prime = 0x100000001b3ULL;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state) noexcept {
    for (unsigned char c : bytes) {
        state ^= c;
        state *= fnv_prime;
    }
    return state;
}

std::uint64_t fnv1a(std::span<const double> values, std::uint64_t state) noexcept {
    for (double v : values) {
        unsigned char raw[sizeof(double)];
        std::memcpy(raw, &v, sizeof(double));
        for (unsigned char c : raw) {
            state ^= c;
            state *= fnv_prime;
        }
    }
    return state;
}

std::string to_hex(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

}  // namespace rbfvae
