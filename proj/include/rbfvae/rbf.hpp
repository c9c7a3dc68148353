#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rbfvae/nn.hpp"
#include "rbfvae/types.hpp"

namespace rbfvae::rbf {

/// Process-wide count of kernel evaluations (one per input row x center).
std::uint64_t kernel_evaluations() noexcept;
void reset_kernel_evaluations() noexcept;

/// K(x, y) = exp(-gamma * ||x - y||^2)
double kernel(std::span<const double> x, std::span<const double> y, double gamma);

/// Kernel feature layer. Centers are rows of `centers()`; gamma is fixed for a training run,
/// which is what makes feature precomputation valid.
class RbfLayer {
public:
    RbfLayer(Matrix centers, double gamma);

    const Matrix& centers() const { return centers_; }
    double gamma() const { return gamma_; }
    std::size_t n_centers() const { return static_cast<std::size_t>(centers_.rows()); }
    std::size_t input_width() const { return static_cast<std::size_t>(centers_.cols()); }

    void set_gamma(double gamma);
    void set_centers(Matrix centers);

    /// Hash of gamma and centers; the cache is valid only while it is unchanged.
    std::uint64_t fingerprint() const noexcept;

    bool has_cache() const { return cache_.has_value(); }

    /// Features of the data passed to `precompute_features`. Throws a stale-cache error
    /// when gamma or the centers changed since.
    const Matrix& cached_features() const;

private:
    friend const Matrix& precompute_features(RbfLayer& layer, const Matrix& training);

    struct Cache {
        Matrix features;
        std::uint64_t fingerprint;
    };

    Matrix centers_;
    double gamma_;
    std::optional<Cache> cache_;
};

/// feature[b][i] = exp(-gamma * ||x_b - c_i||^2), values in (0, 1] unless they underflow.
Matrix rbf_features(const RbfLayer& layer, const Matrix& x);

/// Computes the training features once and stores them on the layer.
const Matrix& precompute_features(RbfLayer& layer, const Matrix& training);

/// All training rows when there are at most `cap`, otherwise a seeded uniform subsample
/// without replacement (kept in original row order).
Matrix select_centers(const Matrix& training, std::size_t cap, std::uint64_t seed);

/// Median of squared Euclidean distances over all unordered row pairs.
double median_pairwise_sq_distance(const Matrix& data);

inline const std::vector<double> default_gamma_multipliers = {0.01, 0.1, 1.0, 10.0, 100.0};

/// Multipliers scaled by 1 / median pairwise squared distance.
std::vector<double> gamma_grid(const Matrix& training, std::span<const double> multipliers);

struct InverseNetConfig {
    std::size_t epochs = 600;
    std::size_t batch_size = 16;
    double learning_rate = 3e-3;
    std::uint64_t seed = 1;
};

/// Regressor from kernel features back to the original variables. Hidden layers are
/// 2 * n_plants wide with ReLU; the output is sigmoid so it stays in [0, 1].
struct InverseNet {
    nn::Stack stack;
    double final_loss = 0.0;
    std::size_t epochs = 0;
};

/// MSE fit of features -> observations on the layer's cached training features.
InverseNet train_inverse_net(const RbfLayer& layer, const Matrix& training, const InverseNetConfig& config);

}  // namespace rbfvae::rbf
