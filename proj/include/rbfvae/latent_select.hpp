#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rbfvae/types.hpp"

namespace rbfvae::latent {

inline constexpr double variance_floor = 1e-6;

/// Diagonal Gaussian posteriors (mu_n, sigma^2_n) of the training observations, each tied
/// to the historical week whose hourly profile it stands for. Immutable once built.
class LatentPosteriorStore {
public:
    LatentPosteriorStore() = default;

    /// Variances are floored at `variance_floor`.
    LatentPosteriorStore(Matrix mus, Matrix vars, std::vector<std::size_t> week_refs);

    std::size_t size() const { return week_refs_.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(mus_.cols()); }
    bool empty() const { return week_refs_.empty(); }

    const Matrix& mus() const { return mus_; }
    const Matrix& vars() const { return vars_; }
    const std::vector<std::size_t>& week_refs() const { return week_refs_; }

private:
    Matrix mus_;
    Matrix vars_;
    std::vector<std::size_t> week_refs_;
};

/// D^2 = sum_j (z_j - mu_j)^2 / var_j
double mahalanobis_sq(std::span<const double> z, std::span<const double> mu, std::span<const double> var);

struct Selection {
    std::size_t index = 0;
    std::size_t week_ref = 0;
    double min_distance_sq = 0.0;
    double second_distance_sq = 0.0;  // +inf when the store holds one posterior

    double margin() const { return second_distance_sq - min_distance_sq; }
};

/// Exhaustive scan for the posterior nearest to z; ties go to the lowest index.
Selection select_profile(const LatentPosteriorStore& store, std::span<const double> z);

}  // namespace rbfvae::latent
