#include "rbfvae/latent_select.hpp"

#include <limits>
#include <string>

#include "rbfvae/error.hpp"

namespace rbfvae::latent {

LatentPosteriorStore::LatentPosteriorStore(Matrix mus, Matrix vars, std::vector<std::size_t> week_refs)
    : mus_(std::move(mus)), vars_(std::move(vars)), week_refs_(std::move(week_refs)) {
    if (mus_.rows() != vars_.rows() || mus_.cols() != vars_.cols() ||
        static_cast<std::size_t>(mus_.rows()) != week_refs_.size()) {
        fail(ErrorKind::dimension, "posterior store: mus, vars and week_refs disagree in shape");
    }
    if (!mus_.allFinite() || !vars_.allFinite()) {
        fail(ErrorKind::numeric, "posterior store: non-finite posterior parameters");
    }
    vars_ = vars_.cwiseMax(variance_floor);
}

double mahalanobis_sq(std::span<const double> z, std::span<const double> mu, std::span<const double> var) {
    if (z.size() != mu.size() || z.size() != var.size()) {
        fail(ErrorKind::dimension, "mahalanobis: latent dimension mismatch");
    }
    double d2 = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        const double diff = z[j] - mu[j];
        d2 += diff * diff / var[j];
    }
    return d2;
}

Selection select_profile(const LatentPosteriorStore& store, std::span<const double> z) {
    if (store.empty()) fail(ErrorKind::usage, "select_profile: posterior store is empty");
    if (z.size() != store.dim()) {
        fail(ErrorKind::dimension, "select_profile: latent point has dimension " + std::to_string(z.size()) +
                                       ", store has " + std::to_string(store.dim()));
    }
    Selection best;
    best.min_distance_sq = std::numeric_limits<double>::infinity();
    best.second_distance_sq = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < store.size(); ++n) {
        const auto idx = static_cast<Eigen::Index>(n);
        const double d2 = mahalanobis_sq(z, row_span(store.mus(), idx), row_span(store.vars(), idx));
        if (d2 < best.min_distance_sq) {
            best.second_distance_sq = best.min_distance_sq;
            best.min_distance_sq = d2;
            best.index = n;
        } else if (d2 < best.second_distance_sq) {
            best.second_distance_sq = d2;
        }
    }
    best.week_ref = store.week_refs()[best.index];
    return best;
}

}  // namespace rbfvae::latent
