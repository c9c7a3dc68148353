#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "helpers.hpp"
#include "rbfvae/error.hpp"
#include "rbfvae/latent_select.hpp"

using namespace rbfvae;
using namespace rbfvae::latent;

namespace {

std::vector<double> v(std::initializer_list<double> xs) { return xs; }

LatentPosteriorStore store_of(const Matrix& mus, const Matrix& vars) {
    std::vector<std::size_t> refs;
    for (Eigen::Index r = 0; r < mus.rows(); ++r) refs.push_back(100 + static_cast<std::size_t>(r));
    return {mus, vars, refs};
}

}  // namespace

TEST_SUITE("latent_select") {

TEST_CASE("Mahalanobis reference values") {
    CHECK(mahalanobis_sq(v({0.3, -2.0}), v({0.3, -2.0}), v({0.5, 2.0})) == 0.0);
    CHECK(std::abs(mahalanobis_sq(v({1, 1}), v({0, 0}), v({1, 1})) - 2.0) <= 1e-12);
    CHECK(std::abs(mahalanobis_sq(v({2, 0}), v({0, 0}), v({4, 1})) - 1.0) <= 1e-12);
    CHECK_THROWS_AS(mahalanobis_sq(v({1, 1}), v({0}), v({1, 1})), Error);
}

TEST_CASE("nearest posterior is selected, exact match wins") {
    Matrix mus(3, 1);
    mus << 0.0, 5.0, 1.0;
    const auto store = store_of(mus, Matrix::Ones(3, 1));
    // distances: d3 = 0.04 < d1 = 1.44 < d2 = 14.44
    const auto sel = select_profile(store, v({1.2}));
    CHECK(sel.index == 2);
    CHECK(sel.week_ref == 102);
    CHECK(std::abs(sel.min_distance_sq - 0.04) <= 1e-12);
    CHECK(std::abs(sel.second_distance_sq - 1.44) <= 1e-12);
    CHECK(sel.margin() > 0.0);
    CHECK(select_profile(store, v({5.0})).index == 1);
    CHECK(select_profile(store, v({5.0})).min_distance_sq == 0.0);
}

TEST_CASE("ties go to the lowest index; single posterior has infinite runner-up") {
    Matrix mus(3, 1);
    mus << -1.0, 1.0, -1.0;
    const auto store = store_of(mus, Matrix::Ones(3, 1));
    CHECK(select_profile(store, v({0.0})).index == 0);
    const auto single = store_of(Matrix::Zero(1, 2), Matrix::Ones(1, 2));
    CHECK(std::isinf(select_profile(single, v({1, 1})).second_distance_sq));
}

TEST_CASE("variances are floored") {
    Matrix vars(1, 2);
    vars << 0.0, 1e-9;
    const auto store = store_of(Matrix::Zero(1, 2), vars);
    CHECK(store.vars().minCoeff() == variance_floor);
    CHECK(std::isfinite(select_profile(store, v({1, 1})).min_distance_sq));
}

TEST_CASE("errors") {
    try {
        select_profile(LatentPosteriorStore{}, v({0}));
        FAIL("expected usage error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::usage);
    }
    const auto store = store_of(Matrix::Zero(2, 3), Matrix::Ones(2, 3));
    try {
        select_profile(store, v({0, 0}));
        FAIL("expected dimension error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::dimension);
    }
    CHECK_THROWS_AS(LatentPosteriorStore(Matrix::Zero(2, 3), Matrix::Ones(2, 2), {0, 1}), Error);
    CHECK_THROWS_AS(LatentPosteriorStore(Matrix::Zero(2, 3), Matrix::Ones(2, 3), {0}), Error);
}

TEST_CASE("selection equals brute-force argmin on random stores") {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> n_dist(1, 50), d_dist(1, 8), coin(0, 3);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = n_dist(rng);
        const int d = d_dist(rng);
        Matrix mus = testing::uniform_matrix(rng, n, d, -2.0, 2.0);
        const Matrix vars = testing::uniform_matrix(rng, n, d, 0.05, 3.0);
        // Duplicate rows create exact ties.
        if (n > 2 && coin(rng) == 0) mus.row(n - 1) = mus.row(0);
        Matrix z = testing::uniform_matrix(rng, 1, d, -2.0, 2.0);
        if (coin(rng) == 0) z.row(0) = mus.row(n / 2);
        const auto store = store_of(mus, vars);

        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
            double acc = 0.0;
            for (Eigen::Index j = 0; j < d; ++j) acc += (z(0, j) - mus(i, j)) * (z(0, j) - mus(i, j)) / vars(i, j);
            if (acc < best_d) {
                best_d = acc;
                best = static_cast<std::size_t>(i);
            }
        }
        const auto sel = select_profile(store, row_span(z, 0));
        CAPTURE(trial);
        CHECK(sel.index == best);
        CHECK(sel.min_distance_sq == doctest::Approx(best_d).epsilon(1e-12));
    }
}

}
