#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "rbfvae/error.hpp"
#include "rbfvae/stats.hpp"

using namespace rbfvae;
using namespace rbfvae::stats;

namespace {

// sup over all sample points of |F_a(t) - F_b(t)|, counting by brute force.
double brute_ks(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> points = a;
    points.insert(points.end(), b.begin(), b.end());
    double best = 0.0;
    for (double t : points) {
        const double fa = static_cast<double>(std::count_if(a.begin(), a.end(), [&](double x) { return x <= t; })) /
                          static_cast<double>(a.size());
        const double fb = static_cast<double>(std::count_if(b.begin(), b.end(), [&](double x) { return x <= t; })) /
                          static_cast<double>(b.size());
        best = std::max(best, std::abs(fa - fb));
    }
    return best;
}

std::vector<double> draw(std::mt19937_64& rng, std::size_t n, bool coarse) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> k(0, 6);
    std::vector<double> out(n);
    for (auto& x : out) x = coarse ? k(rng) : u(rng);
    return out;
}

std::vector<std::string> ids(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("p" + std::to_string(i));
    return out;
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("KS statistic equals the brute-force ECDF sup") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::size_t> size(5, 20);
    for (int trial = 0; trial < 2000; ++trial) {
        // Coarse draws produce ties within and across samples.
        const bool coarse = trial % 2 == 0;
        const auto a = draw(rng, size(rng), coarse);
        const auto b = draw(rng, size(rng), coarse);
        const auto r = ks_two_sample(a, b);
        CAPTURE(trial);
        CHECK(r.statistic == brute_ks(a, b));
        CHECK(r.n == a.size());
        CHECK(r.m == b.size());
        CHECK(r.p_value >= 0.0);
        CHECK(r.p_value <= 1.0);
    }
}

TEST_CASE("identical and disjoint samples") {
    const std::vector<double> a = {0.3, 0.1, 0.7, 0.7, 0.2};
    const auto same = ks_two_sample(a, a);
    CHECK(same.statistic == 0.0);
    CHECK(same.p_value == 1.0);
    const std::vector<double> b = {1.1, 1.2, 1.3, 1.4, 1.5, 1.6};
    const auto apart = ks_two_sample(a, b);
    CHECK(apart.statistic == 1.0);
    CHECK(apart.p_value < 0.01);
    CHECK_THROWS_AS(ks_two_sample(std::vector<double>{1, 2, 3, 4}, b), Error);
}

TEST_CASE("KS is symmetric and invariant under increasing transforms") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = draw(rng, 15, false);
        const auto b = draw(rng, 12, false);
        auto ta = a, tb = b;
        for (auto& x : ta) x = std::exp(3.0 * x) - 2.0;
        for (auto& x : tb) x = std::exp(3.0 * x) - 2.0;
        const auto r = ks_two_sample(a, b);
        CHECK(ks_two_sample(b, a).statistic == r.statistic);
        CHECK(ks_two_sample(b, a).p_value == r.p_value);
        CHECK(ks_two_sample(ta, tb).statistic == r.statistic);
    }
}

TEST_CASE("p-value is non-increasing in D and matches reference points") {
    for (std::size_t n : {5u, 30u, 520u}) {
        double prev = 1.0;
        for (int i = 0; i <= 1000; ++i) {
            const double p = ks_p_value(i / 1000.0, n, 10400);
            CHECK(p <= prev + 1e-15);
            prev = p;
        }
    }
    CHECK(kolmogorov_survival(0.0) == 1.0);
    // Both branches of the survival function, against the alternating series summed far out.
    for (double lambda : {0.3, 0.8, 1.17, 1.19, 1.36, 2.0}) {
        double s = 0.0;
        for (int k = 1; k < 2000; ++k) s += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
        CHECK(kolmogorov_survival(lambda) == doctest::Approx(std::clamp(s, 0.0, 1.0)).epsilon(1e-10));
    }
    CHECK(kolmogorov_survival(1.358) == doctest::Approx(0.05).epsilon(1e-2));
}

TEST_CASE("battery pass rate, plant matching and hourly subsampling") {
    std::mt19937_64 rng(2);
    const Matrix hist = testing::uniform_matrix(rng, 300, 3);
    Matrix gen(600, 3);
    gen.topRows(300) = hist;
    gen.bottomRows(300) = hist;
    gen.col(2).array() += 0.5;
    const auto names = ids(3);
    const auto battery = ks_battery(hist, names, gen, names, Basis::weekly);
    REQUIRE(battery.results.size() == 3);
    CHECK(battery.results[0].statistic == 0.0);
    CHECK(battery.results[2].p_value < 0.05);
    CHECK(battery.pass_rate == doctest::Approx(2.0 / 3.0));
    CHECK(std::is_sorted(battery.sorted_p_values.begin(), battery.sorted_p_values.end()));

    // Generated columns in another order are matched by id.
    Matrix swapped(600, 3);
    swapped.col(0) = gen.col(2);
    swapped.col(1) = gen.col(0);
    swapped.col(2) = gen.col(1);
    const std::vector<std::string> swapped_ids = {"p2", "p0", "p1"};
    const auto matched = ks_battery(hist, names, swapped, swapped_ids, Basis::weekly);
    for (std::size_t i = 0; i < 3; ++i) CHECK(matched.results[i].statistic == battery.results[i].statistic);

    const auto hourly = ks_battery(hist, names, gen, names, Basis::hourly, 0.05, 100, 9);
    CHECK(hourly.results[0].n_hist == 100);
    CHECK(hourly.results[0].n_gen == 100);
    CHECK(ks_battery(hist, names, gen, names, Basis::hourly, 0.05, 100, 9).results[1].statistic ==
          hourly.results[1].statistic);

    const std::vector<std::string> bad = {"p0", "p1", "zz"};
    CHECK_THROWS_AS(ks_battery(hist, names, gen, bad, Basis::weekly), Error);
    CHECK(basis_from_string("hourly") == Basis::hourly);
    CHECK_THROWS_AS(basis_from_string("daily"), Error);
}

TEST_CASE("Pearson matrix against a direct loop") {
    std::mt19937_64 rng(8);
    Matrix x = testing::uniform_matrix(rng, 40, 5);
    x.col(1) += 2.0 * x.col(0);
    const Matrix r = pearson_matrix(x);
    for (Eigen::Index i = 0; i < 5; ++i) {
        CHECK(r(i, i) == 1.0);
        for (Eigen::Index j = 0; j < 5; ++j) {
            CHECK(r(i, j) == r(j, i));
            double mi = 0, mj = 0;
            for (Eigen::Index t = 0; t < 40; ++t) {
                mi += x(t, i) / 40.0;
                mj += x(t, j) / 40.0;
            }
            double sij = 0, sii = 0, sjj = 0;
            for (Eigen::Index t = 0; t < 40; ++t) {
                sij += (x(t, i) - mi) * (x(t, j) - mj);
                sii += (x(t, i) - mi) * (x(t, i) - mi);
                sjj += (x(t, j) - mj) * (x(t, j) - mj);
            }
            CHECK(r(i, j) == doctest::Approx(sij / std::sqrt(sii * sjj)).epsilon(1e-12));
        }
    }
}

TEST_CASE("correlation comparison") {
    std::mt19937_64 rng(4);
    Matrix hist = testing::uniform_matrix(rng, 100, 4);
    hist.col(3) += hist.col(0);
    const auto names = ids(4);

    const auto same = corr_compare(hist, names, hist, names);
    CHECK(same.mae == 0.0);
    CHECK(same.max_err == 0.0);
    CHECK(same.pairs.size() == 6);
    CHECK(same.histogram.size() == corr_histogram_bins);
    CHECK(same.histogram[0] == 6);

    const Matrix gen = testing::uniform_matrix(rng, 200, 4);
    const auto diff = corr_compare(hist, names, gen, names);
    double sum = 0.0, worst = 0.0;
    for (std::size_t k = 0; k < diff.pairs.size(); ++k) {
        const auto [i, j] = diff.pairs[k];
        const double e = std::abs(diff.hist_corr(i, j) - diff.gen_corr(i, j));
        CHECK(diff.abs_errors[k] == doctest::Approx(e).epsilon(1e-14));
        sum += e;
        worst = std::max(worst, e);
    }
    CHECK(diff.mae == doctest::Approx(sum / 6.0));
    CHECK(diff.max_err == worst);

    // A constant generated plant is dropped with a warning.
    Matrix flat = gen;
    flat.col(2).setConstant(0.0);
    const auto dropped = corr_compare(hist, names, flat, names);
    CHECK(dropped.plant_ids.size() == 3);
    CHECK(dropped.pairs.size() == 3);
    CHECK_FALSE(dropped.warnings.empty());

    Matrix zero = Matrix::Zero(10, 4);
    CHECK_THROWS_AS(corr_compare(zero, names, zero, names), Error);
}

TEST_CASE("type 7 quantiles") {
    CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
    CHECK(quantile({4, 1, 3, 2}, 0.0) == 1.0);
    CHECK(quantile({4, 1, 3, 2}, 1.0) == 4.0);
    CHECK(quantile({10, 20, 30}, 0.25) == 15.0);
    CHECK(quantile({7}, 0.9) == 7.0);
    CHECK_THROWS_AS(quantile({}, 0.5), Error);
    CHECK_THROWS_AS(quantile({1, 2}, 1.5), Error);
}

TEST_CASE("densities integrate to one") {
    std::mt19937_64 rng(6);
    const auto a = draw(rng, 500, false);
    auto b = draw(rng, 300, false);
    for (auto& x : b) x = 0.5 + 0.8 * x;
    const auto d = density_summary(a, b, 25);
    REQUIRE(d.edges.size() == 26);
    double area_h = 0.0, area_g = 0.0;
    for (std::size_t k = 0; k < 25; ++k) {
        area_h += d.hist_density[k] * (d.edges[k + 1] - d.edges[k]);
        area_g += d.gen_density[k] * (d.edges[k + 1] - d.edges[k]);
    }
    CHECK(area_h == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(area_g == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.edges.front() == *std::min_element(a.begin(), a.end()));
    CHECK(d.hist_quantiles.size() == default_quantile_levels.size());

    const std::vector<double> constant(10, 0.25);
    const auto degenerate = density_summary(constant, constant, 4);
    CHECK(degenerate.edges.front() == 0.25);
    CHECK(degenerate.edges.back() == 1.25);
}

TEST_CASE("xy table has one row per unordered pair") {
    for (Eigen::Index n : {2, 3, 7}) {
        const Matrix h = Matrix::Identity(n, n);
        const auto rows = xy_corr_table(h, h, h);
        CHECK(rows.size() == static_cast<std::size_t>(n * (n - 1) / 2));
        for (const auto& r : rows) CHECK(r.i < r.j);
    }
}

}
