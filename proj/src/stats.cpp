#include "rbfvae/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "rbfvae/error.hpp"
#include "rbfvae/rng.hpp"

namespace rbfvae::stats {

double kolmogorov_survival(double lambda) {
    if (!(lambda > 0.0)) return 1.0;
    if (lambda < 1.18) {
        // Dual (theta-function) form of the same series; converges in a few terms here.
        const double y = std::exp(-std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda));
        const double y9 = std::pow(y, 9.0);
        const double cdf = std::sqrt(2.0 * std::numbers::pi) / lambda *
                           (y + y9 + std::pow(y, 25.0) + std::pow(y, 49.0));
        return std::clamp(1.0 - cdf, 0.0, 1.0);
    }
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        if (term < 1e-10) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_p_value(double statistic, std::size_t n, std::size_t m) {
    const double ne = static_cast<double>(n) * static_cast<double>(m) / static_cast<double>(n + m);
    const double root = std::sqrt(ne);
    return kolmogorov_survival((root + 0.12 + 0.11 / root) * statistic);
}

KsStat ks_two_sample(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 5 || b.size() < 5) {
        fail(ErrorKind::usage, "ks test needs at least 5 values per sample (got " + std::to_string(a.size()) +
                                   " and " + std::to_string(b.size()) + ")");
    }
    std::vector<double> sa(a.begin(), a.end());
    std::vector<double> sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    const std::size_t n = sa.size();
    const std::size_t m = sb.size();
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < n && j < m) {
        const double x = std::min(sa[i], sb[j]);
        while (i < n && sa[i] == x) ++i;
        while (j < m && sb[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(n) -
                                 static_cast<double>(j) / static_cast<double>(m)));
    }
    return {d, ks_p_value(d, n, m), n, m};
}

std::string_view to_string(Basis basis) noexcept {
    return basis == Basis::hourly ? "hourly" : "weekly";
}

Basis basis_from_string(std::string_view text) {
    if (text == "weekly") return Basis::weekly;
    if (text == "hourly" || text == "hourly-subsampled") return Basis::hourly;
    fail(ErrorKind::config, "unknown basis '" + std::string(text) + "' (expected weekly or hourly)");
}

namespace {

std::vector<std::size_t> align_columns(std::span<const std::string> hist_ids, std::span<const std::string> gen_ids) {
    if (hist_ids.size() != gen_ids.size()) {
        fail(ErrorKind::config, "historical and generated data cover different plant sets");
    }
    std::map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < gen_ids.size(); ++k) index.emplace(gen_ids[k], k);
    std::vector<std::size_t> out;
    for (const auto& id : hist_ids) {
        auto it = index.find(id);
        if (it == index.end()) fail(ErrorKind::config, "plant '" + id + "' missing from generated data");
        out.push_back(it->second);
    }
    return out;
}

std::vector<double> column(const Eigen::Ref<const Matrix>& m, std::size_t c) {
    std::vector<double> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(r)] = m(r, static_cast<Eigen::Index>(c));
    return out;
}

std::vector<std::size_t> subsample_rows(std::size_t n, std::size_t cap, Rng& rng) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    if (n <= cap) return rows;
    // Partial Fisher-Yates.
    for (std::size_t k = 0; k < cap; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, n - 1);
        std::swap(rows[k], rows[pick(rng)]);
    }
    rows.resize(cap);
    return rows;
}

double variance(const std::vector<double>& x) {
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double s = 0.0;
    for (double v : x) s += (v - mean) * (v - mean);
    return s / static_cast<double>(x.size());
}

}  // namespace

KsBattery ks_battery(const Eigen::Ref<const Matrix>& hist, std::span<const std::string> hist_ids,
                     const Eigen::Ref<const Matrix>& gen, std::span<const std::string> gen_ids, Basis basis,
                     double alpha, std::size_t subsample_cap, std::uint64_t seed) {
    if (static_cast<std::size_t>(hist.cols()) != hist_ids.size() ||
        static_cast<std::size_t>(gen.cols()) != gen_ids.size()) {
        fail(ErrorKind::dimension, "ks battery: plant ids do not match column counts");
    }
    const auto gen_col = align_columns(hist_ids, gen_ids);
    std::vector<std::size_t> hist_rows(static_cast<std::size_t>(hist.rows()));
    std::vector<std::size_t> gen_rows(static_cast<std::size_t>(gen.rows()));
    std::iota(hist_rows.begin(), hist_rows.end(), std::size_t{0});
    std::iota(gen_rows.begin(), gen_rows.end(), std::size_t{0});
    if (basis == Basis::hourly) {
        Rng rng = make_stream(seed, "ks-subsample");
        hist_rows = subsample_rows(hist_rows.size(), subsample_cap, rng);
        gen_rows = subsample_rows(gen_rows.size(), subsample_cap, rng);
    }

    KsBattery battery;
    battery.alpha = alpha;
    std::size_t passed = 0;
    for (std::size_t p = 0; p < hist_ids.size(); ++p) {
        std::vector<double> a;
        std::vector<double> b;
        a.reserve(hist_rows.size());
        b.reserve(gen_rows.size());
        for (auto r : hist_rows) a.push_back(hist(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)));
        for (auto r : gen_rows) b.push_back(gen(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(gen_col[p])));
        const auto ks = ks_two_sample(a, b);
        battery.results.push_back({hist_ids[p], ks.statistic, ks.p_value, ks.n, ks.m, basis});
        if (ks.p_value > alpha) ++passed;
        battery.sorted_p_values.push_back(ks.p_value);
    }
    std::sort(battery.sorted_p_values.begin(), battery.sorted_p_values.end());
    battery.pass_rate = hist_ids.empty() ? 0.0 : static_cast<double>(passed) / static_cast<double>(hist_ids.size());
    return battery;
}

Matrix pearson_matrix(const Eigen::Ref<const Matrix>& samples) {
    const auto p = samples.cols();
    const auto n = static_cast<double>(samples.rows());
    const Eigen::RowVectorXd mean = samples.colwise().sum() / n;
    const Matrix centered = samples.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered;
    Matrix corr = Matrix::Identity(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = i + 1; j < p; ++j) {
            const double r = std::clamp(cov(i, j) / std::sqrt(cov(i, i) * cov(j, j)), -1.0, 1.0);
            corr(i, j) = r;
            corr(j, i) = r;
        }
    }
    return corr;
}

CorrReport corr_compare(const Eigen::Ref<const Matrix>& hist, std::span<const std::string> hist_ids,
                        const Eigen::Ref<const Matrix>& gen, std::span<const std::string> gen_ids) {
    if (static_cast<std::size_t>(hist.cols()) != hist_ids.size() ||
        static_cast<std::size_t>(gen.cols()) != gen_ids.size()) {
        fail(ErrorKind::dimension, "corr compare: plant ids do not match column counts");
    }
    if (hist_ids.size() < 2) fail(ErrorKind::config, "correlation comparison needs at least 2 plants");
    const auto gen_col = align_columns(hist_ids, gen_ids);

    CorrReport report;
    std::vector<Eigen::Index> keep_hist;
    std::vector<Eigen::Index> keep_gen;
    for (std::size_t p = 0; p < hist_ids.size(); ++p) {
        const bool ok = variance(column(hist, p)) > 0.0 && variance(column(gen, gen_col[p])) > 0.0;
        if (!ok) {
            report.warnings.push_back("plant '" + hist_ids[p] + "' has zero variance; excluded from correlation");
            continue;
        }
        report.plant_ids.push_back(hist_ids[p]);
        keep_hist.push_back(static_cast<Eigen::Index>(p));
        keep_gen.push_back(static_cast<Eigen::Index>(gen_col[p]));
    }
    if (report.plant_ids.size() < 2) {
        fail(ErrorKind::data, "fewer than two plants with non-zero variance; correlation undefined");
    }
    const auto k = static_cast<Eigen::Index>(keep_hist.size());
    Matrix h(hist.rows(), k);
    Matrix g(gen.rows(), k);
    for (Eigen::Index c = 0; c < k; ++c) {
        h.col(c) = hist.col(keep_hist[static_cast<std::size_t>(c)]);
        g.col(c) = gen.col(keep_gen[static_cast<std::size_t>(c)]);
    }
    report.hist_corr = pearson_matrix(h);
    report.gen_corr = pearson_matrix(g);
    report.histogram.assign(corr_histogram_bins, 0);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = i + 1; j < k; ++j) {
            const double err = std::abs(report.hist_corr(i, j) - report.gen_corr(i, j));
            report.pairs.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            report.abs_errors.push_back(err);
            sum += err;
            report.max_err = std::max(report.max_err, err);
            auto bin = static_cast<std::size_t>(err / 0.01);
            report.histogram[std::min(bin, corr_histogram_bins - 1)]++;
        }
    }
    report.mae = sum / static_cast<double>(report.abs_errors.size());
    return report;
}

double quantile(std::vector<double> values, double level) {
    if (values.empty()) fail(ErrorKind::usage, "quantile of an empty sample");
    if (!(level >= 0.0 && level <= 1.0)) fail(ErrorKind::usage, "quantile level must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = level * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

DensityTable density_summary(std::span<const double> hist, std::span<const double> gen, std::size_t n_bins) {
    if (n_bins == 0) fail(ErrorKind::usage, "density summary needs at least one bin");
    if (hist.empty() || gen.empty()) fail(ErrorKind::usage, "density summary of an empty sample");
    double lo = std::min(*std::min_element(hist.begin(), hist.end()), *std::min_element(gen.begin(), gen.end()));
    double hi = std::max(*std::max_element(hist.begin(), hist.end()), *std::max_element(gen.begin(), gen.end()));
    if (!(hi > lo)) hi = lo + 1.0;
    const double width = (hi - lo) / static_cast<double>(n_bins);

    DensityTable table;
    for (std::size_t k = 0; k <= n_bins; ++k) table.edges.push_back(lo + width * static_cast<double>(k));
    auto bin_density = [&](std::span<const double> values) {
        std::vector<double> out(n_bins, 0.0);
        for (double v : values) {
            auto bin = static_cast<std::size_t>((v - lo) / width);
            out[std::min(bin, n_bins - 1)] += 1.0;
        }
        for (double& d : out) d /= static_cast<double>(values.size()) * width;
        return out;
    };
    table.hist_density = bin_density(hist);
    table.gen_density = bin_density(gen);
    table.levels = default_quantile_levels;
    const std::vector<double> hv(hist.begin(), hist.end());
    const std::vector<double> gv(gen.begin(), gen.end());
    for (double level : table.levels) {
        table.hist_quantiles.push_back(quantile(hv, level));
        table.gen_quantiles.push_back(quantile(gv, level));
    }
    return table;
}

DensityTable density_summary(const Eigen::Ref<const Matrix>& hist, std::span<const std::string> hist_ids,
                             const Eigen::Ref<const Matrix>& gen, std::span<const std::string> gen_ids,
                             std::string_view plant_id, std::size_t n_bins) {
    auto find = [&](std::span<const std::string> ids) {
        auto it = std::find(ids.begin(), ids.end(), plant_id);
        if (it == ids.end()) fail(ErrorKind::lookup, "unknown plant '" + std::string(plant_id) + "'");
        return static_cast<std::size_t>(it - ids.begin());
    };
    const auto h = column(hist, find(hist_ids));
    const auto g = column(gen, find(gen_ids));
    return density_summary(h, g, n_bins);
}

std::vector<XyRow> xy_corr_table(const Matrix& hist_corr, const Matrix& gen_corr_a, const Matrix& gen_corr_b) {
    const auto p = hist_corr.rows();
    auto same = [&](const Matrix& m) { return m.rows() == p && m.cols() == p; };
    if (hist_corr.cols() != p || !same(gen_corr_a) || !same(gen_corr_b)) {
        fail(ErrorKind::dimension, "xy correlation table: matrices differ in shape");
    }
    std::vector<XyRow> rows;
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = i + 1; j < p; ++j) {
            rows.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), hist_corr(i, j),
                            gen_corr_a(i, j), gen_corr_b(i, j)});
        }
    }
    return rows;
}

}  // namespace rbfvae::stats
