#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rbfvae/types.hpp"

namespace rbfvae::stats {

struct KsStat {
    double statistic = 0.0;  // sup |ECDF_a - ECDF_b|
    double p_value = 1.0;
    std::size_t n = 0;
    std::size_t m = 0;
};

/// Q_KS(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2), clamped to [0, 1].
double kolmogorov_survival(double lambda);

/// Asymptotic p-value with the small-sample correction
/// lambda = (sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) * D, ne = n m / (n + m).
double ks_p_value(double statistic, std::size_t n, std::size_t m);

/// Two-sample Kolmogorov-Smirnov test. Both samples need at least 5 values.
KsStat ks_two_sample(std::span<const double> a, std::span<const double> b);

enum class Basis { weekly, hourly };

std::string_view to_string(Basis basis) noexcept;
Basis basis_from_string(std::string_view text);

struct KsResult {
    std::string plant_id;
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n_hist = 0;
    std::size_t n_gen = 0;
    Basis basis = Basis::weekly;
};

struct KsBattery {
    std::vector<KsResult> results;
    double alpha = 0.05;
    double pass_rate = 0.0;            // fraction of plants with p > alpha
    std::vector<double> sorted_p_values;  // CDF data
};

inline constexpr std::size_t default_subsample_cap = 2000;

/// Per plant: historical column vs pooled generated column. Columns are matched by plant id;
/// results follow the historical order. On the hourly basis both sides are subsampled
/// uniformly without replacement to `subsample_cap` values, seeded.
KsBattery ks_battery(const Eigen::Ref<const Matrix>& hist, std::span<const std::string> hist_ids,
                     const Eigen::Ref<const Matrix>& gen, std::span<const std::string> gen_ids, Basis basis,
                     double alpha = 0.05, std::size_t subsample_cap = default_subsample_cap,
                     std::uint64_t seed = 0);

/// Pearson correlation matrix; unit diagonal and exact symmetry. Columns must have variance > 0.
Matrix pearson_matrix(const Eigen::Ref<const Matrix>& samples);

struct CorrReport {
    std::vector<std::string> plant_ids;  // plants kept (non-zero variance on both sides)
    Matrix hist_corr;
    Matrix gen_corr;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // upper triangle, row-major order
    std::vector<double> abs_errors;
    double mae = 0.0;
    double max_err = 0.0;
    std::vector<std::size_t> histogram;  // 100 bins of width 0.01 on [0, 1]
    std::vector<std::string> warnings;
};

inline constexpr std::size_t corr_histogram_bins = 100;

CorrReport corr_compare(const Eigen::Ref<const Matrix>& hist, std::span<const std::string> hist_ids,
                        const Eigen::Ref<const Matrix>& gen, std::span<const std::string> gen_ids);

inline const std::vector<double> default_quantile_levels = {0.01, 0.05, 0.10, 0.20, 0.30, 0.40, 0.50,
                                                            0.60, 0.70, 0.80, 0.90, 0.95, 0.99};

/// Linear-interpolation (type 7) sample quantile.
double quantile(std::vector<double> values, double level);

struct DensityTable {
    std::vector<double> edges;  // n_bins + 1
    std::vector<double> hist_density;
    std::vector<double> gen_density;
    std::vector<double> levels;
    std::vector<double> hist_quantiles;
    std::vector<double> gen_quantiles;
};

/// Aligned histograms over the pooled range (a degenerate range becomes [v, v + 1]) and
/// paired quantiles, normalized to unit area.
DensityTable density_summary(std::span<const double> hist, std::span<const double> gen, std::size_t n_bins);

DensityTable density_summary(const Eigen::Ref<const Matrix>& hist, std::span<const std::string> hist_ids,
                             const Eigen::Ref<const Matrix>& gen, std::span<const std::string> gen_ids,
                             std::string_view plant_id, std::size_t n_bins);

struct XyRow {
    std::size_t i = 0;
    std::size_t j = 0;
    double hist = 0.0;
    double a = 0.0;
    double b = 0.0;
};

/// One row per unordered plant pair: historical r against two generated r's.
std::vector<XyRow> xy_corr_table(const Matrix& hist_corr, const Matrix& gen_corr_a, const Matrix& gen_corr_b);

}  // namespace rbfvae::stats
