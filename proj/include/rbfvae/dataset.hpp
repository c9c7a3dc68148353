#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rbfvae/types.hpp"

namespace rbfvae::dataset {

inline constexpr std::size_t hours_per_week = 168;
inline constexpr double default_mean_floor = 1e-6;

enum class PlantKind { wind, solar };

std::string_view to_string(PlantKind kind) noexcept;
PlantKind plant_kind_from_string(std::string_view text);

/// Per-plant hourly per-unit generation. Rows are consecutive UTC hours.
struct HourlyPanel {
    std::vector<std::string> plant_ids;
    std::vector<PlantKind> plant_kinds;
    std::int64_t start_hour = 0;  // hours since 1970-01-01T00:00Z
    Matrix values;                // [n_hours x n_plants]

    std::size_t n_hours() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t n_plants() const { return static_cast<std::size_t>(values.cols()); }

    /// Throws if any invariant (finite, in [0, 1], >= 168 hours, unique ids) is violated.
    void validate() const;
};

struct PlantInfo {
    double capacity = 1.0;
    std::optional<PlantKind> kind;
};
using CapacityMap = std::map<std::string, PlantInfo>;

/// Reads `plant_id,capacity,kind`; the kind column may be empty.
CapacityMap read_capacity_csv(const std::filesystem::path& path);
void write_capacity_csv(const HourlyPanel& panel, const std::filesystem::path& path);

/// Parses `timestamp,<plant_id>,...` and normalizes each plant to per-unit: by the declared
/// capacity when present, otherwise by the observed maximum (1.0 for an all-zero column).
/// Plants without a declared kind are tagged solar when at least a quarter of their hours
/// are exactly zero, wind otherwise.
HourlyPanel ingest_csv(const std::filesystem::path& path, const CapacityMap& capacities = {});
HourlyPanel ingest_csv(std::istream& in, const CapacityMap& capacities = {},
                       std::string_view origin = "<stream>");

void write_hourly_csv(const HourlyPanel& panel, const std::filesystem::path& path);

/// ISO-8601 hour timestamp <-> hours since the Unix epoch (UTC).
std::int64_t parse_timestamp(std::string_view text);
std::string format_timestamp(std::int64_t hour);

struct WeeklyPanel {
    std::vector<std::size_t> week_index;
    Matrix values;  // [n_weeks x n_plants], block means
    std::vector<std::string> plant_ids;
    std::vector<PlantKind> plant_kinds;
    std::int64_t start_hour = 0;
    std::size_t source_hours = 0;

    std::size_t n_weeks() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t n_plants() const { return static_cast<std::size_t>(values.cols()); }
};

/// Consecutive 168-hour blocks from hour 0; a trailing partial week is dropped.
WeeklyPanel aggregate_weekly(const HourlyPanel& panel);

void write_weekly_csv(const WeeklyPanel& weekly, const std::filesystem::path& path);

/// Hourly-to-weekly-mean ratios, laid out [week][plant][hour].
class ProfileStore {
public:
    ProfileStore() = default;
    ProfileStore(std::size_t n_weeks, std::vector<std::string> plant_ids, std::vector<double> data,
                 double mean_floor);

    std::span<const double> profile(std::size_t week, std::size_t plant) const;

    std::size_t n_weeks() const { return n_weeks_; }
    std::size_t n_plants() const { return plant_ids_.size(); }
    double mean_floor() const { return mean_floor_; }
    const std::vector<std::string>& plant_ids() const { return plant_ids_; }

private:
    std::size_t n_weeks_ = 0;
    std::vector<std::string> plant_ids_;
    std::vector<double> data_;
    double mean_floor_ = default_mean_floor;
};

/// profile[w][p][h] = hourly / weekly mean, or all ones when the weekly mean is below `mean_floor`.
ProfileStore extract_profiles(const HourlyPanel& panel, const WeeklyPanel& weekly,
                              double mean_floor = default_mean_floor);

/// Desk-scale synthetic wind/solar panel.
///
/// value(t, p) = clip(seasonal_p(week of year) * diurnal_p(hour of day)
///                    * (1 + 0.25 * n_p(week) + s_p * u_p(t)), 0, 1)
///
/// where n_p = sqrt(rho) F + sqrt(1 - rho) e_p is a weekly common-factor draw and u_p is a
/// unit-variance AR(1) hourly process (phi = 0.9) whose innovations share the same loading.
/// Solar plants use a daylight bell on [06:00, 18:00) and are exactly zero outside it; wind
/// plants use a mild cycle peaking at 03:00. Seasonal cycles are 52 weeks long, and solar
/// phases sit opposite wind phases.
struct SynthSpec {
    std::size_t n_plants = 16;
    std::size_t n_weeks = 520;
    std::uint64_t seed = 7;
    double solar_fraction = 0.375;
    double rho = 0.8;

    void validate() const;
};

HourlyPanel synth_panel(const SynthSpec& spec);

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 1;
};

/// A subset of weeks that keeps the original week indices, so profiles stay addressable.
struct WeeklyView {
    Matrix values;
    std::vector<std::size_t> week_indices;
    std::vector<std::string> plant_ids;

    std::size_t size() const { return week_indices.size(); }
};

struct Split {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    WeeklyView train;
    WeeklyView test;
};

/// Seeded uniform shuffle of whole weeks. n_train = floor(fraction * n) clamped to
/// [1, n - 1], so there is always at least one test week.
Split split(const WeeklyPanel& weekly, const SplitSpec& spec);

WeeklyView select_weeks(const WeeklyPanel& weekly, std::span<const std::size_t> weeks);

}  // namespace rbfvae::dataset
