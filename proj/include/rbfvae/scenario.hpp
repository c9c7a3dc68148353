#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbfvae/dataset.hpp"
#include "rbfvae/latent_select.hpp"
#include "rbfvae/rng.hpp"
#include "rbfvae/types.hpp"
#include "rbfvae/vae.hpp"

namespace rbfvae::scenario {

struct WeekSample {
    Vector z;
    Vector weekly;                 // [n_plants]
    Matrix hourly;                 // [168 x n_plants], clipped to [0, 1]
    latent::Selection selection;
    std::vector<bool> clipped;     // per plant
};

/// Steps 2-5 for a given epsilon: z = epsilon, weekly = decode(z), nearest posterior,
/// hourly = weekly * profile clipped to [0, 1].
WeekSample generate_week_from_epsilon(const vae::VaeModel& model, const latent::LatentPosteriorStore& store,
                                      const dataset::ProfileStore& profiles, std::span<const double> epsilon);

/// Draws epsilon ~ N(0, I) from `rng`, then as above.
WeekSample generate_week(const vae::VaeModel& model, const latent::LatentPosteriorStore& store,
                         const dataset::ProfileStore& profiles, Rng& rng);

inline constexpr std::size_t default_memory_budget = std::size_t{2} << 30;  // bytes of hourly values

struct GenerateOptions {
    std::size_t n_scenarios = 1;
    std::size_t horizon_weeks = 1;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    std::size_t memory_budget = default_memory_budget;
};

/// Rows are (scenario, week) pairs in scenario-major order; the hourly matrix stacks the
/// 168-hour blocks in the same order.
struct ScenarioSet {
    std::size_t n_scenarios = 0;
    std::size_t horizon_weeks = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> plant_ids;
    Matrix weekly;                               // [S*W x P]
    Matrix hourly;                               // [S*W*168 x P]
    std::vector<std::size_t> profile_indices;    // [S*W] historical week refs
    std::vector<double> selection_distances;     // [S*W] squared Mahalanobis distance of the match
    std::vector<std::uint8_t> clipped;           // [S*W x P]

    std::size_t n_plants() const { return plant_ids.size(); }
    std::size_t row(std::size_t s, std::size_t w) const { return s * horizon_weeks + w; }
    double weekly_value(std::size_t s, std::size_t w, std::size_t p) const;
    double hourly_value(std::size_t s, std::size_t w, std::size_t h, std::size_t p) const;
    bool is_clipped(std::size_t s, std::size_t w, std::size_t p) const;
    std::size_t clipped_count() const;
    double clipped_fraction() const;
};

/// S x W independent weeks. Scenario s draws from its own substream of `seed`, so results
/// do not depend on the thread count and scenario 0 does not change with n_scenarios.
ScenarioSet generate_set(const vae::VaeModel& model, const latent::LatentPosteriorStore& store,
                         const dataset::ProfileStore& profiles, const GenerateOptions& options);

/// `scenario,week,hour,plant_id,value`
void write_hourly_csv(const ScenarioSet& set, const std::filesystem::path& path);
/// `scenario,week,plant_id,value`
void write_weekly_csv(const ScenarioSet& set, const std::filesystem::path& path);

/// Seed, model hash, profile indices and clip counts, merged with `extra`.
nlohmann::json metadata(const ScenarioSet& set, const std::string& model_hash,
                        const nlohmann::json& extra = nlohmann::json::object());

/// Long-format scenario values pivoted to [rows x plants], rows in file order of first
/// appearance of each (scenario, week[, hour]) key.
struct LongTable {
    std::vector<std::string> plant_ids;
    Matrix values;
};

LongTable read_weekly_csv(const std::filesystem::path& path);
LongTable read_hourly_csv(const std::filesystem::path& path);

}  // namespace rbfvae::scenario
