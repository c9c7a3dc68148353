#include "rbfvae/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <fstream>
#include <thread>
#include <unordered_map>

#include "rbfvae/config.hpp"
#include "rbfvae/error.hpp"
#include "rbfvae/model_io.hpp"

namespace rbfvae::scenario {

namespace {

constexpr std::size_t hours = dataset::hours_per_week;

void check_compatible(const vae::VaeModel& model, const latent::LatentPosteriorStore& store,
                      const dataset::ProfileStore& profiles) {
    if (profiles.plant_ids() != model.plant_ids) {
        fail(ErrorKind::config, "profiles and model cover different plant sets");
    }
    if (store.empty()) fail(ErrorKind::usage, "model has no training posteriors");
    if (store.dim() != model.d_latent) fail(ErrorKind::dimension, "posterior store dimension differs from the model");
    for (auto ref : store.week_refs()) {
        if (ref >= profiles.n_weeks()) {
            fail(ErrorKind::lookup, "posterior refers to week " + std::to_string(ref) + " but profiles hold " +
                                        std::to_string(profiles.n_weeks()) + " weeks");
        }
    }
}

// Fills hourly rows [168 x P] from the weekly vector and the selected week's profiles.
void disaggregate(const Eigen::Ref<const Eigen::RowVectorXd>& weekly, const dataset::ProfileStore& profiles,
                  std::size_t week_ref, Eigen::Ref<Matrix> hourly, std::uint8_t* clipped) {
    const auto n_plants = static_cast<std::size_t>(weekly.size());
    for (std::size_t p = 0; p < n_plants; ++p) {
        const auto profile = profiles.profile(week_ref, p);
        const double w = weekly[static_cast<Eigen::Index>(p)];
        bool clip = false;
        for (std::size_t h = 0; h < hours; ++h) {
            double v = w * profile[h];
            if (v > 1.0) {
                v = 1.0;
                clip = true;
            } else if (v < 0.0) {
                v = 0.0;
                clip = true;
            }
            hourly(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(p)) = v;
        }
        clipped[p] = clip ? 1 : 0;
    }
}

void append(std::string& buf, double v) {
    char tmp[32];
    auto res = std::to_chars(tmp, tmp + sizeof tmp, v);
    buf.append(tmp, res.ptr);
}

void append(std::string& buf, std::size_t v) {
    char tmp[24];
    auto res = std::to_chars(tmp, tmp + sizeof tmp, v);
    buf.append(tmp, res.ptr);
}

LongTable read_long(const std::filesystem::path& path, std::size_t key_columns, std::string_view header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != header) {
        fail(ErrorKind::schema, path.string() + ": expected header '" + std::string(header) + "'");
    }
    std::unordered_map<std::string, std::size_t> rows;
    std::vector<std::string> plants;
    std::unordered_map<std::string, std::size_t> plant_col;
    struct Cell {
        std::size_t row;
        std::size_t col;
        double value;
    };
    std::vector<Cell> cells;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t pos = 0;
        for (std::size_t k = 0; k < key_columns; ++k) {
            pos = line.find(',', pos);
            if (pos == std::string::npos) break;
            ++pos;
        }
        const auto plant_end = pos == std::string::npos ? pos : line.find(',', pos);
        if (pos == std::string::npos || plant_end == std::string::npos) {
            fail(ErrorKind::schema, path.string() + ":" + std::to_string(line_no) + ": too few columns");
        }
        const std::string key = line.substr(0, pos);
        const std::string plant = line.substr(pos, plant_end - pos);
        double value = 0.0;
        const char* first = line.data() + plant_end + 1;
        const char* last = line.data() + line.size();
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc() || ptr != last) {
            fail(ErrorKind::schema, path.string() + ":" + std::to_string(line_no) + ": bad value");
        }
        auto [rit, rnew] = rows.try_emplace(key, rows.size());
        auto [pit, pnew] = plant_col.try_emplace(plant, plants.size());
        if (pnew) plants.push_back(plant);
        cells.push_back({rit->second, pit->second, value});
    }
    LongTable table;
    table.plant_ids = plants;
    table.values = Matrix::Constant(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(plants.size()),
                                    std::numeric_limits<double>::quiet_NaN());
    for (const auto& c : cells) {
        table.values(static_cast<Eigen::Index>(c.row), static_cast<Eigen::Index>(c.col)) = c.value;
    }
    if (!table.values.allFinite()) fail(ErrorKind::data, path.string() + ": missing or non-finite values");
    if (cells.size() != rows.size() * plants.size()) fail(ErrorKind::data, path.string() + ": duplicate entries");
    return table;
}

}  // namespace

WeekSample generate_week_from_epsilon(const vae::VaeModel& model, const latent::LatentPosteriorStore& store,
                                      const dataset::ProfileStore& profiles, std::span<const double> epsilon) {
    check_compatible(model, store, profiles);
    if (epsilon.size() != model.d_latent) fail(ErrorKind::dimension, "epsilon width differs from the latent size");
    WeekSample out;
    out.z = Eigen::Map<const Vector>(epsilon.data(), static_cast<Eigen::Index>(epsilon.size()));
    Matrix z(1, static_cast<Eigen::Index>(epsilon.size()));
    z.row(0) = out.z.transpose();
    const Matrix weekly = vae::decode(model, z);
    out.weekly = weekly.row(0).transpose();
    out.selection = latent::select_profile(store, epsilon);
    out.hourly.resize(static_cast<Eigen::Index>(hours), weekly.cols());
    std::vector<std::uint8_t> flags(model.n_plants());
    disaggregate(weekly.row(0), profiles, out.selection.week_ref, out.hourly, flags.data());
    out.clipped.assign(flags.begin(), flags.end());
    return out;
}

WeekSample generate_week(const vae::VaeModel& model, const latent::LatentPosteriorStore& store,
                         const dataset::ProfileStore& profiles, Rng& rng) {
    const Matrix eps = standard_normal(rng, 1, static_cast<Eigen::Index>(model.d_latent));
    return generate_week_from_epsilon(model, store, profiles, std::span<const double>(eps.data(), model.d_latent));
}

double ScenarioSet::weekly_value(std::size_t s, std::size_t w, std::size_t p) const {
    return weekly(static_cast<Eigen::Index>(row(s, w)), static_cast<Eigen::Index>(p));
}

double ScenarioSet::hourly_value(std::size_t s, std::size_t w, std::size_t h, std::size_t p) const {
    return hourly(static_cast<Eigen::Index>(row(s, w) * hours + h), static_cast<Eigen::Index>(p));
}

bool ScenarioSet::is_clipped(std::size_t s, std::size_t w, std::size_t p) const {
    return clipped[row(s, w) * n_plants() + p] != 0;
}

std::size_t ScenarioSet::clipped_count() const {
    return static_cast<std::size_t>(std::count(clipped.begin(), clipped.end(), std::uint8_t{1}));
}

double ScenarioSet::clipped_fraction() const {
    return clipped.empty() ? 0.0 : static_cast<double>(clipped_count()) / static_cast<double>(clipped.size());
}

ScenarioSet generate_set(const vae::VaeModel& model, const latent::LatentPosteriorStore& store,
                         const dataset::ProfileStore& profiles, const GenerateOptions& options) {
    if (options.n_scenarios == 0 || options.horizon_weeks == 0) {
        fail(ErrorKind::usage, "n_scenarios and horizon_weeks must be >= 1");
    }
    check_compatible(model, store, profiles);
    const std::size_t n_plants = model.n_plants();
    const std::size_t n_rows = options.n_scenarios * options.horizon_weeks;
    const double bytes = static_cast<double>(n_rows) * hours * static_cast<double>(n_plants) * sizeof(double);
    if (bytes > static_cast<double>(options.memory_budget)) {
        fail(ErrorKind::size, "hourly scenarios need " + std::to_string(static_cast<std::uint64_t>(bytes)) +
                                  " bytes, budget is " + std::to_string(options.memory_budget) +
                                  "; generate fewer scenarios per run and stream them to disk");
    }

    ScenarioSet set;
    set.n_scenarios = options.n_scenarios;
    set.horizon_weeks = options.horizon_weeks;
    set.seed = options.seed;
    set.plant_ids = model.plant_ids;
    set.weekly.resize(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_plants));
    set.hourly.resize(static_cast<Eigen::Index>(n_rows * hours), static_cast<Eigen::Index>(n_plants));
    set.profile_indices.resize(n_rows);
    set.selection_distances.resize(n_rows);
    set.clipped.resize(n_rows * n_plants);

    const std::uint64_t base = derive_seed(options.seed, "scenario");
    const auto d = static_cast<Eigen::Index>(model.d_latent);
    const auto W = static_cast<Eigen::Index>(options.horizon_weeks);

    // One scenario: W epsilon rows drawn in order, decoded together.
    auto run = [&](std::size_t s) {
        Rng rng(derive_seed(base, static_cast<std::uint64_t>(s)));
        const Matrix eps = standard_normal(rng, W, d);
        const Matrix weekly = vae::decode(model, eps);
        for (std::size_t w = 0; w < options.horizon_weeks; ++w) {
            const std::size_t r = set.row(s, w);
            const auto wi = static_cast<Eigen::Index>(w);
            set.weekly.row(static_cast<Eigen::Index>(r)) = weekly.row(wi);
            const auto sel = latent::select_profile(store, row_span(eps, wi));
            set.profile_indices[r] = sel.week_ref;
            set.selection_distances[r] = sel.min_distance_sq;
            disaggregate(weekly.row(wi), profiles, sel.week_ref,
                         set.hourly.middleRows(static_cast<Eigen::Index>(r * hours), static_cast<Eigen::Index>(hours)),
                         set.clipped.data() + r * n_plants);
        }
    };

    const std::size_t n_threads = std::clamp<std::size_t>(options.threads, 1, options.n_scenarios);
    if (n_threads == 1) {
        for (std::size_t s = 0; s < options.n_scenarios; ++s) run(s);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(n_threads);
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t s = next.fetch_add(1); s < options.n_scenarios; s = next.fetch_add(1)) run(s);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    return set;
}

void write_hourly_csv(const ScenarioSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << "scenario,week,hour,plant_id,value\n";
    std::string buf;
    for (std::size_t s = 0; s < set.n_scenarios; ++s) {
        buf.clear();
        for (std::size_t w = 0; w < set.horizon_weeks; ++w) {
            for (std::size_t h = 0; h < hours; ++h) {
                for (std::size_t p = 0; p < set.n_plants(); ++p) {
                    append(buf, s);
                    buf += ',';
                    append(buf, w);
                    buf += ',';
                    append(buf, h);
                    buf += ',';
                    buf += set.plant_ids[p];
                    buf += ',';
                    append(buf, set.hourly_value(s, w, h, p));
                    buf += '\n';
                }
            }
        }
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

void write_weekly_csv(const ScenarioSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    std::string buf = "scenario,week,plant_id,value\n";
    for (std::size_t s = 0; s < set.n_scenarios; ++s) {
        for (std::size_t w = 0; w < set.horizon_weeks; ++w) {
            for (std::size_t p = 0; p < set.n_plants(); ++p) {
                append(buf, s);
                buf += ',';
                append(buf, w);
                buf += ',';
                buf += set.plant_ids[p];
                buf += ',';
                append(buf, set.weekly_value(s, w, p));
                buf += '\n';
            }
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

nlohmann::json metadata(const ScenarioSet& set, const std::string& model_hash, const nlohmann::json& extra) {
    nlohmann::json j = extra;
    j["software_version"] = std::string(model_io::software_version());
    j["seed"] = set.seed;
    j["model_hash"] = model_hash;
    j["n_scenarios"] = set.n_scenarios;
    j["horizon_weeks"] = set.horizon_weeks;
    j["plant_ids"] = set.plant_ids;
    std::vector<std::size_t> per_plant(set.n_plants(), 0);
    for (std::size_t r = 0; r < set.profile_indices.size(); ++r) {
        for (std::size_t p = 0; p < set.n_plants(); ++p) per_plant[p] += set.clipped[r * set.n_plants() + p];
    }
    j["clipped"] = {{"count", set.clipped_count()},
                    {"total", set.clipped.size()},
                    {"fraction", set.clipped_fraction()},
                    {"per_plant", per_plant}};
    nlohmann::json indices = nlohmann::json::array();
    for (std::size_t s = 0; s < set.n_scenarios; ++s) {
        indices.push_back(std::vector<std::size_t>(set.profile_indices.begin() + static_cast<std::ptrdiff_t>(s * set.horizon_weeks),
                                                   set.profile_indices.begin() + static_cast<std::ptrdiff_t>((s + 1) * set.horizon_weeks)));
    }
    j["profile_indices"] = std::move(indices);
    return j;
}

LongTable read_weekly_csv(const std::filesystem::path& path) {
    return read_long(path, 2, "scenario,week,plant_id,value");
}

LongTable read_hourly_csv(const std::filesystem::path& path) {
    return read_long(path, 3, "scenario,week,hour,plant_id,value");
}

}  // namespace rbfvae::scenario
