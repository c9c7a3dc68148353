#include "rbfvae/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "rbfvae/config.hpp"
#include "rbfvae/error.hpp"
#include "rbfvae/rng.hpp"

namespace rbfvae::dataset {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

int parse_int_field(std::string_view text, std::string_view whole) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        fail(ErrorKind::data, "malformed timestamp '" + std::string(whole) + "'");
    }
    return value;
}

double parse_value(std::string_view text, std::string_view origin, std::size_t line) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        fail(ErrorKind::data, std::string(origin) + ":" + std::to_string(line) +
                                  ": cannot parse value '" + std::string(text) + "'");
    }
    if (!std::isfinite(value)) {
        fail(ErrorKind::data, std::string(origin) + ":" + std::to_string(line) + ": non-finite value");
    }
    return value;
}

std::string read_all(std::istream& in) {
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

std::string_view to_string(PlantKind kind) noexcept {
    return kind == PlantKind::solar ? "solar" : "wind";
}

PlantKind plant_kind_from_string(std::string_view text) {
    if (text == "solar") return PlantKind::solar;
    if (text == "wind") return PlantKind::wind;
    fail(ErrorKind::config, "unknown plant kind '" + std::string(text) + "' (expected wind or solar)");
}

void HourlyPanel::validate() const {
    if (plant_ids.size() != static_cast<std::size_t>(values.cols()) ||
        plant_kinds.size() != plant_ids.size()) {
        fail(ErrorKind::schema, "panel plant metadata does not match value columns");
    }
    if (n_hours() < hours_per_week) {
        fail(ErrorKind::insufficient_data, "panel has " + std::to_string(n_hours()) +
                                               " hours; at least 168 (one week) required");
    }
    std::set<std::string> seen;
    for (const auto& id : plant_ids) {
        if (!seen.insert(id).second) fail(ErrorKind::schema, "duplicate plant id '" + id + "'");
    }
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        const double v = values.data()[i];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            fail(ErrorKind::data, "panel value outside [0, 1] at flat index " + std::to_string(i));
        }
    }
}

std::int64_t parse_timestamp(std::string_view text) {
    const std::string_view whole = text;
    // YYYY-MM-DD[T| ]HH[:MM[:SS]][Z|+00:00]
    if (text.size() < 13 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ')) {
        fail(ErrorKind::data, "malformed timestamp '" + std::string(whole) + "'");
    }
    const int y = parse_int_field(text.substr(0, 4), whole);
    const int mo = parse_int_field(text.substr(5, 2), whole);
    const int d = parse_int_field(text.substr(8, 2), whole);
    const int h = parse_int_field(text.substr(11, 2), whole);
    text.remove_prefix(13);
    int minute = 0;
    int second = 0;
    if (!text.empty() && text.front() == ':') {
        minute = parse_int_field(text.substr(1, 2), whole);
        text.remove_prefix(std::min<std::size_t>(3, text.size()));
        if (!text.empty() && text.front() == ':') {
            second = parse_int_field(text.substr(1, 2), whole);
            text.remove_prefix(std::min<std::size_t>(3, text.size()));
        }
    }
    if (!(text.empty() || text == "Z" || text == "+00:00")) {
        fail(ErrorKind::data, "timestamp '" + std::string(whole) + "' is not UTC");
    }
    if (minute != 0 || second != 0) {
        fail(ErrorKind::data, "timestamp '" + std::string(whole) + "' is not on the hour");
    }
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h < 0 || h > 23) {
        fail(ErrorKind::data, "invalid date in timestamp '" + std::string(whole) + "'");
    }
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<std::int64_t>(days) * 24 + h;
}

std::string format_timestamp(std::int64_t hour) {
    using namespace std::chrono;
    std::int64_t day_count = hour / 24;
    std::int64_t h = hour % 24;
    if (h < 0) {
        h += 24;
        --day_count;
    }
    const year_month_day ymd{sys_days{days{day_count}}};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:00:00Z", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(h));
    return buf;
}

CapacityMap read_capacity_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open capacity file " + path.string());
    CapacityMap out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty()) continue;
        const auto fields = split_fields(t);
        if (line_no == 1 && fields[0] == "plant_id") continue;
        if (fields.size() < 2 || fields.size() > 3) {
            fail(ErrorKind::schema, path.string() + ":" + std::to_string(line_no) +
                                        ": expected plant_id,capacity[,kind]");
        }
        PlantInfo info;
        info.capacity = parse_value(fields[1], path.string(), line_no);
        if (info.capacity <= 0.0) {
            fail(ErrorKind::config, path.string() + ":" + std::to_string(line_no) +
                                        ": capacity must be positive");
        }
        if (fields.size() == 3 && !fields[2].empty()) info.kind = plant_kind_from_string(fields[2]);
        if (!out.emplace(std::string(fields[0]), info).second) {
            fail(ErrorKind::schema, "duplicate plant '" + std::string(fields[0]) + "' in " + path.string());
        }
    }
    return out;
}

void write_capacity_csv(const HourlyPanel& panel, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << "plant_id,capacity,kind\n";
    for (std::size_t p = 0; p < panel.n_plants(); ++p) {
        out << panel.plant_ids[p] << ",1," << to_string(panel.plant_kinds[p]) << '\n';
    }
}

HourlyPanel ingest_csv(const std::filesystem::path& path, const CapacityMap& capacities) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open data file " + path.string());
    return ingest_csv(in, capacities, path.string());
}

HourlyPanel ingest_csv(std::istream& in, const CapacityMap& capacities, std::string_view origin) {
    const std::string text = read_all(in);
    std::string_view rest = text;
    std::size_t line_no = 0;

    auto next_line = [&](std::string_view& line) {
        while (!rest.empty()) {
            const auto nl = rest.find('\n');
            line = trim(rest.substr(0, nl));
            rest.remove_prefix(nl == std::string_view::npos ? rest.size() : nl + 1);
            ++line_no;
            if (!line.empty()) return true;
        }
        return false;
    };

    std::string_view line;
    if (!next_line(line)) fail(ErrorKind::schema, std::string(origin) + ": empty file");
    const auto header = split_fields(line);
    if (header.size() < 2 || header[0] != "timestamp") {
        fail(ErrorKind::schema, std::string(origin) + ": header must be 'timestamp,<plant_id>,...'");
    }

    HourlyPanel panel;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < header.size(); ++i) {
        std::string id(header[i]);
        if (id.empty()) fail(ErrorKind::schema, std::string(origin) + ": empty plant id in header");
        if (!seen.insert(id).second) {
            fail(ErrorKind::schema, std::string(origin) + ": duplicate plant id '" + id + "'");
        }
        panel.plant_ids.push_back(std::move(id));
    }
    const std::size_t n_plants = panel.plant_ids.size();

    std::vector<double> flat;
    std::size_t hour = 0;
    while (next_line(line)) {
        const auto fields = split_fields(line);
        if (fields.size() != n_plants + 1) {
            fail(ErrorKind::schema, std::string(origin) + ":" + std::to_string(line_no) + ": expected " +
                                        std::to_string(n_plants + 1) + " columns, found " +
                                        std::to_string(fields.size()));
        }
        const std::int64_t ts = parse_timestamp(fields[0]);
        if (hour == 0) {
            panel.start_hour = ts;
        } else if (ts != panel.start_hour + static_cast<std::int64_t>(hour)) {
            const std::int64_t expected = panel.start_hour + static_cast<std::int64_t>(hour);
            throw GapError(hour, line_no,
                           std::string(origin) + ":" + std::to_string(line_no) + ": gap at hour " +
                               std::to_string(hour) + ": expected " + format_timestamp(expected) +
                               ", found " + format_timestamp(ts));
        }
        for (std::size_t p = 0; p < n_plants; ++p) {
            const double v = parse_value(fields[p + 1], origin, line_no);
            if (v < 0.0) {
                fail(ErrorKind::data, std::string(origin) + ":" + std::to_string(line_no) +
                                          ": negative generation for plant '" + panel.plant_ids[p] + "'");
            }
            flat.push_back(v);
        }
        ++hour;
    }
    if (hour < hours_per_week) {
        fail(ErrorKind::insufficient_data, std::string(origin) + ": " + std::to_string(hour) +
                                               " hourly rows; at least 168 required");
    }

    panel.values = Eigen::Map<Matrix>(flat.data(), static_cast<Eigen::Index>(hour),
                                      static_cast<Eigen::Index>(n_plants));
    panel.plant_kinds.resize(n_plants);
    for (std::size_t p = 0; p < n_plants; ++p) {
        auto col = panel.values.col(static_cast<Eigen::Index>(p));
        const auto it = capacities.find(panel.plant_ids[p]);
        double scale = 0.0;
        if (it != capacities.end()) {
            scale = it->second.capacity;
            if (col.maxCoeff() > scale * (1.0 + 1e-12)) {
                fail(ErrorKind::data, "plant '" + panel.plant_ids[p] + "' exceeds its declared capacity");
            }
        } else {
            scale = col.maxCoeff();
            if (scale <= 0.0) scale = 1.0;
        }
        col /= scale;
        col = col.cwiseMin(1.0);
        if (it != capacities.end() && it->second.kind) {
            panel.plant_kinds[p] = *it->second.kind;
        } else {
            const auto zeros = (col.array() == 0.0).count();
            panel.plant_kinds[p] =
                4 * zeros >= col.size() && zeros < col.size() ? PlantKind::solar : PlantKind::wind;
        }
    }
    return panel;
}

void write_hourly_csv(const HourlyPanel& panel, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << "timestamp";
    for (const auto& id : panel.plant_ids) out << ',' << id;
    out << '\n';
    for (std::size_t h = 0; h < panel.n_hours(); ++h) {
        out << format_timestamp(panel.start_hour + static_cast<std::int64_t>(h));
        for (std::size_t p = 0; p < panel.n_plants(); ++p) {
            out << ',' << format_double(panel.values(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(p)));
        }
        out << '\n';
    }
}

WeeklyPanel aggregate_weekly(const HourlyPanel& panel) {
    if (panel.n_hours() < hours_per_week) {
        fail(ErrorKind::insufficient_data, "need at least 168 hours to form a week, have " +
                                               std::to_string(panel.n_hours()));
    }
    const std::size_t n_weeks = panel.n_hours() / hours_per_week;
    WeeklyPanel weekly;
    weekly.plant_ids = panel.plant_ids;
    weekly.plant_kinds = panel.plant_kinds;
    weekly.start_hour = panel.start_hour;
    weekly.source_hours = panel.n_hours();
    weekly.week_index.resize(n_weeks);
    std::iota(weekly.week_index.begin(), weekly.week_index.end(), std::size_t{0});
    weekly.values.resize(static_cast<Eigen::Index>(n_weeks), panel.values.cols());
    for (std::size_t w = 0; w < n_weeks; ++w) {
        for (Eigen::Index p = 0; p < panel.values.cols(); ++p) {
            double sum = 0.0;
            for (std::size_t h = 0; h < hours_per_week; ++h) {
                sum += panel.values(static_cast<Eigen::Index>(w * hours_per_week + h), p);
            }
            weekly.values(static_cast<Eigen::Index>(w), p) = sum / static_cast<double>(hours_per_week);
        }
    }
    return weekly;
}

void write_weekly_csv(const WeeklyPanel& weekly, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << "week";
    for (const auto& id : weekly.plant_ids) out << ',' << id;
    out << '\n';
    for (std::size_t w = 0; w < weekly.n_weeks(); ++w) {
        out << weekly.week_index[w];
        for (std::size_t p = 0; p < weekly.n_plants(); ++p) {
            out << ',' << format_double(weekly.values(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(p)));
        }
        out << '\n';
    }
}

ProfileStore::ProfileStore(std::size_t n_weeks, std::vector<std::string> plant_ids,
                           std::vector<double> data, double mean_floor)
    : n_weeks_(n_weeks), plant_ids_(std::move(plant_ids)), data_(std::move(data)), mean_floor_(mean_floor) {
    if (data_.size() != n_weeks_ * plant_ids_.size() * hours_per_week) {
        fail(ErrorKind::dimension, "profile data size does not match weeks x plants x 168");
    }
}

std::span<const double> ProfileStore::profile(std::size_t week, std::size_t plant) const {
    if (week >= n_weeks_ || plant >= plant_ids_.size()) {
        fail(ErrorKind::lookup, "profile (" + std::to_string(week) + ", " + std::to_string(plant) +
                                    ") out of range");
    }
    return {data_.data() + (week * plant_ids_.size() + plant) * hours_per_week, hours_per_week};
}

ProfileStore extract_profiles(const HourlyPanel& panel, const WeeklyPanel& weekly, double mean_floor) {
    if (!(mean_floor > 0.0)) fail(ErrorKind::config, "mean_floor must be positive");
    if (weekly.n_plants() != panel.n_plants() ||
        weekly.n_weeks() * hours_per_week > panel.n_hours()) {
        fail(ErrorKind::dimension, "weekly panel was not derived from this hourly panel");
    }
    const std::size_t n_plants = panel.n_plants();
    std::vector<double> data(weekly.n_weeks() * n_plants * hours_per_week, 1.0);
    for (std::size_t w = 0; w < weekly.n_weeks(); ++w) {
        for (std::size_t p = 0; p < n_plants; ++p) {
            const double mean = weekly.values(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(p));
            if (mean < mean_floor) continue;
            double* out = data.data() + (w * n_plants + p) * hours_per_week;
            for (std::size_t h = 0; h < hours_per_week; ++h) {
                out[h] = panel.values(static_cast<Eigen::Index>(w * hours_per_week + h),
                                      static_cast<Eigen::Index>(p)) / mean;
            }
        }
    }
    return ProfileStore(weekly.n_weeks(), panel.plant_ids, std::move(data), mean_floor);
}

void SynthSpec::validate() const {
    if (n_plants < 2) fail(ErrorKind::config, "synthetic spec: n_plants must be >= 2");
    if (n_weeks < 8) fail(ErrorKind::config, "synthetic spec: n_weeks must be >= 8");
    if (!(solar_fraction >= 0.0 && solar_fraction <= 1.0)) {
        fail(ErrorKind::config, "synthetic spec: solar_fraction must be in [0, 1]");
    }
    if (!(rho >= 0.0 && rho <= 1.0)) fail(ErrorKind::config, "synthetic spec: rho must be in [0, 1]");
}

HourlyPanel synth_panel(const SynthSpec& spec) {
    spec.validate();
    constexpr double two_pi = 2.0 * std::numbers::pi;
    constexpr double weekly_sigma = 0.25;
    constexpr double ar_phi = 0.9;

    const std::size_t n_plants = spec.n_plants;
    const std::size_t n_hours = spec.n_weeks * hours_per_week;

    struct Plant {
        PlantKind kind;
        double base;
        double amplitude;
        double phase;
        double hourly_sigma;
    };
    Rng params = make_stream(spec.seed, "synth-params");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Plant> plants(n_plants);
    HourlyPanel panel;
    std::size_t n_wind = 0;
    std::size_t n_solar = 0;
    for (std::size_t p = 0; p < n_plants; ++p) {
        const bool solar = std::floor(static_cast<double>(p + 1) * spec.solar_fraction) >
                           std::floor(static_cast<double>(p) * spec.solar_fraction);
        Plant& pl = plants[p];
        const double u1 = unit(params);
        const double u2 = unit(params);
        const double u3 = unit(params);
        if (solar) {
            pl = {PlantKind::solar, 0.45 + 0.10 * u1, 0.15 + 0.10 * u2,
                  std::numbers::pi + (u3 - 0.5) * 0.6, 0.15};
        } else {
            pl = {PlantKind::wind, 0.30 + 0.10 * u1, 0.25 + 0.10 * u2, (u3 - 0.5) * 0.6, 0.25};
        }
        char id[32];
        std::snprintf(id, sizeof(id), "%s%02zu", solar ? "solar" : "wind", solar ? ++n_solar : ++n_wind);
        panel.plant_ids.emplace_back(id);
        panel.plant_kinds.push_back(pl.kind);
    }

    Rng weekly_rng = make_stream(spec.seed, "synth-weekly");
    Rng hourly_rng = make_stream(spec.seed, "synth-hourly");
    const double load = std::sqrt(spec.rho);
    const double own = std::sqrt(1.0 - spec.rho);
    const double innov = std::sqrt(1.0 - ar_phi * ar_phi);

    std::vector<double> weekly_noise(n_plants);
    std::vector<double> ar(n_plants);
    {
        const double common = standard_normal(hourly_rng);
        for (std::size_t p = 0; p < n_plants; ++p) ar[p] = load * common + own * standard_normal(hourly_rng);
    }

    panel.start_hour = parse_timestamp("2015-01-05T00:00:00Z");
    panel.values.resize(static_cast<Eigen::Index>(n_hours), static_cast<Eigen::Index>(n_plants));
    for (std::size_t w = 0; w < spec.n_weeks; ++w) {
        const double common = standard_normal(weekly_rng);
        for (std::size_t p = 0; p < n_plants; ++p) {
            weekly_noise[p] = load * common + own * standard_normal(weekly_rng);
        }
        const double angle = two_pi * static_cast<double>(w % 52) / 52.0;
        for (std::size_t h = 0; h < hours_per_week; ++h) {
            const std::size_t t = w * hours_per_week + h;
            const double hod = static_cast<double>(t % 24);
            if (t > 0) {
                const double shock = standard_normal(hourly_rng);
                for (std::size_t p = 0; p < n_plants; ++p) {
                    ar[p] = ar_phi * ar[p] + innov * (load * shock + own * standard_normal(hourly_rng));
                }
            }
            for (std::size_t p = 0; p < n_plants; ++p) {
                const Plant& pl = plants[p];
                const double seasonal = pl.base * (1.0 + pl.amplitude * std::cos(angle - pl.phase));
                double diurnal = 0.0;
                if (pl.kind == PlantKind::solar) {
                    if (hod >= 6.0 && hod < 18.0) diurnal = std::sin(std::numbers::pi * (hod - 6.0 + 0.5) / 12.0);
                } else {
                    diurnal = 1.0 + 0.2 * std::cos(two_pi * (hod - 3.0) / 24.0);
                }
                const double noise = 1.0 + weekly_sigma * weekly_noise[p] + pl.hourly_sigma * ar[p];
                panel.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(p)) =
                    std::clamp(seasonal * diurnal * noise, 0.0, 1.0);
            }
        }
    }
    return panel;
}

WeeklyView select_weeks(const WeeklyPanel& weekly, std::span<const std::size_t> weeks) {
    WeeklyView view;
    view.plant_ids = weekly.plant_ids;
    view.week_indices.assign(weeks.begin(), weeks.end());
    view.values.resize(static_cast<Eigen::Index>(weeks.size()), weekly.values.cols());
    for (std::size_t i = 0; i < weeks.size(); ++i) {
        if (weeks[i] >= weekly.n_weeks()) fail(ErrorKind::lookup, "week index out of range");
        view.values.row(static_cast<Eigen::Index>(i)) = weekly.values.row(static_cast<Eigen::Index>(weeks[i]));
    }
    return view;
}

Split split(const WeeklyPanel& weekly, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        fail(ErrorKind::config, "train_fraction must be in (0, 1)");
    }
    const std::size_t n = weekly.n_weeks();
    if (n < 2) {
        fail(ErrorKind::insufficient_data, "need at least 2 weeks to split, have " + std::to_string(n));
    }
    auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(n) + 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_stream(spec.seed, "split");
    std::shuffle(order.begin(), order.end(), rng);

    Split out;
    out.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(out.train_indices.begin(), out.train_indices.end());
    std::sort(out.test_indices.begin(), out.test_indices.end());
    out.train = select_weeks(weekly, out.train_indices);
    out.test = select_weeks(weekly, out.test_indices);
    return out;
}

}  // namespace rbfvae::dataset
