#include "rbfvae/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <memory>
#include <sstream>

#include "rbfvae/config.hpp"
#include "rbfvae/dataset.hpp"
#include "rbfvae/hash.hpp"
#include "rbfvae/model_io.hpp"
#include "rbfvae/scenario.hpp"
#include "rbfvae/stats.hpp"
#include "rbfvae/vae.hpp"

namespace rbfvae::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Keys that do not change results and stay out of the config hash.
const std::vector<std::string> unhashed_keys = {"threads"};

struct Command {
    std::string name;
    CLI::App* app = nullptr;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    std::string config_path;
    KeyValueConfig defaults;

    void add(const std::string& flags, const std::string& key, const std::string& fallback, const std::string& help) {
        defaults.set(key, fallback);
        options[key] = app->add_option(flags, values[key], help);
    }

    KeyValueConfig resolve() const {
        KeyValueConfig cfg = defaults;
        if (!config_path.empty()) {
            const auto file = KeyValueConfig::load(config_path);
            for (const auto& [key, value] : file.entries()) {
                if (!defaults.contains(key)) {
                    fail(ErrorKind::config, config_path + ": unknown key '" + key + "' for command " + name);
                }
            }
            cfg.merge(file);
        }
        KeyValueConfig flags;
        for (const auto& [key, opt] : options) {
            if (opt->count() > 0) flags.set(key, values.at(key));
        }
        cfg.merge(flags);
        return cfg;
    }
};

std::string config_hash(const KeyValueConfig& cfg) {
    KeyValueConfig hashed;
    for (const auto& [key, value] : cfg.entries()) {
        if (std::find(unhashed_keys.begin(), unhashed_keys.end(), key) == unhashed_keys.end()) hashed.set(key, value);
    }
    return to_hex(hashed.hash());
}

std::optional<std::string> optional_string(const KeyValueConfig& cfg, const std::string& key) {
    auto v = cfg.get_string(key, "");
    if (v.empty()) return std::nullopt;
    return v;
}

fs::path output_path(const KeyValueConfig& cfg, const std::string& fallback) {
    if (auto out = optional_string(cfg, "out")) return *out;
    return default_output_root() / fallback;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create directory " + dir.string() + ": " + ec.message());
}

std::uint64_t file_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a(bytes);
}

void write_manifest(const fs::path& dir, const std::string& command, const KeyValueConfig& cfg,
                    const std::vector<std::string>& artifacts) {
    json j;
    j["command"] = command;
    j["software_version"] = std::string(model_io::software_version());
    j["config_hash"] = config_hash(cfg);
    json files = json::object();
    for (const auto& name : artifacts) files[name] = to_hex(file_hash(dir / name));
    j["artifacts"] = std::move(files);
    model_io::write_json(j, dir / "manifest.json");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

// Hourly panel + weekly panel + split, from a data directory (synth/prep output) or a CSV file.
struct Data {
    fs::path hourly_path;
    std::optional<fs::path> capacities_path;
    dataset::HourlyPanel hourly;
    dataset::WeeklyPanel weekly;
    dataset::Split split;
    json meta;
};

Data load_data(const std::string& source, const std::optional<std::string>& capacities, double train_fraction,
               std::uint64_t split_seed) {
    Data d;
    std::optional<fs::path> split_file;
    const fs::path src(source);
    if (fs::is_directory(src)) {
        d.hourly_path = src / "hourly.csv";
        if (!capacities && fs::exists(src / "plants.csv")) d.capacities_path = src / "plants.csv";
        if (fs::exists(src / "split.json")) split_file = src / "split.json";
    } else {
        d.hourly_path = src;
    }
    if (capacities) d.capacities_path = fs::path(*capacities);
    if (!fs::exists(d.hourly_path)) fail(ErrorKind::io, "data file not found: " + d.hourly_path.string());

    const auto caps = d.capacities_path ? dataset::read_capacity_csv(*d.capacities_path) : dataset::CapacityMap{};
    d.hourly = dataset::ingest_csv(d.hourly_path, caps);
    d.weekly = dataset::aggregate_weekly(d.hourly);

    if (split_file) {
        const json s = model_io::read_json(*split_file);
        const auto train_idx = s.at("train_indices").get<std::vector<std::size_t>>();
        const auto test_idx = s.at("test_indices").get<std::vector<std::size_t>>();
        for (auto w : train_idx) {
            if (w >= d.weekly.n_weeks()) fail(ErrorKind::data, split_file->string() + ": week index out of range");
        }
        for (auto w : test_idx) {
            if (w >= d.weekly.n_weeks()) fail(ErrorKind::data, split_file->string() + ": week index out of range");
        }
        d.split.train_indices = train_idx;
        d.split.test_indices = test_idx;
        d.split.train = dataset::select_weeks(d.weekly, train_idx);
        d.split.test = dataset::select_weeks(d.weekly, test_idx);
        train_fraction = s.value("train_fraction", train_fraction);
        split_seed = s.value("seed", split_seed);
    } else {
        d.split = dataset::split(d.weekly, {train_fraction, split_seed});
    }

    d.meta = {{"path", d.hourly_path.string()},
              {"hash", to_hex(file_hash(d.hourly_path))},
              {"capacities", d.capacities_path ? json(d.capacities_path->string()) : json(nullptr)},
              {"n_hours", d.hourly.n_hours()},
              {"n_weeks", d.weekly.n_weeks()},
              {"split",
               {{"train_fraction", train_fraction},
                {"seed", split_seed},
                {"train_indices", d.split.train_indices},
                {"test_indices", d.split.test_indices}}}};
    return d;
}

// Reloads the training data recorded in a model artifact, refusing data that changed since.
Data reload_training_data(const model_io::ModelArtifact& artifact, const std::optional<std::string>& override) {
    const auto& md = artifact.metadata;
    if (!md.contains("data")) fail(ErrorKind::config, "model artifact does not record its training data");
    const auto& dm = md.at("data");
    const std::string path = override.value_or(dm.at("path").get<std::string>());
    std::optional<std::string> caps;
    if (!dm.at("capacities").is_null()) caps = dm.at("capacities").get<std::string>();
    const auto& sp = dm.at("split");
    Data d = load_data(path, override ? std::nullopt : caps, sp.at("train_fraction").get<double>(),
                       sp.at("seed").get<std::uint64_t>());
    if (d.meta.at("hash") != dm.at("hash")) {
        fail(ErrorKind::stale_cache, "training data " + d.hourly_path.string() + " changed since the model was trained");
    }
    return d;
}

double data_mean_floor(const model_io::ModelArtifact& artifact) {
    return artifact.metadata.value("mean_floor", dataset::default_mean_floor);
}

void write_ks_csv(const stats::KsBattery& ks, const fs::path& path) {
    std::string s = "plant_id,statistic,p_value,n_hist,n_gen,pass\n";
    for (const auto& r : ks.results) {
        s += r.plant_id + ',' + format_double(r.statistic) + ',' + format_double(r.p_value) + ',' +
             std::to_string(r.n_hist) + ',' + std::to_string(r.n_gen) + ',' + (r.p_value > ks.alpha ? "1" : "0") + '\n';
    }
    write_text(path, s);
}

json ks_json(const stats::KsBattery& ks) {
    json results = json::array();
    for (const auto& r : ks.results) {
        results.push_back({{"plant_id", r.plant_id},
                           {"statistic", r.statistic},
                           {"p_value", r.p_value},
                           {"n_hist", r.n_hist},
                           {"n_gen", r.n_gen},
                           {"basis", std::string(stats::to_string(r.basis))}});
    }
    return {{"alpha", ks.alpha}, {"pass_rate", ks.pass_rate}, {"results", results}, {"sorted_p_values", ks.sorted_p_values}};
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        rows.push_back(std::vector<double>(m.row(r).data(), m.row(r).data() + m.cols()));
    }
    return rows;
}

json corr_json(const stats::CorrReport& c) {
    return {{"plant_ids", c.plant_ids},     {"hist_corr", matrix_json(c.hist_corr)},
            {"gen_corr", matrix_json(c.gen_corr)}, {"mae", c.mae},
            {"max_err", c.max_err},         {"histogram", c.histogram},
            {"warnings", c.warnings}};
}

std::string histogram_edges(std::size_t bin) {
    const double width = 1.0 / static_cast<double>(stats::corr_histogram_bins);
    return format_double(static_cast<double>(bin) * width) + ',' + format_double(static_cast<double>(bin + 1) * width);
}

Matrix subsample_rows(const Matrix& m, std::size_t cap) {
    if (static_cast<std::size_t>(m.rows()) <= cap) return m;
    // Evenly spaced rows keep the file deterministic without another seed.
    Matrix out(static_cast<Eigen::Index>(cap), m.cols());
    for (std::size_t k = 0; k < cap; ++k) {
        out.row(static_cast<Eigen::Index>(k)) =
            m.row(static_cast<Eigen::Index>(k * static_cast<std::size_t>(m.rows()) / cap));
    }
    return out;
}

void write_wide_csv(const Matrix& m, const std::vector<std::string>& ids, const fs::path& path) {
    std::string s = "row";
    for (const auto& id : ids) s += ',' + id;
    s += '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        s += std::to_string(r);
        for (Eigen::Index c = 0; c < m.cols(); ++c) s += ',' + format_double(m(r, c));
        s += '\n';
    }
    write_text(path, s);
}

// ---- commands ----

int cmd_synth(const KeyValueConfig& cfg, std::ostream& out) {
    dataset::SynthSpec spec;
    spec.n_plants = cfg.get_size("n_plants", spec.n_plants);
    spec.n_weeks = cfg.get_size("n_weeks", spec.n_weeks);
    spec.seed = cfg.get_u64("seed", spec.seed);
    spec.solar_fraction = cfg.get_double("solar_fraction", spec.solar_fraction);
    spec.rho = cfg.get_double("rho", spec.rho);
    const auto dir = output_path(cfg, "synth");
    const auto panel = dataset::synth_panel(spec);
    ensure_dir(dir);
    dataset::write_hourly_csv(panel, dir / "hourly.csv");
    dataset::write_capacity_csv(panel, dir / "plants.csv");
    cfg.save(dir / "synth.config");
    write_manifest(dir, "synth", cfg, {"hourly.csv", "plants.csv", "synth.config"});
    out << "synth: " << panel.n_plants() << " plants x " << panel.n_hours() << " hours -> " << dir.string() << '\n';
    return 0;
}

int cmd_prep(const KeyValueConfig& cfg, std::ostream& out) {
    const auto input = optional_string(cfg, "input");
    if (!input) fail(ErrorKind::usage, "prep needs --input");
    const auto dir = output_path(cfg, "prep");
    Data d = load_data(*input, optional_string(cfg, "capacities"), cfg.get_double("train_fraction", 0.8),
                       cfg.get_u64("split_seed", 1));
    ensure_dir(dir);
    dataset::write_hourly_csv(d.hourly, dir / "hourly.csv");
    dataset::write_capacity_csv(d.hourly, dir / "plants.csv");
    dataset::write_weekly_csv(d.weekly, dir / "weekly.csv");
    json split = d.meta.at("split");
    split["software_version"] = std::string(model_io::software_version());
    split["config_hash"] = config_hash(cfg);
    model_io::write_json(split, dir / "split.json");
    cfg.save(dir / "prep.config");
    write_manifest(dir, "prep", cfg, {"hourly.csv", "plants.csv", "weekly.csv", "split.json", "prep.config"});
    out << "prep: " << d.weekly.n_weeks() << " weeks (" << d.split.train_indices.size() << " train, "
        << d.split.test_indices.size() << " test) -> " << dir.string() << '\n';
    return 0;
}

vae::TrainConfig train_config(const KeyValueConfig& cfg) {
    vae::TrainConfig tc;
    tc.epochs = cfg.get_size("epochs", tc.epochs);
    tc.batch_size = cfg.get_size("batch_size", tc.batch_size);
    tc.learning_rate = cfg.get_double("learning_rate", tc.learning_rate);
    tc.seed = cfg.get_u64("seed", tc.seed);
    tc.kl_weight = cfg.get_double("kl_weight", tc.kl_weight);
    tc.d_latent = cfg.get_size("d_latent", tc.d_latent);
    tc.hidden = cfg.get_sizes("hidden", tc.hidden);
    tc.patience = cfg.get_size("patience", tc.patience);
    tc.gamma_multipliers = cfg.get_doubles("gamma_multipliers", tc.gamma_multipliers);
    if (optional_string(cfg, "gamma")) tc.gamma = cfg.get_double("gamma", 0.0);
    tc.max_centers = cfg.get_size("max_centers", tc.max_centers);
    tc.inverse.epochs = cfg.get_size("inverse_epochs", tc.inverse.epochs);
    tc.inverse.batch_size = cfg.get_size("inverse_batch_size", tc.inverse.batch_size);
    tc.inverse.learning_rate = cfg.get_double("inverse_learning_rate", tc.inverse.learning_rate);
    tc.inverse.seed = cfg.get_u64("inverse_seed", tc.inverse.seed);
    tc.validate();
    return tc;
}

int cmd_train(const KeyValueConfig& cfg, std::ostream& out) {
    const auto source = optional_string(cfg, "data");
    if (!source) fail(ErrorKind::usage, "train needs --data (a synth/prep directory or an hourly CSV)");
    const auto variant = vae::variant_from_string(cfg.get_string("variant", "rbf-implicit"));
    const auto tc = train_config(cfg);
    const double mean_floor = cfg.get_double("mean_floor", dataset::default_mean_floor);
    if (!(mean_floor > 0.0)) fail(ErrorKind::config, "mean_floor must be positive");
    const fs::path model_path = output_path(cfg, "train/model.json");

    Data d = load_data(*source, optional_string(cfg, "capacities"), cfg.get_double("train_fraction", 0.8),
                       cfg.get_u64("split_seed", 1));
    auto selected = vae::train_with_gamma_search(variant, d.split.train, d.split.test, tc,
                                                 cfg.get_size("threads", 1));

    model_io::ModelArtifact artifact;
    artifact.model = std::move(selected.model);
    artifact.selection = std::move(selected.report);
    artifact.metadata = {{"command", "train"},
                         {"software_version", std::string(model_io::software_version())},
                         {"config_hash", config_hash(cfg)},
                         {"data", d.meta},
                         {"mean_floor", mean_floor}};

    const fs::path dir = model_path.has_parent_path() ? model_path.parent_path() : fs::path(".");
    ensure_dir(dir);
    model_io::save(artifact, model_path);

    const fs::path stem = model_path.stem();
    std::string log;
    for (const auto& r : artifact.model.training_log) {
        log += json{{"epoch", r.epoch},
                    {"train_total", r.train_total},
                    {"train_recon", r.train_recon},
                    {"train_kl", r.train_kl},
                    {"test_total", r.test_total},
                    {"test_recon", r.test_recon},
                    {"test_kl", r.test_kl}}
                   .dump();
        log += '\n';
    }
    const std::string log_name = stem.string() + ".loss.jsonl";
    const std::string cfg_name = stem.string() + ".config";
    write_text(dir / log_name, log);
    cfg.save(dir / cfg_name);
    write_manifest(dir, "train", cfg, {model_path.filename().string(), log_name, cfg_name});

    const auto& m = artifact.model;
    out << "train: " << vae::to_string(m.variant) << " best epoch " << m.best_epoch << " of "
        << m.training_log.size() << ", test loss " << format_double(m.training_log[m.best_epoch - 1].test_total);
    if (m.rbf) out << ", gamma " << format_double(m.rbf->gamma());
    out << " -> " << model_path.string() << '\n';
    return 0;
}

int cmd_generate(const KeyValueConfig& cfg, std::ostream& out) {
    const auto model_path = optional_string(cfg, "model");
    if (!model_path) fail(ErrorKind::usage, "generate needs --model");
    const auto artifact = model_io::load(*model_path);
    Data d = reload_training_data(artifact, optional_string(cfg, "data"));
    const auto profiles = dataset::extract_profiles(d.hourly, d.weekly, data_mean_floor(artifact));

    scenario::GenerateOptions opts;
    opts.n_scenarios = cfg.get_size("scenarios", 100);
    opts.horizon_weeks = cfg.get_size("weeks", 52);
    opts.seed = cfg.get_u64("seed", 1);
    opts.threads = cfg.get_size("threads", 1);
    opts.memory_budget = cfg.get_size("memory_budget_mb", scenario::default_memory_budget >> 20) << 20;
    const bool hourly = cfg.get_bool("hourly", true);
    const fs::path dir = output_path(cfg, "scenarios");

    const auto set = scenario::generate_set(artifact.model, artifact.model.posteriors, profiles, opts);
    ensure_dir(dir);
    std::vector<std::string> files = {"weekly.csv", "metadata.json", "generate.config"};
    scenario::write_weekly_csv(set, dir / "weekly.csv");
    if (hourly) {
        scenario::write_hourly_csv(set, dir / "scenarios.csv");
        files.push_back("scenarios.csv");
    }
    const json extra = {{"command", "generate"},
                        {"config_hash", config_hash(cfg)},
                        {"model", *model_path},
                        {"variant", std::string(vae::to_string(artifact.model.variant))}};
    model_io::write_json(scenario::metadata(set, model_io::model_hash(artifact.model), extra), dir / "metadata.json");
    cfg.save(dir / "generate.config");
    write_manifest(dir, "generate", cfg, files);
    out << "generate: " << set.n_scenarios << " scenarios x " << set.horizon_weeks << " weeks, clipped "
        << set.clipped_count() << " of " << set.clipped.size() << " plant-weeks -> " << dir.string() << '\n';
    return 0;
}

struct History {
    Matrix values;
    std::vector<std::string> plant_ids;
};

History load_history(const KeyValueConfig& cfg, stats::Basis basis) {
    const auto source = optional_string(cfg, "hist");
    if (!source) fail(ErrorKind::usage, "validate needs --hist (a synth/prep directory or an hourly CSV)");
    Data d = load_data(*source, optional_string(cfg, "capacities"), 0.8, 1);
    if (basis == stats::Basis::hourly) return {d.hourly.values, d.hourly.plant_ids};
    return {d.weekly.values, d.weekly.plant_ids};
}

scenario::LongTable load_scenarios(const fs::path& dir, stats::Basis basis) {
    if (basis == stats::Basis::hourly) {
        if (!fs::exists(dir / "scenarios.csv")) {
            fail(ErrorKind::io, (dir / "scenarios.csv").string() + " not found; generate with hourly output enabled");
        }
        return scenario::read_hourly_csv(dir / "scenarios.csv");
    }
    return scenario::read_weekly_csv(dir / "weekly.csv");
}

int cmd_validate(const KeyValueConfig& cfg, std::ostream& out) {
    const auto scen = optional_string(cfg, "scen");
    if (!scen) fail(ErrorKind::usage, "validate needs --scen (a generate output directory)");
    const auto basis = stats::basis_from_string(cfg.get_string("basis", "weekly"));
    const double alpha = cfg.get_double("alpha", 0.05);
    const std::size_t cap = cfg.get_size("subsample_cap", stats::default_subsample_cap);
    const std::uint64_t seed = cfg.get_u64("seed", 1);
    const std::size_t bins = cfg.get_size("density_bins", 50);
    const fs::path dir = output_path(cfg, "report");

    const History hist = load_history(cfg, basis);
    const auto gen = load_scenarios(*scen, basis);
    const auto ks = stats::ks_battery(hist.values, hist.plant_ids, gen.values, gen.plant_ids, basis, alpha, cap, seed);
    const auto corr = stats::corr_compare(hist.values, hist.plant_ids, gen.values, gen.plant_ids);

    ensure_dir(dir);
    std::vector<std::string> files = {"report.json",   "ks.csv",          "pvalue_cdf.csv", "corr_error_hist.csv",
                                      "corr_pairs.csv", "densities.csv", "quantiles.csv",  "hist_samples.csv",
                                      "gen_samples.csv", "validate.config"};
    write_ks_csv(ks, dir / "ks.csv");

    std::string cdf = "rank,p_value,cdf\n";
    for (std::size_t k = 0; k < ks.sorted_p_values.size(); ++k) {
        cdf += std::to_string(k + 1) + ',' + format_double(ks.sorted_p_values[k]) + ',' +
               format_double(static_cast<double>(k + 1) / static_cast<double>(ks.sorted_p_values.size())) + '\n';
    }
    write_text(dir / "pvalue_cdf.csv", cdf);

    std::string hist_csv = "bin_lo,bin_hi,count\n";
    for (std::size_t b = 0; b < corr.histogram.size(); ++b) {
        hist_csv += histogram_edges(b) + ',' + std::to_string(corr.histogram[b]) + '\n';
    }
    write_text(dir / "corr_error_hist.csv", hist_csv);

    std::string pairs = "plant_a,plant_b,hist_r,gen_r,abs_error\n";
    for (std::size_t k = 0; k < corr.pairs.size(); ++k) {
        const auto [i, j] = corr.pairs[k];
        const auto ii = static_cast<Eigen::Index>(i);
        const auto jj = static_cast<Eigen::Index>(j);
        pairs += corr.plant_ids[i] + ',' + corr.plant_ids[j] + ',' + format_double(corr.hist_corr(ii, jj)) + ',' +
                 format_double(corr.gen_corr(ii, jj)) + ',' + format_double(corr.abs_errors[k]) + '\n';
    }
    write_text(dir / "corr_pairs.csv", pairs);

    std::string dens = "plant_id,bin_lo,bin_hi,hist_density,gen_density\n";
    std::string quant = "plant_id,level,hist,gen\n";
    for (const auto& id : hist.plant_ids) {
        const auto t = stats::density_summary(hist.values, hist.plant_ids, gen.values, gen.plant_ids, id, bins);
        for (std::size_t b = 0; b + 1 < t.edges.size(); ++b) {
            dens += id + ',' + format_double(t.edges[b]) + ',' + format_double(t.edges[b + 1]) + ',' +
                    format_double(t.hist_density[b]) + ',' + format_double(t.gen_density[b]) + '\n';
        }
        for (std::size_t k = 0; k < t.levels.size(); ++k) {
            quant += id + ',' + format_double(t.levels[k]) + ',' + format_double(t.hist_quantiles[k]) + ',' +
                     format_double(t.gen_quantiles[k]) + '\n';
        }
    }
    write_text(dir / "densities.csv", dens);
    write_text(dir / "quantiles.csv", quant);

    const std::size_t sample_cap = cfg.get_size("sample_cap", 2000);
    write_wide_csv(subsample_rows(hist.values, sample_cap), hist.plant_ids, dir / "hist_samples.csv");
    write_wide_csv(subsample_rows(gen.values, sample_cap), gen.plant_ids, dir / "gen_samples.csv");

    json report = {{"command", "validate"},
                   {"software_version", std::string(model_io::software_version())},
                   {"config_hash", config_hash(cfg)},
                   {"basis", std::string(stats::to_string(basis))},
                   {"n_hist", hist.values.rows()},
                   {"n_gen", gen.values.rows()},
                   {"ks", ks_json(ks)},
                   {"corr", corr_json(corr)}};
    const fs::path meta = fs::path(*scen) / "metadata.json";
    if (fs::exists(meta)) {
        const json m = model_io::read_json(meta);
        report["scenarios"] = {{"model_hash", m.value("model_hash", "")},
                               {"seed", m.value("seed", std::uint64_t{0})},
                               {"clipped", m.value("clipped", json::object())}};
    }
    model_io::write_json(report, dir / "report.json");
    cfg.save(dir / "validate.config");
    write_manifest(dir, "validate", cfg, files);
    out << "validate: KS pass rate " << format_double(ks.pass_rate) << ", correlation MAE " << format_double(corr.mae)
        << " (max " << format_double(corr.max_err) << ") -> " << dir.string() << '\n';
    return 0;
}

int cmd_compare(const KeyValueConfig& cfg, std::ostream& out) {
    const auto path_a = optional_string(cfg, "model_a");
    const auto path_b = optional_string(cfg, "model_b");
    if (!path_a || !path_b) fail(ErrorKind::usage, "compare needs --model-a and --model-b");
    const auto a = model_io::load(*path_a);
    const auto b = model_io::load(*path_b);
    if (a.model.plant_ids != b.model.plant_ids) fail(ErrorKind::config, "the two models cover different plants");
    const auto data_override = optional_string(cfg, "data");
    Data d = reload_training_data(a, data_override);
    if (!data_override && a.metadata.at("data").at("hash") != b.metadata.at("data").at("hash")) {
        fail(ErrorKind::config, "the two models were trained on different data");
    }
    const auto basis = stats::basis_from_string(cfg.get_string("basis", "weekly"));
    const double alpha = cfg.get_double("alpha", 0.05);
    const std::size_t cap = cfg.get_size("subsample_cap", stats::default_subsample_cap);

    scenario::GenerateOptions opts;
    opts.n_scenarios = cfg.get_size("scenarios", 200);
    opts.horizon_weeks = cfg.get_size("weeks", 52);
    opts.seed = cfg.get_u64("seed", 1);
    opts.threads = cfg.get_size("threads", 1);
    const fs::path dir = output_path(cfg, "compare");

    const Matrix& hist = basis == stats::Basis::hourly ? d.hourly.values : d.weekly.values;
    const auto& ids = d.weekly.plant_ids;

    struct Result {
        stats::KsBattery ks;
        stats::CorrReport corr;
        double clipped_fraction = 0.0;
    };
    auto evaluate = [&](const model_io::ModelArtifact& art) {
        const auto profiles = dataset::extract_profiles(d.hourly, d.weekly, data_mean_floor(art));
        const auto set = scenario::generate_set(art.model, art.model.posteriors, profiles, opts);
        const Matrix& gen = basis == stats::Basis::hourly ? set.hourly : set.weekly;
        return Result{stats::ks_battery(hist, ids, gen, set.plant_ids, basis, alpha, cap, opts.seed),
                      stats::corr_compare(hist, ids, gen, set.plant_ids), set.clipped_fraction()};
    };
    const Result ra = evaluate(a);
    const Result rb = evaluate(b);

    ensure_dir(dir);
    const auto xy = stats::xy_corr_table(ra.corr.hist_corr, ra.corr.gen_corr, rb.corr.gen_corr);
    std::string xy_csv = "plant_a,plant_b,hist_r,a_r,b_r\n";
    for (const auto& row : xy) {
        xy_csv += ra.corr.plant_ids[row.i] + ',' + ra.corr.plant_ids[row.j] + ',' + format_double(row.hist) + ',' +
                  format_double(row.a) + ',' + format_double(row.b) + '\n';
    }
    write_text(dir / "xy_corr.csv", xy_csv);

    std::string curves = "epoch,a_train_total,a_test_total,b_train_total,b_test_total\n";
    const auto& la = a.model.training_log;
    const auto& lb = b.model.training_log;
    for (std::size_t e = 0; e < std::max(la.size(), lb.size()); ++e) {
        curves += std::to_string(e + 1) + ',';
        curves += e < la.size() ? format_double(la[e].train_total) + ',' + format_double(la[e].test_total) : ",";
        curves += ',';
        curves += e < lb.size() ? format_double(lb[e].train_total) + ',' + format_double(lb[e].test_total) : ",";
        curves += '\n';
    }
    write_text(dir / "loss_curves.csv", curves);

    std::string cdf = "rank,a_p_value,b_p_value\n";
    for (std::size_t k = 0; k < ra.ks.sorted_p_values.size(); ++k) {
        cdf += std::to_string(k + 1) + ',' + format_double(ra.ks.sorted_p_values[k]) + ',' +
               format_double(rb.ks.sorted_p_values[k]) + '\n';
    }
    write_text(dir / "pvalue_cdf.csv", cdf);

    std::string hist_csv = "bin_lo,bin_hi,a_count,b_count\n";
    for (std::size_t k = 0; k < ra.corr.histogram.size(); ++k) {
        hist_csv += histogram_edges(k) + ',' + std::to_string(ra.corr.histogram[k]) + ',' +
                    std::to_string(rb.corr.histogram[k]) + '\n';
    }
    write_text(dir / "corr_error_hist.csv", hist_csv);

    auto summary = [](const model_io::ModelArtifact& art, const Result& r, const std::string& path) {
        const auto& m = art.model;
        return json{{"model", path},
                    {"variant", std::string(vae::to_string(m.variant))},
                    {"model_hash", model_io::model_hash(m)},
                    {"best_epoch", m.best_epoch},
                    {"best_test_loss", m.training_log.at(m.best_epoch - 1).test_total},
                    {"ks_pass_rate", r.ks.pass_rate},
                    {"corr_mae", r.corr.mae},
                    {"corr_max_err", r.corr.max_err},
                    {"clipped_fraction", r.clipped_fraction},
                    {"ks", ks_json(r.ks)}};
    };
    const json report = {{"command", "compare"},
                         {"software_version", std::string(model_io::software_version())},
                         {"config_hash", config_hash(cfg)},
                         {"basis", std::string(stats::to_string(basis))},
                         {"seed", opts.seed},
                         {"n_scenarios", opts.n_scenarios},
                         {"horizon_weeks", opts.horizon_weeks},
                         {"a", summary(a, ra, *path_a)},
                         {"b", summary(b, rb, *path_b)}};
    model_io::write_json(report, dir / "compare.json");
    cfg.save(dir / "compare.config");
    write_manifest(dir, "compare", cfg,
                   {"compare.json", "xy_corr.csv", "loss_curves.csv", "pvalue_cdf.csv", "corr_error_hist.csv",
                    "compare.config"});
    out << "compare: KS pass rate " << format_double(ra.ks.pass_rate) << " vs " << format_double(rb.ks.pass_rate)
        << ", correlation MAE " << format_double(ra.corr.mae) << " vs " << format_double(rb.corr.mae) << " -> "
        << dir.string() << '\n';
    return 0;
}

void add_data_options(Command& c, const std::string& data_flags, const std::string& data_key) {
    c.add(data_flags, data_key, "", "synth/prep output directory or hourly CSV");
    c.add("--capacities", "capacities", "", "CSV plant_id,capacity,kind");
    c.add("--train-fraction", "train_fraction", "0.8", "fraction of weeks used for training");
    c.add("--split-seed", "split_seed", "1", "seed of the train/test shuffle");
}

}  // namespace

fs::path default_output_root() {
    if (const char* root = std::getenv(output_root_env); root != nullptr && *root != '\0') return root;
    return "rbfvae-out";
}

std::string format_error(const Error& error) {
    std::string msg;
    for (char ch : std::string(error.what())) {
        if (ch == '"' || ch == '\\') {
            msg += '\\';
            msg += ch;
        } else if (ch == '\n') {
            msg += "\\n";
        } else {
            msg += ch;
        }
    }
    return std::string("error: kind=") + to_string(error.kind()) + " message=\"" + msg + "\"";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"RBF-kernel VAE scenario generator for wind and solar plants", "rbfvae"};
    app.set_version_flag("--version", std::string(model_io::software_version()));
    app.require_subcommand(1);

    std::vector<std::unique_ptr<Command>> commands;
    auto make = [&](const std::string& name, const std::string& help) -> Command& {
        auto c = std::make_unique<Command>();
        c->name = name;
        c->app = app.add_subcommand(name, help);
        c->app->add_option("--config", c->config_path, "flat key = value file; flags override it");
        commands.push_back(std::move(c));
        return *commands.back();
    };

    auto& synth = make("synth", "write a synthetic hourly wind/solar panel");
    synth.add("--plants", "n_plants", "16", "number of plants");
    synth.add("--weeks", "n_weeks", "520", "number of weeks");
    synth.add("--seed", "seed", "7", "generator seed");
    synth.add("--solar-fraction", "solar_fraction", "0.375", "share of solar plants");
    synth.add("--rho", "rho", "0.8", "pairwise loading of the common factor");
    synth.add("--out", "out", "", "output directory");

    auto& prep = make("prep", "normalize, aggregate to weeks and split");
    add_data_options(prep, "--input", "input");
    prep.add("--out", "out", "", "output directory");

    const vae::TrainConfig td;
    auto& train = make("train", "train a model with gamma search");
    add_data_options(train, "--data,--prep", "data");
    train.add("--variant", "variant", "rbf-implicit", "rbf-implicit, rbf-explicit or pure");
    train.add("--epochs", "epochs", std::to_string(td.epochs), "maximum epochs");
    train.add("--batch-size", "batch_size", std::to_string(td.batch_size), "mini-batch size");
    train.add("--learning-rate", "learning_rate", format_double(td.learning_rate), "Adam learning rate");
    train.add("--seed", "seed", std::to_string(td.seed), "training seed");
    train.add("--kl-weight", "kl_weight", format_double(td.kl_weight), "weight of the KL term");
    train.add("--d-latent", "d_latent", std::to_string(td.d_latent), "latent dimension");
    train.add("--hidden", "hidden", join_sizes(td.hidden), "hidden widths, comma separated");
    train.add("--patience", "patience", std::to_string(td.patience), "early-stopping patience (epochs)");
    train.add("--gamma-multipliers", "gamma_multipliers", join_doubles(td.gamma_multipliers),
              "gamma grid as multiples of 1 / median pairwise squared distance");
    train.add("--gamma", "gamma", "", "fixed gamma (skips the grid)");
    train.add("--max-centers", "max_centers", std::to_string(td.max_centers), "kernel center cap");
    train.add("--inverse-epochs", "inverse_epochs", std::to_string(td.inverse.epochs), "inverse net epochs");
    train.add("--inverse-batch-size", "inverse_batch_size", std::to_string(td.inverse.batch_size),
              "inverse net batch size");
    train.add("--inverse-learning-rate", "inverse_learning_rate", format_double(td.inverse.learning_rate),
              "inverse net learning rate");
    train.add("--inverse-seed", "inverse_seed", std::to_string(td.inverse.seed), "inverse net seed");
    train.add("--mean-floor", "mean_floor", format_double(dataset::default_mean_floor),
              "weekly mean below which profiles are flat");
    train.add("--threads", "threads", "1", "parallel gamma candidates");
    train.add("--out", "out", "", "model JSON path");

    auto& generate = make("generate", "generate hourly scenarios from a trained model");
    generate.add("--model", "model", "", "model JSON");
    generate.add("--data", "data", "", "override the training data location recorded in the model");
    generate.add("--scenarios", "scenarios", "100", "number of scenarios");
    generate.add("--weeks", "weeks", "52", "weeks per scenario");
    generate.add("--seed", "seed", "1", "generation seed");
    generate.add("--threads", "threads", "1", "parallel scenarios");
    generate.add("--hourly", "hourly", "true", "write scenarios.csv (hourly long format)");
    generate.add("--memory-budget-mb", "memory_budget_mb", std::to_string(scenario::default_memory_budget >> 20),
                 "cap on in-memory hourly values");
    generate.add("--out", "out", "", "output directory");

    auto& validate = make("validate", "KS battery, correlation and density report");
    validate.add("--hist", "hist", "", "synth/prep directory or hourly CSV");
    validate.add("--capacities", "capacities", "", "CSV plant_id,capacity,kind");
    validate.add("--scen", "scen", "", "generate output directory");
    validate.add("--basis", "basis", "weekly", "weekly or hourly");
    validate.add("--alpha", "alpha", "0.05", "KS significance level");
    validate.add("--subsample-cap", "subsample_cap", std::to_string(stats::default_subsample_cap),
                 "hourly basis: values per side");
    validate.add("--seed", "seed", "1", "hourly subsampling seed");
    validate.add("--density-bins", "density_bins", "50", "histogram bins per plant");
    validate.add("--sample-cap", "sample_cap", "2000", "rows in the 2D sample tables");
    validate.add("--out", "out", "", "report directory");

    auto& compare = make("compare", "paired comparison of two trained models");
    compare.add("--model-a", "model_a", "", "first model JSON");
    compare.add("--model-b", "model_b", "", "second model JSON");
    compare.add("--data", "data", "", "override the training data location recorded in the models");
    compare.add("--scenarios", "scenarios", "200", "scenarios per model");
    compare.add("--weeks", "weeks", "52", "weeks per scenario");
    compare.add("--seed", "seed", "1", "generation seed shared by both models");
    compare.add("--basis", "basis", "weekly", "weekly or hourly");
    compare.add("--alpha", "alpha", "0.05", "KS significance level");
    compare.add("--subsample-cap", "subsample_cap", std::to_string(stats::default_subsample_cap),
                "hourly basis: values per side");
    compare.add("--threads", "threads", "1", "parallel scenarios");
    compare.add("--out", "out", "", "output directory");

    const std::map<std::string, std::function<int(const KeyValueConfig&, std::ostream&)>> handlers = {
        {"synth", cmd_synth},       {"prep", cmd_prep},         {"train", cmd_train},
        {"generate", cmd_generate}, {"validate", cmd_validate}, {"compare", cmd_compare}};

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return 0;
        }
        err << format_error(Error(ErrorKind::usage, e.what())) << '\n';
        return exit_code(ErrorKind::usage);
    }

    try {
        for (const auto& c : commands) {
            if (c->app->parsed()) return handlers.at(c->name)(c->resolve(), out);
        }
        fail(ErrorKind::usage, "no command given");
    } catch (const Error& e) {
        err << format_error(e) << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << format_error(Error(ErrorKind::io, e.what())) << '\n';
        return exit_code(ErrorKind::io);
    }
}

}  // namespace rbfvae::cli
