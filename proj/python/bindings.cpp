#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

#include "rbfvae/dataset.hpp"
#include "rbfvae/error.hpp"
#include "rbfvae/latent_select.hpp"
#include "rbfvae/model_io.hpp"
#include "rbfvae/rbf.hpp"
#include "rbfvae/scenario.hpp"
#include "rbfvae/stats.hpp"
#include "rbfvae/vae.hpp"

namespace py = pybind11;
using namespace rbfvae;

namespace {

PyObject* error_type = nullptr;

py::dict ks_dict(const stats::KsBattery& b) {
    py::list results;
    for (const auto& r : b.results) {
        py::dict d;
        d["plant_id"] = r.plant_id;
        d["statistic"] = r.statistic;
        d["p_value"] = r.p_value;
        d["n_hist"] = r.n_hist;
        d["n_gen"] = r.n_gen;
        results.append(d);
    }
    py::dict out;
    out["results"] = results;
    out["alpha"] = b.alpha;
    out["pass_rate"] = b.pass_rate;
    out["sorted_p_values"] = b.sorted_p_values;
    return out;
}

py::dict corr_dict(const stats::CorrReport& c) {
    py::dict out;
    out["plant_ids"] = c.plant_ids;
    out["hist_corr"] = c.hist_corr;
    out["gen_corr"] = c.gen_corr;
    out["pairs"] = c.pairs;
    out["abs_errors"] = c.abs_errors;
    out["mae"] = c.mae;
    out["max_err"] = c.max_err;
    out["histogram"] = c.histogram;
    out["warnings"] = c.warnings;
    return out;
}

Matrix log_matrix(const vae::VaeModel& m) {
    Matrix out(static_cast<Eigen::Index>(m.training_log.size()), 7);
    for (std::size_t i = 0; i < m.training_log.size(); ++i) {
        const auto& r = m.training_log[i];
        out.row(static_cast<Eigen::Index>(i)) << static_cast<double>(r.epoch), r.train_total, r.train_recon,
            r.train_kl, r.test_total, r.test_recon, r.test_kl;
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_rbfvae, m) {
    m.doc() = "RBF-kernel VAE scenario generation for wind and solar plants";
    m.attr("__version__") = std::string(model_io::software_version());

    error_type = PyErr_NewException("rbfvae.Error", PyExc_RuntimeError, nullptr);
    m.attr("Error") = py::handle(error_type);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
            exc.attr("kind") = to_string(e.kind());
            PyErr_SetObject(error_type, exc.ptr());
        }
    });

    py::class_<dataset::HourlyPanel>(m, "HourlyPanel")
        .def_readonly("plant_ids", &dataset::HourlyPanel::plant_ids)
        .def_readonly("start_hour", &dataset::HourlyPanel::start_hour)
        .def_readonly("values", &dataset::HourlyPanel::values)
        .def_property_readonly("plant_kinds",
                               [](const dataset::HourlyPanel& p) {
                                   std::vector<std::string> out;
                                   for (auto k : p.plant_kinds) out.emplace_back(dataset::to_string(k));
                                   return out;
                               })
        .def("write_csv", [](const dataset::HourlyPanel& p, const std::filesystem::path& path) {
            dataset::write_hourly_csv(p, path);
        });

    py::class_<dataset::WeeklyPanel>(m, "WeeklyPanel")
        .def_readonly("plant_ids", &dataset::WeeklyPanel::plant_ids)
        .def_readonly("week_index", &dataset::WeeklyPanel::week_index)
        .def_readonly("values", &dataset::WeeklyPanel::values);

    py::class_<dataset::WeeklyView>(m, "WeeklyView")
        .def_readonly("plant_ids", &dataset::WeeklyView::plant_ids)
        .def_readonly("week_indices", &dataset::WeeklyView::week_indices)
        .def_readonly("values", &dataset::WeeklyView::values);

    py::class_<dataset::Split>(m, "Split")
        .def_readonly("train_indices", &dataset::Split::train_indices)
        .def_readonly("test_indices", &dataset::Split::test_indices)
        .def_readonly("train", &dataset::Split::train)
        .def_readonly("test", &dataset::Split::test);

    py::class_<dataset::ProfileStore>(m, "ProfileStore")
        .def_property_readonly("n_weeks", &dataset::ProfileStore::n_weeks)
        .def_property_readonly("plant_ids", &dataset::ProfileStore::plant_ids)
        .def("profile", [](const dataset::ProfileStore& s, std::size_t week, std::size_t plant) {
            const auto span = s.profile(week, plant);
            return std::vector<double>(span.begin(), span.end());
        });

    m.def(
        "synth",
        [](std::size_t n_plants, std::size_t n_weeks, std::uint64_t seed, double solar_fraction, double rho) {
            dataset::SynthSpec spec{n_plants, n_weeks, seed, solar_fraction, rho};
            spec.validate();
            return dataset::synth_panel(spec);
        },
        py::arg("n_plants") = 16, py::arg("n_weeks") = 520, py::arg("seed") = 7, py::arg("solar_fraction") = 0.375,
        py::arg("rho") = 0.8, "Synthetic hourly wind/solar panel.");
    m.def(
        "ingest_csv",
        [](const std::filesystem::path& path, std::optional<std::filesystem::path> capacities) {
            return dataset::ingest_csv(path, capacities ? dataset::read_capacity_csv(*capacities)
                                                        : dataset::CapacityMap{});
        },
        py::arg("path"), py::arg("capacities") = std::nullopt);
    m.def("aggregate_weekly", &dataset::aggregate_weekly, py::arg("panel"));
    m.def(
        "split",
        [](const dataset::WeeklyPanel& w, double fraction, std::uint64_t seed) {
            return dataset::split(w, dataset::SplitSpec{fraction, seed});
        },
        py::arg("weekly"), py::arg("train_fraction") = 0.8, py::arg("seed") = 1);
    m.def("extract_profiles", &dataset::extract_profiles, py::arg("panel"), py::arg("weekly"),
          py::arg("mean_floor") = dataset::default_mean_floor);

    py::class_<vae::TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &vae::TrainConfig::epochs)
        .def_readwrite("batch_size", &vae::TrainConfig::batch_size)
        .def_readwrite("learning_rate", &vae::TrainConfig::learning_rate)
        .def_readwrite("seed", &vae::TrainConfig::seed)
        .def_readwrite("kl_weight", &vae::TrainConfig::kl_weight)
        .def_readwrite("d_latent", &vae::TrainConfig::d_latent)
        .def_readwrite("hidden", &vae::TrainConfig::hidden)
        .def_readwrite("patience", &vae::TrainConfig::patience)
        .def_readwrite("gamma_multipliers", &vae::TrainConfig::gamma_multipliers)
        .def_readwrite("gamma", &vae::TrainConfig::gamma)
        .def_readwrite("max_centers", &vae::TrainConfig::max_centers)
        .def_property(
            "inverse_epochs", [](const vae::TrainConfig& c) { return c.inverse.epochs; },
            [](vae::TrainConfig& c, std::size_t v) { c.inverse.epochs = v; });

    py::class_<model_io::ModelArtifact>(m, "Model")
        .def_property_readonly("variant",
                               [](const model_io::ModelArtifact& a) { return std::string(vae::to_string(a.model.variant)); })
        .def_property_readonly("plant_ids", [](const model_io::ModelArtifact& a) { return a.model.plant_ids; })
        .def_property_readonly("d_latent", [](const model_io::ModelArtifact& a) { return a.model.d_latent; })
        .def_property_readonly("gamma",
                               [](const model_io::ModelArtifact& a) -> std::optional<double> {
                                   if (!a.model.rbf) return std::nullopt;
                                   return a.model.rbf->gamma();
                               })
        .def_property_readonly("best_epoch", [](const model_io::ModelArtifact& a) { return a.model.best_epoch; })
        .def_property_readonly("training_log", [](const model_io::ModelArtifact& a) { return log_matrix(a.model); },
                               "Columns: epoch, train total/recon/kl, test total/recon/kl.")
        .def_property_readonly("posterior_mus",
                               [](const model_io::ModelArtifact& a) { return a.model.posteriors.mus(); })
        .def_property_readonly("posterior_vars",
                               [](const model_io::ModelArtifact& a) { return a.model.posteriors.vars(); })
        .def_property_readonly("hash", [](const model_io::ModelArtifact& a) { return model_io::model_hash(a.model); })
        .def("encode",
             [](const model_io::ModelArtifact& a, const Matrix& x) {
                 auto e = vae::encode(a.model, x);
                 return py::make_tuple(e.mu, e.logvar);
             })
        .def("decode", [](const model_io::ModelArtifact& a, const Matrix& z) { return vae::decode(a.model, z); })
        .def("save", [](const model_io::ModelArtifact& a, const std::filesystem::path& path) { model_io::save(a, path); });

    m.def("load_model", &model_io::load, py::arg("path"));
    m.def(
        "train",
        [](const std::string& variant, const dataset::Split& s, const vae::TrainConfig& config, std::size_t threads) {
            model_io::ModelArtifact a;
            {
                py::gil_scoped_release release;
                auto selected =
                    vae::train_with_gamma_search(vae::variant_from_string(variant), s.train, s.test, config, threads);
                a.model = std::move(selected.model);
                a.selection = std::move(selected.report);
            }
            a.metadata = {{"command", "python"}, {"software_version", std::string(model_io::software_version())}};
            return a;
        },
        py::arg("variant"), py::arg("split"), py::arg("config") = vae::TrainConfig{}, py::arg("threads") = 1);

    py::class_<scenario::ScenarioSet>(m, "ScenarioSet")
        .def_readonly("n_scenarios", &scenario::ScenarioSet::n_scenarios)
        .def_readonly("horizon_weeks", &scenario::ScenarioSet::horizon_weeks)
        .def_readonly("seed", &scenario::ScenarioSet::seed)
        .def_readonly("plant_ids", &scenario::ScenarioSet::plant_ids)
        .def_readonly("weekly", &scenario::ScenarioSet::weekly)
        .def_readonly("hourly", &scenario::ScenarioSet::hourly)
        .def_readonly("profile_indices", &scenario::ScenarioSet::profile_indices)
        .def_readonly("selection_distances", &scenario::ScenarioSet::selection_distances)
        .def_property_readonly("clipped",
                               [](const scenario::ScenarioSet& s) {
                                   Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> c(
                                       static_cast<Eigen::Index>(s.n_scenarios * s.horizon_weeks),
                                       static_cast<Eigen::Index>(s.n_plants()));
                                   std::copy(s.clipped.begin(), s.clipped.end(), c.data());
                                   return c;
                               })
        .def("clipped_fraction", &scenario::ScenarioSet::clipped_fraction)
        .def("write_weekly_csv", [](const scenario::ScenarioSet& s, const std::filesystem::path& p) {
            scenario::write_weekly_csv(s, p);
        })
        .def("write_hourly_csv", [](const scenario::ScenarioSet& s, const std::filesystem::path& p) {
            scenario::write_hourly_csv(s, p);
        });

    m.def(
        "generate",
        [](const model_io::ModelArtifact& a, const dataset::ProfileStore& profiles, std::size_t n_scenarios,
           std::size_t horizon_weeks, std::uint64_t seed, std::size_t threads) {
            scenario::GenerateOptions o;
            o.n_scenarios = n_scenarios;
            o.horizon_weeks = horizon_weeks;
            o.seed = seed;
            o.threads = threads;
            py::gil_scoped_release release;
            return scenario::generate_set(a.model, a.model.posteriors, profiles, o);
        },
        py::arg("model"), py::arg("profiles"), py::arg("n_scenarios") = 100, py::arg("horizon_weeks") = 52,
        py::arg("seed") = 1, py::arg("threads") = 1);

    m.def(
        "ks_two_sample",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            const auto r = stats::ks_two_sample(a, b);
            return py::make_tuple(r.statistic, r.p_value);
        },
        py::arg("a"), py::arg("b"), "Two-sample KS test; returns (D, p).");
    m.def(
        "ks_battery",
        [](const Matrix& hist, const std::vector<std::string>& hist_ids, const Matrix& gen,
           const std::vector<std::string>& gen_ids, const std::string& basis, double alpha, std::size_t cap,
           std::uint64_t seed) {
            return ks_dict(stats::ks_battery(hist, hist_ids, gen, gen_ids, stats::basis_from_string(basis), alpha,
                                             cap, seed));
        },
        py::arg("hist"), py::arg("hist_ids"), py::arg("gen"), py::arg("gen_ids"), py::arg("basis") = "weekly",
        py::arg("alpha") = 0.05, py::arg("subsample_cap") = stats::default_subsample_cap, py::arg("seed") = 0);
    m.def(
        "corr_compare",
        [](const Matrix& hist, const std::vector<std::string>& hist_ids, const Matrix& gen,
           const std::vector<std::string>& gen_ids) {
            return corr_dict(stats::corr_compare(hist, hist_ids, gen, gen_ids));
        },
        py::arg("hist"), py::arg("hist_ids"), py::arg("gen"), py::arg("gen_ids"));

    using Values = const std::vector<double>&;
    m.def(
        "kernel", [](Values x, Values y, double gamma) { return rbf::kernel(x, y, gamma); }, py::arg("x"),
        py::arg("y"), py::arg("gamma"));
    m.def(
        "mahalanobis_sq", [](Values z, Values mu, Values var) { return latent::mahalanobis_sq(z, mu, var); },
        py::arg("z"), py::arg("mu"), py::arg("var"));
    m.def(
        "select_profile",
        [](const Matrix& mus, const Matrix& vars, const std::vector<double>& z) {
            std::vector<std::size_t> refs(static_cast<std::size_t>(mus.rows()));
            for (std::size_t i = 0; i < refs.size(); ++i) refs[i] = i;
            const latent::LatentPosteriorStore store(mus, vars, refs);
            const auto s = latent::select_profile(store, z);
            return py::make_tuple(s.index, s.min_distance_sq);
        },
        py::arg("mus"), py::arg("vars"), py::arg("z"), "Index of the nearest posterior and its squared distance.");
}
