#include "rbfvae/model_io.hpp"

#include <fstream>

#include "rbfvae/error.hpp"
#include "rbfvae/hash.hpp"

#ifndef RBFVAE_VERSION
#define RBFVAE_VERSION "0.0.0"
#endif

namespace rbfvae::model_io {

namespace {

json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
        fail(ErrorKind::schema, "matrix payload does not match its declared shape");
    }
    Matrix m(rows, cols);
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

json model_body(const vae::VaeModel& model) {
    json j;
    j["variant"] = std::string(vae::to_string(model.variant));
    j["plant_ids"] = model.plant_ids;
    j["d_latent"] = model.d_latent;
    if (model.rbf) {
        j["rbf"] = {{"gamma", model.rbf->gamma()},
                    {"centers", matrix_to_json(model.rbf->centers())},
                    {"fingerprint", to_hex(model.rbf->fingerprint())}};
    } else {
        j["rbf"] = nullptr;
    }
    auto stack = [](const nn::Stack& s) {
        json out = json::array();
        for (const auto& layer : s) out.push_back(layer_to_json(layer));
        return out;
    };
    j["encoder"] = stack(model.encoder);
    j["mu_head"] = layer_to_json(model.mu_head);
    j["logvar_head"] = layer_to_json(model.logvar_head);
    j["decoder"] = stack(model.decoder);
    j["frozen_tail"] = model.frozen_tail;
    j["posteriors"] = {{"mus", matrix_to_json(model.posteriors.mus())},
                       {"vars", matrix_to_json(model.posteriors.vars())},
                       {"week_refs", model.posteriors.week_refs()}};
    json log = json::array();
    for (const auto& r : model.training_log) {
        log.push_back({{"epoch", r.epoch},
                       {"train_total", r.train_total},
                       {"train_recon", r.train_recon},
                       {"train_kl", r.train_kl},
                       {"test_total", r.test_total},
                       {"test_recon", r.test_recon},
                       {"test_kl", r.test_kl}});
    }
    j["training_log"] = std::move(log);
    j["best_epoch"] = model.best_epoch;
    j["inverse_net_loss"] = model.inverse_net_loss ? json(*model.inverse_net_loss) : json(nullptr);
    j["config"] = config_to_json(model.config);
    return j;
}

}  // namespace

std::string_view software_version() noexcept { return RBFVAE_VERSION; }

json config_to_json(const vae::TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"seed", c.seed},
            {"kl_weight", c.kl_weight},
            {"d_latent", c.d_latent},
            {"hidden", c.hidden},
            {"patience", c.patience},
            {"gamma_multipliers", c.gamma_multipliers},
            {"gamma", c.gamma ? json(*c.gamma) : json(nullptr)},
            {"max_centers", c.max_centers},
            {"inverse",
             {{"epochs", c.inverse.epochs},
              {"batch_size", c.inverse.batch_size},
              {"learning_rate", c.inverse.learning_rate},
              {"seed", c.inverse.seed}}}};
}

vae::TrainConfig config_from_json(const json& j) {
    vae::TrainConfig c;
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.kl_weight = j.at("kl_weight").get<double>();
    c.d_latent = j.at("d_latent").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    c.patience = j.at("patience").get<std::size_t>();
    c.gamma_multipliers = j.at("gamma_multipliers").get<std::vector<double>>();
    if (!j.at("gamma").is_null()) c.gamma = j.at("gamma").get<double>();
    c.max_centers = j.at("max_centers").get<std::size_t>();
    const auto& inv = j.at("inverse");
    c.inverse.epochs = inv.at("epochs").get<std::size_t>();
    c.inverse.batch_size = inv.at("batch_size").get<std::size_t>();
    c.inverse.learning_rate = inv.at("learning_rate").get<double>();
    c.inverse.seed = inv.at("seed").get<std::uint64_t>();
    return c;
}

json layer_to_json(const nn::DenseLayer& layer) {
    return {{"in", layer.in_width()},
            {"out", layer.out_width()},
            {"activation", std::string(nn::to_string(layer.activation))},
            {"weights", std::vector<double>(layer.weights.data(), layer.weights.data() + layer.weights.size())},
            {"biases", std::vector<double>(layer.biases.data(), layer.biases.data() + layer.biases.size())}};
}

nn::DenseLayer layer_from_json(const json& j) {
    const auto in = j.at("in").get<std::size_t>();
    const auto out = j.at("out").get<std::size_t>();
    auto layer = nn::DenseLayer::zeros(in, out, nn::activation_from_string(j.at("activation").get<std::string>()));
    const auto w = j.at("weights").get<std::vector<double>>();
    const auto b = j.at("biases").get<std::vector<double>>();
    if (w.size() != in * out || b.size() != out) fail(ErrorKind::schema, "layer parameters do not match its shape");
    std::copy(w.begin(), w.end(), layer.weights.data());
    std::copy(b.begin(), b.end(), layer.biases.data());
    return layer;
}

json to_json(const ModelArtifact& artifact) {
    json j;
    j["format"] = std::string(format_name);
    j["format_version"] = format_version;
    j["software_version"] = std::string(software_version());
    j["model_hash"] = model_hash(artifact.model);
    j["model"] = model_body(artifact.model);
    if (artifact.selection) {
        json scores = json::array();
        for (const auto& s : artifact.selection->scores) {
            scores.push_back({{"candidate", s.candidate},
                              {"gamma", s.gamma},
                              {"test_mse", s.test_mse},
                              {"ks_pass_rate", s.ks_pass_rate ? json(*s.ks_pass_rate) : json(nullptr)}});
        }
        j["selection"] = {{"scores", std::move(scores)}, {"winner", artifact.selection->winner}};
    } else {
        j["selection"] = nullptr;
    }
    j["metadata"] = artifact.metadata;
    return j;
}

ModelArtifact from_json(const json& j) {
    try {
        if (j.at("format").get<std::string>() != format_name) fail(ErrorKind::schema, "not an rbfvae model artifact");
        if (j.at("format_version").get<int>() != format_version) {
            fail(ErrorKind::schema, "unsupported model format version " + j.at("format_version").dump());
        }
        const auto& m = j.at("model");
        ModelArtifact artifact;
        auto& model = artifact.model;
        model.variant = vae::variant_from_string(m.at("variant").get<std::string>());
        model.plant_ids = m.at("plant_ids").get<std::vector<std::string>>();
        model.d_latent = m.at("d_latent").get<std::size_t>();
        if (!m.at("rbf").is_null()) {
            model.rbf.emplace(matrix_from_json(m.at("rbf").at("centers")), m.at("rbf").at("gamma").get<double>());
            if (to_hex(model.rbf->fingerprint()) != m.at("rbf").at("fingerprint").get<std::string>()) {
                fail(ErrorKind::stale_cache, "rbf layer fingerprint does not match its centers and gamma");
            }
        }
        for (const auto& l : m.at("encoder")) model.encoder.push_back(layer_from_json(l));
        model.mu_head = layer_from_json(m.at("mu_head"));
        model.logvar_head = layer_from_json(m.at("logvar_head"));
        for (const auto& l : m.at("decoder")) model.decoder.push_back(layer_from_json(l));
        model.frozen_tail = m.at("frozen_tail").get<std::size_t>();
        const auto& post = m.at("posteriors");
        model.posteriors = latent::LatentPosteriorStore(matrix_from_json(post.at("mus")),
                                                        matrix_from_json(post.at("vars")),
                                                        post.at("week_refs").get<std::vector<std::size_t>>());
        for (const auto& r : m.at("training_log")) {
            vae::EpochRecord rec;
            rec.epoch = r.at("epoch").get<std::size_t>();
            rec.train_total = r.at("train_total").get<double>();
            rec.train_recon = r.at("train_recon").get<double>();
            rec.train_kl = r.at("train_kl").get<double>();
            rec.test_total = r.at("test_total").get<double>();
            rec.test_recon = r.at("test_recon").get<double>();
            rec.test_kl = r.at("test_kl").get<double>();
            model.training_log.push_back(rec);
        }
        model.best_epoch = m.at("best_epoch").get<std::size_t>();
        if (!m.at("inverse_net_loss").is_null()) model.inverse_net_loss = m.at("inverse_net_loss").get<double>();
        model.config = config_from_json(m.at("config"));

        if (model.encoder.empty() || model.decoder.empty() ||
            model.encoder.front().in_width() != model.encoder_input_width() ||
            model.mu_head.out_width() != model.d_latent || model.decoder.front().in_width() != model.d_latent ||
            model.decoder.back().out_width() != model.n_plants() || model.frozen_tail >= model.decoder.size()) {
            fail(ErrorKind::schema, "model layer shapes are inconsistent");
        }
        if (!j.at("selection").is_null()) {
            vae::SelectionReport report;
            for (const auto& s : j.at("selection").at("scores")) {
                vae::CandidateScore score;
                score.candidate = s.at("candidate").get<std::size_t>();
                score.gamma = s.at("gamma").get<double>();
                score.test_mse = s.at("test_mse").get<double>();
                if (!s.at("ks_pass_rate").is_null()) score.ks_pass_rate = s.at("ks_pass_rate").get<double>();
                report.scores.push_back(score);
            }
            report.winner = j.at("selection").at("winner").get<std::size_t>();
            artifact.selection = std::move(report);
        }
        artifact.metadata = j.value("metadata", json::object());
        return artifact;
    } catch (const json::exception& e) {
        fail(ErrorKind::schema, std::string("malformed model artifact: ") + e.what());
    }
}

std::string model_hash(const vae::VaeModel& model) {
    return to_hex(fnv1a(model_body(model).dump()));
}

void write_json(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << j.dump(1) << '\n';
    if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::schema, path.string() + ": " + e.what());
    }
}

void save(const ModelArtifact& artifact, const std::filesystem::path& path) { write_json(to_json(artifact), path); }

ModelArtifact load(const std::filesystem::path& path) { return from_json(read_json(path)); }

}  // namespace rbfvae::model_io
