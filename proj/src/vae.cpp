#include "rbfvae/vae.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "rbfvae/error.hpp"
#include "rbfvae/rng.hpp"
#include "rbfvae/stats.hpp"

namespace rbfvae::vae {

namespace {

const double log_variance_floor = std::log(latent::variance_floor);

std::span<const nn::DenseLayer> one(const nn::DenseLayer& layer) { return {&layer, 1}; }

std::vector<nn::DenseLayer*> trainable_layers(VaeModel& model) {
    std::vector<nn::DenseLayer*> out;
    for (auto& layer : model.encoder) out.push_back(&layer);
    out.push_back(&model.mu_head);
    out.push_back(&model.logvar_head);
    for (std::size_t k = 0; k + model.frozen_tail < model.decoder.size(); ++k) out.push_back(&model.decoder[k]);
    return out;
}

std::vector<const nn::DenseLayer*> trainable_layers(const VaeModel& model) {
    std::vector<const nn::DenseLayer*> out;
    for (auto* layer : trainable_layers(const_cast<VaeModel&>(model))) out.push_back(layer);
    return out;
}

std::vector<nn::LayerGradient> ordered_gradients(const VaeModel& model, const ModelGradients& grads) {
    std::vector<nn::LayerGradient> out(grads.encoder.begin(), grads.encoder.end());
    out.push_back(grads.mu_head);
    out.push_back(grads.logvar_head);
    for (std::size_t k = 0; k + model.frozen_tail < model.decoder.size(); ++k) out.push_back(grads.decoder[k]);
    return out;
}

Matrix gather_rows(const Matrix& source, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), source.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = source.row(static_cast<Eigen::Index>(rows[r]));
    }
    return out;
}

}  // namespace

std::string_view to_string(Variant variant) noexcept {
    switch (variant) {
        case Variant::rbf_implicit: return "rbf-implicit";
        case Variant::rbf_explicit: return "rbf-explicit";
        case Variant::pure: break;
    }
    return "pure";
}

Variant variant_from_string(std::string_view text) {
    if (text == "rbf-implicit" || text == "rbf_implicit") return Variant::rbf_implicit;
    if (text == "rbf-explicit" || text == "rbf_explicit") return Variant::rbf_explicit;
    if (text == "pure") return Variant::pure;
    fail(ErrorKind::usage, "unknown variant '" + std::string(text) + "' (expected rbf-implicit, rbf-explicit or pure)");
}

bool uses_rbf(Variant variant) noexcept { return variant != Variant::pure; }

void TrainConfig::validate() const {
    if (epochs == 0 || batch_size == 0 || d_latent == 0 || patience == 0) {
        fail(ErrorKind::config, "epochs, batch_size, d_latent and patience must be positive");
    }
    if (!(learning_rate > 0.0)) fail(ErrorKind::config, "learning_rate must be positive");
    if (!(kl_weight >= 0.0)) fail(ErrorKind::config, "kl_weight must be >= 0");
    if (hidden.empty()) fail(ErrorKind::config, "at least one hidden layer is required");
    for (auto w : hidden) {
        if (w == 0) fail(ErrorKind::config, "hidden widths must be positive");
    }
    if (gamma_multipliers.empty() && !gamma) fail(ErrorKind::config, "gamma grid is empty");
    for (double g : gamma_multipliers) {
        if (!(g > 0.0)) fail(ErrorKind::config, "gamma multipliers must be positive");
    }
    if (gamma && !(*gamma > 0.0)) fail(ErrorKind::config, "gamma must be positive");
    if (max_centers < 2) fail(ErrorKind::config, "max_centers must be >= 2");
}

std::size_t VaeModel::encoder_input_width() const {
    return rbf ? rbf->n_centers() : plant_ids.size();
}

VaeModel build_model(Variant variant, std::vector<std::string> plant_ids, std::optional<rbf::RbfLayer> layer,
                     const std::optional<rbf::InverseNet>& inverse, const TrainConfig& config) {
    config.validate();
    if (uses_rbf(variant) != layer.has_value()) {
        fail(ErrorKind::usage, std::string("variant ") + std::string(to_string(variant)) +
                                   (layer ? " does not take" : " requires") + " an rbf layer");
    }
    if (variant == Variant::rbf_explicit && !inverse) {
        fail(ErrorKind::usage, "rbf-explicit variant requires a trained inverse net");
    }
    const std::size_t n_plants = plant_ids.size();
    if (layer && layer->input_width() != n_plants) {
        fail(ErrorKind::dimension, "rbf centers do not match the plant count");
    }

    VaeModel model;
    model.variant = variant;
    model.plant_ids = std::move(plant_ids);
    model.rbf = std::move(layer);
    model.d_latent = config.d_latent;
    model.config = config;

    Rng init = make_stream(config.seed, "init");
    std::size_t prev = model.encoder_input_width();
    for (auto width : config.hidden) {
        model.encoder.push_back(nn::DenseLayer::glorot(prev, width, nn::Activation::relu, init));
        prev = width;
    }
    model.mu_head = nn::DenseLayer::glorot(prev, config.d_latent, nn::Activation::identity, init);
    model.logvar_head = nn::DenseLayer::glorot(prev, config.d_latent, nn::Activation::identity, init);

    prev = config.d_latent;
    for (auto it = config.hidden.rbegin(); it != config.hidden.rend(); ++it) {
        model.decoder.push_back(nn::DenseLayer::glorot(prev, *it, nn::Activation::relu, init));
        prev = *it;
    }
    switch (variant) {
        case Variant::pure:
            model.decoder.push_back(nn::DenseLayer::glorot(prev, n_plants, nn::Activation::sigmoid, init));
            break;
        case Variant::rbf_implicit:
            model.decoder.push_back(nn::DenseLayer::glorot(prev, 2 * n_plants, nn::Activation::relu, init));
            model.decoder.push_back(nn::DenseLayer::glorot(2 * n_plants, n_plants, nn::Activation::sigmoid, init));
            break;
        case Variant::rbf_explicit: {
            const std::size_t m = model.rbf->n_centers();
            if (inverse->stack.empty() || inverse->stack.front().in_width() != m ||
                inverse->stack.back().out_width() != n_plants) {
                fail(ErrorKind::dimension, "inverse net does not map the feature space to the plants");
            }
            model.decoder.push_back(nn::DenseLayer::glorot(prev, m, nn::Activation::sigmoid, init));
            model.decoder.insert(model.decoder.end(), inverse->stack.begin(), inverse->stack.end());
            model.frozen_tail = inverse->stack.size();
            model.inverse_net_loss = inverse->final_loss;
            break;
        }
    }
    return model;
}

Matrix encoder_input(const VaeModel& model, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != model.n_plants()) {
        fail(ErrorKind::dimension, "input has " + std::to_string(x.cols()) + " columns, model expects " +
                                       std::to_string(model.n_plants()));
    }
    return model.rbf ? rbf::rbf_features(*model.rbf, x) : x;
}

Encoding encode_features(const VaeModel& model, const Matrix& encoder_in) {
    const Matrix hidden = nn::predict(model.encoder, encoder_in);
    return {nn::predict(one(model.mu_head), hidden),
            nn::predict(one(model.logvar_head), hidden).cwiseMax(log_variance_floor)};
}

Encoding encode(const VaeModel& model, const Matrix& x) {
    return encode_features(model, encoder_input(model, x));
}

Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& epsilon) {
    if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols() || mu.rows() != epsilon.rows() ||
        mu.cols() != epsilon.cols()) {
        fail(ErrorKind::dimension, "reparameterize: mu, logvar and epsilon differ in shape");
    }
    return mu.array() + (0.5 * logvar.array()).exp() * epsilon.array();
}

Matrix decode(const VaeModel& model, const Matrix& z) {
    if (static_cast<std::size_t>(z.cols()) != model.d_latent) {
        fail(ErrorKind::dimension, "latent batch has width " + std::to_string(z.cols()) + ", model has d = " +
                                       std::to_string(model.d_latent));
    }
    return nn::predict(model.decoder, z);
}

LossTerms loss(const Matrix& x, const Matrix& x_hat, const Matrix& mu, const Matrix& logvar, double kl_weight) {
    if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols() || mu.rows() != logvar.rows() ||
        mu.cols() != logvar.cols() || mu.rows() != x.rows()) {
        fail(ErrorKind::dimension, "loss: inconsistent shapes");
    }
    if (!x.allFinite() || !x_hat.allFinite() || !mu.allFinite() || !logvar.allFinite()) {
        fail(ErrorKind::numeric, "loss: non-finite input");
    }
    const auto batch = static_cast<double>(x.rows());
    LossTerms terms;
    terms.recon = (x_hat - x).squaredNorm() / static_cast<double>(x.size());
    terms.kl = -0.5 * (1.0 + logvar.array() - mu.array().square() - logvar.array().exp()).sum() / batch;
    terms.total = terms.recon + kl_weight * terms.kl;
    return terms;
}

Evaluation evaluate(const VaeModel& model, const Matrix& encoder_in, const Matrix& x, const Matrix& epsilon,
                    double kl_weight) {
    const auto enc = nn::forward(model.encoder, encoder_in);
    const auto mu_fwd = nn::forward(one(model.mu_head), enc.output);
    const auto lv_fwd = nn::forward(one(model.logvar_head), enc.output);
    const Matrix& mu = mu_fwd.output;
    const Matrix logvar = lv_fwd.output.cwiseMax(log_variance_floor);
    const Matrix sigma = (0.5 * logvar.array()).exp();
    const Matrix z = reparameterize(mu, logvar, epsilon);
    const auto dec = nn::forward(model.decoder, z);

    Evaluation ev;
    ev.loss = loss(x, dec.output, mu, logvar, kl_weight);

    const auto batch = static_cast<double>(x.rows());
    const Matrix g_out = 2.0 * (dec.output - x) / static_cast<double>(x.size());
    auto dec_back = nn::backward(model.decoder, dec.cache, g_out);
    const Matrix& g_z = dec_back.input_gradient;

    const double kl_scale = kl_weight / batch;
    const Matrix g_mu = g_z + kl_scale * mu;
    Matrix g_lv = (g_z.array() * epsilon.array() * 0.5 * sigma.array() +
                   kl_scale * 0.5 * (logvar.array().exp() - 1.0))
                      .matrix();
    g_lv = (lv_fwd.output.array() >= log_variance_floor).select(g_lv, 0.0);

    auto mu_back = nn::backward(one(model.mu_head), mu_fwd.cache, g_mu);
    auto lv_back = nn::backward(one(model.logvar_head), lv_fwd.cache, g_lv);
    const Matrix g_hidden = mu_back.input_gradient + lv_back.input_gradient;
    auto enc_back = nn::backward(model.encoder, enc.cache, g_hidden);

    ev.gradients.encoder = std::move(enc_back.layers);
    ev.gradients.mu_head = std::move(mu_back.layers.front());
    ev.gradients.logvar_head = std::move(lv_back.layers.front());
    ev.gradients.decoder = std::move(dec_back.layers);
    return ev;
}

LossTerms evaluate_loss(const VaeModel& model, const Matrix& encoder_in, const Matrix& x, const Matrix& epsilon,
                        double kl_weight) {
    const auto enc = encode_features(model, encoder_in);
    const Matrix z = reparameterize(enc.mu, enc.logvar, epsilon);
    return loss(x, nn::predict(model.decoder, z), enc.mu, enc.logvar, kl_weight);
}

std::vector<double> trainable_parameters(const VaeModel& model) {
    std::vector<double> out;
    for (const auto* layer : trainable_layers(model)) {
        out.insert(out.end(), layer->weights.data(), layer->weights.data() + layer->weights.size());
        out.insert(out.end(), layer->biases.data(), layer->biases.data() + layer->biases.size());
    }
    return out;
}

void set_trainable_parameters(VaeModel& model, std::span<const double> flat) {
    auto layers = trainable_layers(model);
    std::size_t total = 0;
    for (const auto* layer : layers) total += layer->parameter_count();
    if (flat.size() != total) fail(ErrorKind::dimension, "parameter vector has the wrong length");
    const double* p = flat.data();
    for (auto* layer : layers) {
        std::copy(p, p + layer->weights.size(), layer->weights.data());
        p += layer->weights.size();
        std::copy(p, p + layer->biases.size(), layer->biases.data());
        p += layer->biases.size();
    }
}

std::vector<double> flatten_gradients(const VaeModel& model, const ModelGradients& grads) {
    return nn::flatten(ordered_gradients(model, grads));
}

VaeModel train(Variant variant, const dataset::WeeklyView& train_view, const dataset::WeeklyView& test_view,
               std::optional<rbf::RbfLayer> layer, const TrainConfig& config,
               const std::optional<rbf::InverseNet>& inverse) {
    if (train_view.size() < 4) {
        fail(ErrorKind::insufficient_data, "training needs at least 4 weeks, have " +
                                               std::to_string(train_view.size()));
    }
    if (test_view.size() < 1) fail(ErrorKind::insufficient_data, "training needs at least 1 test week");
    if (train_view.plant_ids != test_view.plant_ids) {
        fail(ErrorKind::config, "train and test views cover different plants");
    }
    VaeModel model = build_model(variant, train_view.plant_ids, std::move(layer), inverse, config);

    Matrix train_in;
    Matrix test_in;
    if (model.rbf) {
        train_in = rbf::precompute_features(*model.rbf, train_view.values);
        test_in = rbf::rbf_features(*model.rbf, test_view.values);
    } else {
        train_in = train_view.values;
        test_in = test_view.values;
    }

    Rng shuffle = make_stream(config.seed, "shuffle");
    Rng eps_stream = make_stream(config.seed, "epsilon");
    Rng test_eps_stream = make_stream(config.seed, "test-epsilon");
    const Matrix test_eps = standard_normal(test_eps_stream, test_in.rows(), static_cast<Eigen::Index>(config.d_latent));

    nn::AdamState adam(nn::AdamConfig{config.learning_rate});
    auto params = trainable_layers(model);
    const std::size_t n = train_view.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    double best_test = std::numeric_limits<double>::infinity();
    std::vector<double> best_params = trainable_parameters(model);
    EpochRecord last_finite;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle);
        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, n - start);
            const std::span<const std::size_t> rows(order.data() + start, count);
            const Matrix xb = gather_rows(train_view.values, rows);
            const Matrix inb = gather_rows(train_in, rows);
            const Matrix eps = standard_normal(eps_stream, static_cast<Eigen::Index>(count),
                                               static_cast<Eigen::Index>(config.d_latent));
            Evaluation ev;
            try {
                ev = evaluate(model, inb, xb, eps, config.kl_weight);
                if (ev.loss.kl < -1e-12) {
                    fail(ErrorKind::numeric, "negative KL divergence " + std::to_string(ev.loss.kl));
                }
                nn::adam_step(params, ordered_gradients(model, ev.gradients), adam);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::numeric) throw;
                fail(ErrorKind::training, "training diverged at epoch " + std::to_string(epoch) + " (" + e.what() +
                                              "); last finite train loss " + std::to_string(last_finite.train_total) +
                                              ", test loss " + std::to_string(last_finite.test_total));
            }
            const auto w = static_cast<double>(count) / static_cast<double>(n);
            rec.train_total += w * ev.loss.total;
            rec.train_recon += w * ev.loss.recon;
            rec.train_kl += w * ev.loss.kl;
        }
        const LossTerms test = evaluate_loss(model, test_in, test_view.values, test_eps, config.kl_weight);
        rec.test_total = test.total;
        rec.test_recon = test.recon;
        rec.test_kl = test.kl;
        if (!std::isfinite(rec.train_total) || !std::isfinite(rec.test_total)) {
            fail(ErrorKind::training, "training diverged at epoch " + std::to_string(epoch) +
                                          "; last finite train loss " + std::to_string(last_finite.train_total) +
                                          ", test loss " + std::to_string(last_finite.test_total));
        }
        last_finite = rec;
        model.training_log.push_back(rec);
        if (rec.test_total < best_test) {
            best_test = rec.test_total;
            model.best_epoch = epoch;
            best_params = trainable_parameters(model);
        } else if (epoch - model.best_epoch >= config.patience) {
            break;
        }
    }
    set_trainable_parameters(model, best_params);

    const Encoding post = encode_features(model, train_in);
    model.posteriors = latent::LatentPosteriorStore(post.mu, post.logvar.array().exp().matrix(),
                                                    train_view.week_indices);
    return model;
}

double reconstruction_mse(const VaeModel& model, const Matrix& x) {
    const Encoding enc = encode(model, x);
    return (decode(model, enc.mu) - x).squaredNorm() / static_cast<double>(x.size());
}

double prior_ks_pass_rate(const VaeModel& model, const dataset::WeeklyView& view, std::size_t n_samples,
                          std::uint64_t seed) {
    if (view.size() < 5 || n_samples < 5) return 0.0;
    Rng rng = make_stream(seed, "selection-ks");
    const Matrix z = standard_normal(rng, static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(model.d_latent));
    const Matrix generated = decode(model, z);
    return stats::ks_battery(view.values, view.plant_ids, generated, model.plant_ids, stats::Basis::weekly).pass_rate;
}

std::size_t rank_candidates(std::span<const CandidateScore> scores) {
    if (scores.empty()) fail(ErrorKind::usage, "no candidates to rank");
    auto better = [](const CandidateScore& a, const CandidateScore& b) {
        if (a.test_mse != b.test_mse) return a.test_mse < b.test_mse;
        const double ka = a.ks_pass_rate.value_or(-1.0);
        const double kb = b.ks_pass_rate.value_or(-1.0);
        if (ka != kb) return ka > kb;
        if (a.gamma != b.gamma) return a.gamma < b.gamma;
        return a.candidate < b.candidate;
    };
    std::size_t best = 0;
    for (std::size_t k = 1; k < scores.size(); ++k) {
        if (better(scores[k], scores[best])) best = k;
    }
    return best;
}

SelectedModel select_model(std::vector<VaeModel> candidates, const dataset::WeeklyView& test_view,
                           std::uint64_t seed) {
    if (candidates.empty()) fail(ErrorKind::usage, "select_model: no candidates");
    SelectionReport report;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        CandidateScore s;
        s.candidate = k;
        s.gamma = candidates[k].rbf ? candidates[k].rbf->gamma() : 0.0;
        s.test_mse = reconstruction_mse(candidates[k], test_view.values);
        report.scores.push_back(s);
    }
    double best_mse = std::numeric_limits<double>::infinity();
    for (const auto& s : report.scores) best_mse = std::min(best_mse, s.test_mse);
    const auto tied = std::count_if(report.scores.begin(), report.scores.end(),
                                    [&](const CandidateScore& s) { return s.test_mse == best_mse; });
    if (tied > 1) {
        for (auto& s : report.scores) {
            if (s.test_mse == best_mse) s.ks_pass_rate = prior_ks_pass_rate(candidates[s.candidate], test_view, 1000, seed);
        }
    }
    report.winner = rank_candidates(report.scores);
    return {std::move(candidates[report.winner]), std::move(report)};
}

SelectedModel train_with_gamma_search(Variant variant, const dataset::WeeklyView& train_view,
                                      const dataset::WeeklyView& test_view, const TrainConfig& config,
                                      std::size_t threads) {
    config.validate();
    if (!uses_rbf(variant)) {
        std::vector<VaeModel> one_model;
        one_model.push_back(train(variant, train_view, test_view, std::nullopt, config));
        return select_model(std::move(one_model), test_view, config.seed);
    }
    if (train_view.size() < 2) fail(ErrorKind::insufficient_data, "gamma search needs at least 2 training weeks");
    const Matrix centers = rbf::select_centers(train_view.values, config.max_centers, config.seed);
    const std::vector<double> gammas =
        config.gamma ? std::vector<double>{*config.gamma} : rbf::gamma_grid(train_view.values, config.gamma_multipliers);

    std::vector<std::optional<VaeModel>> slots(gammas.size());
    std::vector<std::exception_ptr> errors(gammas.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next.fetch_add(1); k < gammas.size(); k = next.fetch_add(1)) {
            try {
                rbf::RbfLayer layer(centers, gammas[k]);
                std::optional<rbf::InverseNet> inverse;
                if (variant == Variant::rbf_explicit) {
                    rbf::RbfLayer probe = layer;
                    rbf::precompute_features(probe, train_view.values);
                    inverse = rbf::train_inverse_net(probe, train_view.values, config.inverse);
                }
                slots[k] = train(variant, train_view, test_view, std::move(layer), config, inverse);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::clamp<std::size_t>(threads, 1, gammas.size());
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    std::vector<VaeModel> candidates;
    for (std::size_t k = 0; k < gammas.size(); ++k) {
        if (errors[k]) std::rethrow_exception(errors[k]);
        candidates.push_back(std::move(*slots[k]));
    }
    return select_model(std::move(candidates), test_view, config.seed);
}

}  // namespace rbfvae::vae
