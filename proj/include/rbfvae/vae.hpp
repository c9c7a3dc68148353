#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rbfvae/dataset.hpp"
#include "rbfvae/latent_select.hpp"
#include "rbfvae/nn.hpp"
#include "rbfvae/rbf.hpp"
#include "rbfvae/types.hpp"

namespace rbfvae::vae {

enum class Variant { rbf_implicit, rbf_explicit, pure };

std::string_view to_string(Variant variant) noexcept;
Variant variant_from_string(std::string_view text);
bool uses_rbf(Variant variant) noexcept;

struct TrainConfig {
    std::size_t epochs = 1000;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    std::uint64_t seed = 1;
    double kl_weight = 1e-4;
    std::size_t d_latent = 8;
    std::vector<std::size_t> hidden = {64};
    std::size_t patience = 100;
    /// Grid multipliers, scaled by 1 / median pairwise squared distance.
    std::vector<double> gamma_multipliers = rbf::default_gamma_multipliers;
    /// Absolute gamma; skips the grid when set.
    std::optional<double> gamma;
    std::size_t max_centers = 512;
    rbf::InverseNetConfig inverse;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_total = 0.0;
    double train_recon = 0.0;
    double train_kl = 0.0;
    double test_total = 0.0;
    double test_recon = 0.0;
    double test_kl = 0.0;
};

struct LossTerms {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

/// Encoder body -> (mu head, logvar head); decoder ends in a sigmoid so outputs stay in
/// [0, 1]. For the explicit variant the last `frozen_tail` decoder layers are the
/// pre-trained inverse network and never receive updates.
struct VaeModel {
    Variant variant = Variant::pure;
    std::vector<std::string> plant_ids;
    std::optional<rbf::RbfLayer> rbf;
    nn::Stack encoder;
    nn::DenseLayer mu_head;
    nn::DenseLayer logvar_head;
    nn::Stack decoder;
    std::size_t frozen_tail = 0;
    std::size_t d_latent = 0;
    latent::LatentPosteriorStore posteriors;
    std::vector<EpochRecord> training_log;
    std::size_t best_epoch = 0;
    std::optional<double> inverse_net_loss;
    TrainConfig config;

    std::size_t n_plants() const { return plant_ids.size(); }
    std::size_t encoder_input_width() const;
};

/// Freshly initialized (Glorot, seeded by config.seed) model of the requested variant.
VaeModel build_model(Variant variant, std::vector<std::string> plant_ids, std::optional<rbf::RbfLayer> layer,
                     const std::optional<rbf::InverseNet>& inverse, const TrainConfig& config);

/// Kernel features for rbf variants, the observations themselves for the pure variant.
Matrix encoder_input(const VaeModel& model, const Matrix& x);

struct Encoding {
    Matrix mu;
    Matrix logvar;  // floored at log(1e-6)
};

Encoding encode(const VaeModel& model, const Matrix& x);
Encoding encode_features(const VaeModel& model, const Matrix& encoder_in);

/// z = mu + exp(0.5 logvar) * epsilon
Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& epsilon);

Matrix decode(const VaeModel& model, const Matrix& z);

/// recon = mean squared error over batch and elements;
/// kl = batch mean of -0.5 sum_j (1 + logvar_j - mu_j^2 - exp(logvar_j));
/// total = recon + kl_weight * kl.
LossTerms loss(const Matrix& x, const Matrix& x_hat, const Matrix& mu, const Matrix& logvar, double kl_weight);

struct ModelGradients {
    std::vector<nn::LayerGradient> encoder;
    nn::LayerGradient mu_head;
    nn::LayerGradient logvar_head;
    std::vector<nn::LayerGradient> decoder;
};

struct Evaluation {
    LossTerms loss;
    ModelGradients gradients;
};

/// Loss and exact gradients for one batch with injected epsilon.
Evaluation evaluate(const VaeModel& model, const Matrix& encoder_in, const Matrix& x, const Matrix& epsilon,
                    double kl_weight);

LossTerms evaluate_loss(const VaeModel& model, const Matrix& encoder_in, const Matrix& x, const Matrix& epsilon,
                        double kl_weight);

/// Trainable parameters (frozen tail excluded) in a fixed order, and the matching gradients.
std::vector<double> trainable_parameters(const VaeModel& model);
void set_trainable_parameters(VaeModel& model, std::span<const double> flat);
std::vector<double> flatten_gradients(const VaeModel& model, const ModelGradients& grads);

/// Seeded mini-batch Adam with early stopping on test loss. The returned model carries the
/// parameters of its best test epoch, the per-epoch log, and posteriors of every training
/// week from a final deterministic pass.
VaeModel train(Variant variant, const dataset::WeeklyView& train_view, const dataset::WeeklyView& test_view,
               std::optional<rbf::RbfLayer> layer, const TrainConfig& config,
               const std::optional<rbf::InverseNet>& inverse = std::nullopt);

/// MSE of decode(mu(x)) against x.
double reconstruction_mse(const VaeModel& model, const Matrix& x);

/// Fraction of plants whose decoded prior samples pass KS (alpha 0.05) against `x`.
double prior_ks_pass_rate(const VaeModel& model, const dataset::WeeklyView& view, std::size_t n_samples,
                          std::uint64_t seed);

struct CandidateScore {
    std::size_t candidate = 0;
    double gamma = 0.0;  // 0 for the pure variant
    double test_mse = 0.0;
    std::optional<double> ks_pass_rate;
};

/// Lowest test MSE; exact ties go to the higher KS pass rate, then the lower gamma.
std::size_t rank_candidates(std::span<const CandidateScore> scores);

struct SelectionReport {
    std::vector<CandidateScore> scores;
    std::size_t winner = 0;
};

struct SelectedModel {
    VaeModel model;
    SelectionReport report;
};

SelectedModel select_model(std::vector<VaeModel> candidates, const dataset::WeeklyView& test_view,
                           std::uint64_t seed);

/// Full estimation procedure: centers, gamma grid (or the fixed gamma), one trained candidate
/// per gamma (with its own inverse net for the explicit variant), then selection.
/// Candidates train on up to `threads` threads; results do not depend on the thread count.
SelectedModel train_with_gamma_search(Variant variant, const dataset::WeeklyView& train_view,
                                      const dataset::WeeklyView& test_view, const TrainConfig& config,
                                      std::size_t threads = 1);

}  // namespace rbfvae::vae
