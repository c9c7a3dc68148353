#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "rbfvae/dataset.hpp"
#include "rbfvae/types.hpp"

namespace rbfvae::testing {

inline Matrix uniform_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double lo = 0.0,
                             double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("rbfvae-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline dataset::WeeklyView view_of(const Matrix& values, std::size_t first_week = 0) {
    dataset::WeeklyView v;
    v.values = values;
    for (Eigen::Index r = 0; r < values.rows(); ++r) v.week_indices.push_back(first_week + static_cast<std::size_t>(r));
    for (Eigen::Index c = 0; c < values.cols(); ++c) v.plant_ids.push_back("p" + std::to_string(c));
    return v;
}

}  // namespace rbfvae::testing

#include "rbfvae/nn.hpp"
#include "rbfvae/vae.hpp"

namespace rbfvae::testing {

/// Analytic VAE gradients against central differences of the loss over all trainable
/// parameters, with epsilon held fixed.
inline nn::GradCheckReport vae_grad_check(const vae::VaeModel& model, const Matrix& x, const Matrix& eps,
                                          double kl_weight, double tolerance = 1e-4) {
    const Matrix enc_in = vae::encoder_input(model, x);
    const auto ev = vae::evaluate(model, enc_in, x, eps, kl_weight);
    const auto analytic = vae::flatten_gradients(model, ev.gradients);
    vae::VaeModel probe = model;
    const auto numeric = nn::central_differences(vae::trainable_parameters(model), [&](std::span<const double> theta) {
        vae::set_trainable_parameters(probe, theta);
        return vae::evaluate_loss(probe, enc_in, x, eps, kl_weight).total;
    });
    return nn::compare_gradients(analytic, numeric, tolerance);
}

}  // namespace rbfvae::testing
