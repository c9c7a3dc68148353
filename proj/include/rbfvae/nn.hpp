#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "rbfvae/rng.hpp"
#include "rbfvae/types.hpp"

namespace rbfvae::nn {

enum class Activation { identity, relu, sigmoid };

std::string_view to_string(Activation activation) noexcept;
Activation activation_from_string(std::string_view text);

double sigmoid(double x) noexcept;

struct DenseLayer {
    Matrix weights;  // [out x in]
    Vector biases;   // [out]
    Activation activation = Activation::identity;

    std::size_t in_width() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t out_width() const { return static_cast<std::size_t>(weights.rows()); }
    std::size_t parameter_count() const { return static_cast<std::size_t>(weights.size() + biases.size()); }

    /// Glorot-uniform weights in +-sqrt(6 / (in + out)), zero biases.
    static DenseLayer glorot(std::size_t in, std::size_t out, Activation activation, Rng& rng);
    static DenseLayer zeros(std::size_t in, std::size_t out, Activation activation);
};

using Stack = std::vector<DenseLayer>;

/// Intermediates of one forward pass, consumed by `backward`.
struct ForwardCache {
    std::vector<Matrix> inputs;   // input of each layer
    std::vector<Matrix> pre;      // pre-activations
    std::vector<Matrix> outputs;  // activated outputs
    std::uint64_t signature = 0;  // shape signature of the producing stack
};

struct ForwardResult {
    Matrix output;
    ForwardCache cache;
};

std::uint64_t shape_signature(std::span<const DenseLayer> stack) noexcept;

ForwardResult forward(std::span<const DenseLayer> stack, const Matrix& input);

/// Forward pass without keeping intermediates.
Matrix predict(std::span<const DenseLayer> stack, const Matrix& input);

struct LayerGradient {
    Matrix weights;
    Vector biases;
};

struct BackwardResult {
    std::vector<LayerGradient> layers;
    Matrix input_gradient;
};

BackwardResult backward(std::span<const DenseLayer> stack, const ForwardCache& cache,
                        const Matrix& output_gradient);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment accumulators, shaped lazily on the first step.
class AdamState {
public:
    explicit AdamState(AdamConfig config = {}) : config_(config) {}

    const AdamConfig& config() const { return config_; }
    std::uint64_t step() const { return step_; }

private:
    friend void adam_step(std::span<DenseLayer* const>, std::span<const LayerGradient>, AdamState&);

    AdamConfig config_;
    std::uint64_t step_ = 0;
    std::vector<LayerGradient> first_;
    std::vector<LayerGradient> second_;
};

/// One bias-corrected Adam update. Throws a numeric error naming the layer when a gradient
/// is non-finite; in that case no parameter is touched.
void adam_step(std::span<DenseLayer* const> params, std::span<const LayerGradient> grads, AdamState& state);
void adam_step(Stack& stack, std::span<const LayerGradient> grads, AdamState& state);

bool all_finite(const DenseLayer& layer) noexcept;
std::uint64_t parameter_hash(std::span<const DenseLayer> stack) noexcept;

std::vector<double> flatten(const Stack& stack);
void unflatten(std::span<const double> flat, Stack& stack);
std::vector<double> flatten(std::span<const LayerGradient> grads);

// Gradient verification.

inline constexpr double default_fd_step = 1e-5;

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric) noexcept;

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t n_params = 0;
    bool passed = true;
};

/// Central differences of `loss` at `theta`, one coordinate at a time.
std::vector<double> central_differences(std::vector<double> theta,
                                        const std::function<double(std::span<const double>)>& loss,
                                        double h = default_fd_step);

GradCheckReport compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                  double tolerance);

/// Loss of the stack output plus its gradient with respect to that output.
using LossFn = std::function<std::pair<double, Matrix>(const Matrix& output)>;
/// Lets tests tamper with analytic gradients before comparison.
using GradientHook = std::function<void(std::vector<LayerGradient>&)>;

GradCheckReport grad_check(const Stack& stack, const LossFn& loss, const Matrix& input,
                           double tolerance = 1e-4, const GradientHook& hook = {});

}  // namespace rbfvae::nn
