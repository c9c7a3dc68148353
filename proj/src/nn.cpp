#include "rbfvae/nn.hpp"

#include <cmath>
#include <string>

#include "rbfvae/error.hpp"
#include "rbfvae/hash.hpp"

namespace rbfvae::nn {

std::string_view to_string(Activation activation) noexcept {
    switch (activation) {
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::identity: break;
    }
    return "identity";
}

Activation activation_from_string(std::string_view text) {
    if (text == "relu") return Activation::relu;
    if (text == "sigmoid") return Activation::sigmoid;
    if (text == "identity") return Activation::identity;
    fail(ErrorKind::config, "unknown activation '" + std::string(text) + "'");
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

DenseLayer DenseLayer::glorot(std::size_t in, std::size_t out, Activation activation, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer = zeros(in, out, activation);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = dist(rng);
    }
    return layer;
}

DenseLayer DenseLayer::zeros(std::size_t in, std::size_t out, Activation activation) {
    DenseLayer layer;
    layer.weights = Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    layer.biases = Vector::Zero(static_cast<Eigen::Index>(out));
    layer.activation = activation;
    return layer;
}

std::uint64_t shape_signature(std::span<const DenseLayer> stack) noexcept {
    std::uint64_t h = fnv_offset;
    for (const auto& layer : stack) {
        const double dims[3] = {static_cast<double>(layer.in_width()), static_cast<double>(layer.out_width()),
                                static_cast<double>(layer.activation)};
        h = fnv1a(std::span<const double>(dims), h);
    }
    return h;
}

namespace {

void check_input(std::span<const DenseLayer> stack, const Matrix& input) {
    if (stack.empty()) fail(ErrorKind::usage, "empty layer stack");
    if (static_cast<std::size_t>(input.cols()) != stack.front().in_width()) {
        fail(ErrorKind::dimension, "input width " + std::to_string(input.cols()) + " does not match layer 0 width " +
                                       std::to_string(stack.front().in_width()));
    }
    for (std::size_t i = 1; i < stack.size(); ++i) {
        if (stack[i].in_width() != stack[i - 1].out_width()) {
            fail(ErrorKind::dimension, "layer " + std::to_string(i) + " input width does not match layer " +
                                           std::to_string(i - 1) + " output");
        }
    }
}

Matrix affine(const DenseLayer& layer, const Matrix& input) {
    Matrix pre = input * layer.weights.transpose();
    pre.rowwise() += layer.biases.transpose();
    return pre;
}

Matrix activate(Activation activation, const Matrix& pre) {
    switch (activation) {
        case Activation::relu: return pre.cwiseMax(0.0);
        case Activation::sigmoid: return pre.unaryExpr([](double v) { return sigmoid(v); });
        case Activation::identity: break;
    }
    return pre;
}

}  // namespace

ForwardResult forward(std::span<const DenseLayer> stack, const Matrix& input) {
    check_input(stack, input);
    ForwardResult result;
    ForwardCache& cache = result.cache;
    cache.signature = shape_signature(stack);
    cache.inputs.reserve(stack.size());
    cache.pre.reserve(stack.size());
    cache.outputs.reserve(stack.size());
    const Matrix* current = &input;
    for (const auto& layer : stack) {
        cache.inputs.push_back(*current);
        cache.pre.push_back(affine(layer, *current));
        cache.outputs.push_back(activate(layer.activation, cache.pre.back()));
        current = &cache.outputs.back();
    }
    result.output = cache.outputs.back();
    return result;
}

Matrix predict(std::span<const DenseLayer> stack, const Matrix& input) {
    check_input(stack, input);
    Matrix current = input;
    for (const auto& layer : stack) current = activate(layer.activation, affine(layer, current));
    return current;
}

BackwardResult backward(std::span<const DenseLayer> stack, const ForwardCache& cache,
                        const Matrix& output_gradient) {
    if (cache.signature != shape_signature(stack) || cache.inputs.size() != stack.size()) {
        fail(ErrorKind::usage, "forward cache does not belong to this layer stack");
    }
    const Matrix& last = cache.outputs.back();
    if (output_gradient.rows() != last.rows() || output_gradient.cols() != last.cols()) {
        fail(ErrorKind::dimension, "output gradient shape does not match the cached output");
    }
    BackwardResult result;
    result.layers.resize(stack.size());
    Matrix grad = output_gradient;
    for (std::size_t k = stack.size(); k-- > 0;) {
        const DenseLayer& layer = stack[k];
        Matrix dpre;
        switch (layer.activation) {
            case Activation::relu:
                dpre = grad.cwiseProduct(cache.pre[k].unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
                break;
            case Activation::sigmoid: {
                const Matrix& y = cache.outputs[k];
                dpre = grad.array() * y.array() * (1.0 - y.array());
                break;
            }
            case Activation::identity:
                dpre = std::move(grad);
                break;
        }
        result.layers[k].weights = dpre.transpose() * cache.inputs[k];
        result.layers[k].biases = dpre.colwise().sum().transpose();
        grad = dpre * layer.weights;
    }
    result.input_gradient = std::move(grad);
    return result;
}

bool all_finite(const DenseLayer& layer) noexcept {
    return layer.weights.allFinite() && layer.biases.allFinite();
}

void adam_step(std::span<DenseLayer* const> params, std::span<const LayerGradient> grads, AdamState& state) {
    if (params.size() != grads.size()) {
        fail(ErrorKind::dimension, "adam: " + std::to_string(params.size()) + " layers but " +
                                       std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& g = grads[i];
        if (g.weights.rows() != params[i]->weights.rows() || g.weights.cols() != params[i]->weights.cols() ||
            g.biases.size() != params[i]->biases.size()) {
            fail(ErrorKind::dimension, "adam: gradient shape mismatch at layer " + std::to_string(i));
        }
        if (!g.weights.allFinite() || !g.biases.allFinite()) {
            fail(ErrorKind::numeric, "adam: non-finite gradient in layer " + std::to_string(i));
        }
    }
    if (state.first_.empty()) {
        for (const auto* layer : params) {
            LayerGradient zero{Matrix::Zero(layer->weights.rows(), layer->weights.cols()),
                               Vector::Zero(layer->biases.size())};
            state.first_.push_back(zero);
            state.second_.push_back(std::move(zero));
        }
    } else if (state.first_.size() != params.size()) {
        fail(ErrorKind::dimension, "adam: optimizer state was built for a different parameter set");
    }

    const AdamConfig& c = state.config_;
    ++state.step_;
    const double t = static_cast<double>(state.step_);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = c.beta1 * m + (1.0 - c.beta1) * g;
        v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
        param.array() -= c.learning_rate * (m.array() / correction1) /
                         ((v.array() / correction2).sqrt() + c.eps);
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
        update(params[i]->weights, state.first_[i].weights, state.second_[i].weights, grads[i].weights);
        update(params[i]->biases, state.first_[i].biases, state.second_[i].biases, grads[i].biases);
        if (!all_finite(*params[i])) {
            fail(ErrorKind::numeric, "adam: layer " + std::to_string(i) + " became non-finite");
        }
    }
}

void adam_step(Stack& stack, std::span<const LayerGradient> grads, AdamState& state) {
    std::vector<DenseLayer*> params;
    for (auto& layer : stack) params.push_back(&layer);
    adam_step(params, grads, state);
}

std::uint64_t parameter_hash(std::span<const DenseLayer> stack) noexcept {
    std::uint64_t h = shape_signature(stack);
    for (const auto& layer : stack) {
        h = fnv1a(std::span<const double>(layer.weights.data(), static_cast<std::size_t>(layer.weights.size())), h);
        h = fnv1a(std::span<const double>(layer.biases.data(), static_cast<std::size_t>(layer.biases.size())), h);
    }
    return h;
}

std::vector<double> flatten(const Stack& stack) {
    std::vector<double> out;
    for (const auto& layer : stack) {
        out.insert(out.end(), layer.weights.data(), layer.weights.data() + layer.weights.size());
        out.insert(out.end(), layer.biases.data(), layer.biases.data() + layer.biases.size());
    }
    return out;
}

void unflatten(std::span<const double> flat, Stack& stack) {
    std::size_t total = 0;
    for (const auto& layer : stack) total += layer.parameter_count();
    if (flat.size() != total) fail(ErrorKind::dimension, "flat parameter vector has the wrong length");
    const double* p = flat.data();
    for (auto& layer : stack) {
        std::copy(p, p + layer.weights.size(), layer.weights.data());
        p += layer.weights.size();
        std::copy(p, p + layer.biases.size(), layer.biases.data());
        p += layer.biases.size();
    }
}

std::vector<double> flatten(std::span<const LayerGradient> grads) {
    std::vector<double> out;
    for (const auto& g : grads) {
        out.insert(out.end(), g.weights.data(), g.weights.data() + g.weights.size());
        out.insert(out.end(), g.biases.data(), g.biases.data() + g.biases.size());
    }
    return out;
}

double relative_error(double analytic, double numeric) noexcept {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / scale;
}

std::vector<double> central_differences(std::vector<double> theta,
                                        const std::function<double(std::span<const double>)>& loss, double h) {
    std::vector<double> grad(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        theta[i] = saved + h;
        const double up = loss(theta);
        theta[i] = saved - h;
        const double down = loss(theta);
        theta[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

GradCheckReport compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                  double tolerance) {
    if (analytic.size() != numeric.size()) fail(ErrorKind::dimension, "gradient vectors differ in length");
    GradCheckReport report;
    report.n_params = analytic.size();
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double err = relative_error(analytic[i], numeric[i]);
        if (!(err <= report.max_relative_error)) {
            report.max_relative_error = err;
            report.worst_index = i;
        }
    }
    report.passed = report.max_relative_error < tolerance;
    return report;
}

GradCheckReport grad_check(const Stack& stack, const LossFn& loss, const Matrix& input, double tolerance,
                           const GradientHook& hook) {
    auto fwd = forward(stack, input);
    auto [value, out_grad] = loss(fwd.output);
    auto back = backward(stack, fwd.cache, out_grad);
    if (hook) hook(back.layers);
    const auto analytic = flatten(back.layers);

    Stack probe = stack;
    const auto numeric = central_differences(flatten(stack), [&](std::span<const double> theta) {
        unflatten(theta, probe);
        return loss(predict(probe, input)).first;
    });
    return compare_gradients(analytic, numeric, tolerance);
}

}  // namespace rbfvae::nn
