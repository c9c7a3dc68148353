#include "rbfvae/rbf.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <string>

#include "rbfvae/error.hpp"
#include "rbfvae/hash.hpp"
#include "rbfvae/rng.hpp"

namespace rbfvae::rbf {

namespace {
std::atomic<std::uint64_t> evaluation_counter{0};

void check_gamma(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        fail(ErrorKind::config, "rbf gamma must be positive and finite");
    }
}
}  // namespace

std::uint64_t kernel_evaluations() noexcept { return evaluation_counter.load(); }
void reset_kernel_evaluations() noexcept { evaluation_counter.store(0); }

double kernel(std::span<const double> x, std::span<const double> y, double gamma) {
    if (x.size() != y.size()) fail(ErrorKind::dimension, "kernel arguments differ in length");
    double d2 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] - y[k];
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

RbfLayer::RbfLayer(Matrix centers, double gamma) : centers_(std::move(centers)), gamma_(gamma) {
    check_gamma(gamma_);
    if (centers_.rows() < 1) fail(ErrorKind::config, "rbf layer needs at least one center");
}

void RbfLayer::set_gamma(double gamma) {
    check_gamma(gamma);
    gamma_ = gamma;
}

void RbfLayer::set_centers(Matrix centers) {
    if (centers.rows() < 1) fail(ErrorKind::config, "rbf layer needs at least one center");
    centers_ = std::move(centers);
}

std::uint64_t RbfLayer::fingerprint() const noexcept {
    const double g = gamma_;
    std::uint64_t h = fnv1a(std::span<const double>(&g, 1));
    const double dims[2] = {static_cast<double>(centers_.rows()), static_cast<double>(centers_.cols())};
    h = fnv1a(std::span<const double>(dims), h);
    return fnv1a(std::span<const double>(centers_.data(), static_cast<std::size_t>(centers_.size())), h);
}

const Matrix& RbfLayer::cached_features() const {
    if (!cache_) fail(ErrorKind::stale_cache, "rbf features were never precomputed");
    if (cache_->fingerprint != fingerprint()) {
        fail(ErrorKind::stale_cache, "rbf gamma or centers changed after precomputation");
    }
    return cache_->features;
}

Matrix rbf_features(const RbfLayer& layer, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != layer.input_width()) {
        fail(ErrorKind::dimension, "rbf input width " + std::to_string(x.cols()) + " != " +
                                       std::to_string(layer.input_width()));
    }
    if (!x.allFinite()) fail(ErrorKind::numeric, "rbf input contains non-finite values");
    const Matrix& centers = layer.centers();
    Matrix out(x.rows(), centers.rows());
    for (Eigen::Index b = 0; b < x.rows(); ++b) {
        const auto xb = row_span(x, b);
        for (Eigen::Index i = 0; i < centers.rows(); ++i) {
            out(b, i) = kernel(xb, row_span(centers, i), layer.gamma());
        }
    }
    evaluation_counter.fetch_add(static_cast<std::uint64_t>(x.rows() * centers.rows()));
    return out;
}

const Matrix& precompute_features(RbfLayer& layer, const Matrix& training) {
    layer.cache_ = RbfLayer::Cache{rbf_features(layer, training), layer.fingerprint()};
    return layer.cache_->features;
}

Matrix select_centers(const Matrix& training, std::size_t cap, std::uint64_t seed) {
    if (cap < 2) fail(ErrorKind::config, "center cap must be >= 2");
    const auto n = static_cast<std::size_t>(training.rows());
    if (n <= cap) return training;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_stream(seed, "rbf-centers");
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(cap);
    std::sort(order.begin(), order.end());
    Matrix centers(static_cast<Eigen::Index>(cap), training.cols());
    for (std::size_t i = 0; i < cap; ++i) {
        centers.row(static_cast<Eigen::Index>(i)) = training.row(static_cast<Eigen::Index>(order[i]));
    }
    return centers;
}

double median_pairwise_sq_distance(const Matrix& data) {
    std::vector<double> d2;
    const auto n = data.rows();
    if (n < 2) fail(ErrorKind::insufficient_data, "need at least two rows for pairwise distances");
    d2.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) d2.push_back((data.row(i) - data.row(j)).squaredNorm());
    }
    const std::size_t mid = d2.size() / 2;
    std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid), d2.end());
    double median = d2[mid];
    if (d2.size() % 2 == 0) {
        const double lower = *std::max_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid));
        median = 0.5 * (median + lower);
    }
    return median;
}

std::vector<double> gamma_grid(const Matrix& training, std::span<const double> multipliers) {
    double median = median_pairwise_sq_distance(training);
    if (!(median > 0.0)) median = 1.0;
    std::vector<double> out;
    for (double m : multipliers) out.push_back(m / median);
    return out;
}

InverseNet train_inverse_net(const RbfLayer& layer, const Matrix& training, const InverseNetConfig& config) {
    const Matrix& features = layer.cached_features();
    if (features.rows() != training.rows()) {
        fail(ErrorKind::stale_cache, "cached features were computed for a different training set");
    }
    if (config.epochs == 0 || config.batch_size == 0 || !(config.learning_rate > 0.0)) {
        fail(ErrorKind::config, "inverse net: epochs, batch_size and learning_rate must be positive");
    }
    const std::size_t n_plants = layer.input_width();
    const std::size_t width = 2 * n_plants;
    Rng init = make_stream(config.seed, "inverse-init");
    Rng shuffle = make_stream(config.seed, "inverse-shuffle");

    InverseNet net;
    net.stack.push_back(nn::DenseLayer::glorot(layer.n_centers(), width, nn::Activation::relu, init));
    net.stack.push_back(nn::DenseLayer::glorot(width, width, nn::Activation::relu, init));
    net.stack.push_back(nn::DenseLayer::glorot(width, n_plants, nn::Activation::sigmoid, init));

    nn::AdamState adam(nn::AdamConfig{config.learning_rate});
    const auto n = static_cast<std::size_t>(features.rows());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const double n_out = static_cast<double>(n_plants);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, n - start);
            Matrix xb(static_cast<Eigen::Index>(count), features.cols());
            Matrix yb(static_cast<Eigen::Index>(count), training.cols());
            for (std::size_t r = 0; r < count; ++r) {
                xb.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(order[start + r]));
                yb.row(static_cast<Eigen::Index>(r)) = training.row(static_cast<Eigen::Index>(order[start + r]));
            }
            auto fwd = nn::forward(net.stack, xb);
            const Matrix grad = 2.0 * (fwd.output - yb) / (static_cast<double>(count) * n_out);
            auto back = nn::backward(net.stack, fwd.cache, grad);
            nn::adam_step(net.stack, back.layers, adam);
        }
    }
    const Matrix fitted = nn::predict(net.stack, features);
    net.final_loss = (fitted - training).squaredNorm() / static_cast<double>(training.size());
    if (!std::isfinite(net.final_loss)) fail(ErrorKind::training, "inverse net diverged");
    net.epochs = config.epochs;
    return net;
}

}  // namespace rbfvae::rbf
