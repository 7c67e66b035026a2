#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <vector>

#include "unmix/network.hpp"
#include "unmix/tensor.hpp"

namespace unmix {

struct TrainConfig {
    double beta = 5e3;
    double gamma = 3e-2;
    std::int64_t epochs = 200;
    double lr0 = 6e-3;
    double lr_decay_factor = 0.8;
    std::int64_t lr_decay_every = 15;  // epochs
    double weight_decay = 4e-5;
    std::uint64_t seed = 0;

    void validate() const {
        if (beta < 0.0 || gamma < 0.0) throw ConfigError("train: beta and gamma must be >= 0");
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (lr0 <= 0.0) throw ConfigError("train: lr0 must be positive");
        if (lr_decay_factor <= 0.0 || lr_decay_factor > 1.0)
            throw ConfigError("train: lr decay factor must be in (0,1]");
        if (lr_decay_every < 1) throw ConfigError("train: lr decay interval must be >= 1");
        if (weight_decay < 0.0) throw ConfigError("train: weight decay must be >= 0");
    }
};

struct TrainHistory {
    std::vector<double> total;
    std::vector<double> re;
    std::vector<double> sad;
    std::vector<double> lr;
    double wall_seconds = 0.0;
};

/// Mean over pixels of the squared spectral residual (sum over bands).
inline Tensor loss_re(const Tensor& cube, const Tensor& recon) {
    detail::check_same_shape(cube, recon, "loss_re");
    if (cube.rank() != 3) throw DimensionError("loss_re: inputs must be [BxHxW]");
    const double n_pixels = static_cast<double>(cube.dim(1) * cube.dim(2));
    Tensor d = sub(recon, cube);
    return mul_scalar(sum(mul(d, d)), 1.0 / n_pixels);
}

/// Mean spectral angle between observed and reconstructed pixel spectra.
/// Norms are clamped at 1e-12 and the cosine at [-1+1e-12, 1-1e-12] so the
/// loss stays differentiable.
inline Tensor loss_sad(const Tensor& cube, const Tensor& recon) {
    detail::check_same_shape(cube, recon, "loss_sad");
    if (cube.rank() != 3) throw DimensionError("loss_sad: inputs must be [BxHxW]");
    const std::int64_t b = cube.dim(0);
    const std::int64_t n = cube.dim(1) * cube.dim(2);
    Tensor y = reshape(cube, {b, n});
    Tensor y_hat = reshape(recon, {b, n});
    Tensor dots = sum_axis(mul(y, y_hat), 0);                                   // [n]
    Tensor ny = sqrt_t(clamp(sum_axis(mul(y, y), 0), 1e-24, 1e300));            // [n]
    Tensor ny_hat = sqrt_t(clamp(sum_axis(mul(y_hat, y_hat), 0), 1e-24, 1e300));
    Tensor cosine = div(dots, mul(ny, ny_hat));
    Tensor angles = acos_t(clamp(cosine, -1.0 + 1e-12, 1.0 - 1e-12));
    return mean(angles);
}

inline Tensor total_loss(const Tensor& re, const Tensor& sad_term, double beta, double gamma) {
    return add(mul_scalar(re, beta), mul_scalar(sad_term, gamma));
}

/// lr0 * factor^floor((epoch-1)/every), epochs starting at 1.
inline double learning_rate_at(const TrainConfig& cfg, std::int64_t epoch) {
    return cfg.lr0 * std::pow(cfg.lr_decay_factor,
                              static_cast<double>((epoch - 1) / cfg.lr_decay_every));
}

using EpochCallback = std::function<void(std::int64_t epoch, const ModelParams&, double total_loss)>;

/// Full-image training (the cube is the single sample, one Adam step per
/// epoch). Coupled L2 decay is added to the gradients of every parameter
/// except BN/LN scale/shift; the decoder is clamped nonnegative after each
/// step. Deterministic under cfg.seed.
inline TrainHistory train(const HsiCube& cube, ModelParams& mp, const ModelConfig& model_cfg,
                          const TrainConfig& cfg, const EpochCallback& callback = {}) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;

    auto params = mp.parameters();
    std::vector<std::vector<double>> m(params.size()), v(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i].assign(params[i].tensor.data().size(), 0.0);
        v[i].assign(params[i].tensor.data().size(), 0.0);
    }

    RngStream dropout_root = RngStream(cfg.seed).split(0xd70);
    Tensor input = cube_to_tensor(cube);
    TrainHistory history;

    for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = learning_rate_at(cfg, epoch);
        for (auto& p : params) p.tensor.zero_grad();

        RngStream dropout_rng = dropout_root.split(static_cast<std::uint64_t>(epoch));
        ForwardResult out = forward(input, mp, model_cfg, RunMode::kTrain, &dropout_rng);
        Tensor l_re = loss_re(input, out.reconstruction);
        Tensor l_sad = loss_sad(input, out.reconstruction);
        Tensor loss = total_loss(l_re, l_sad, cfg.beta, cfg.gamma);

        const double loss_v = loss.value();
        if (!std::isfinite(loss_v))
            throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 " (L_RE=" + std::to_string(l_re.value()) +
                                 ", L_SAD=" + std::to_string(l_sad.value()) + ")");

        backward(loss);

        const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(epoch));
        const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(epoch));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& t = params[i].tensor;
            auto& grad = t.grad();
            auto& theta = t.data();
            const double wd = params[i].decay ? cfg.weight_decay : 0.0;
            for (std::size_t j = 0; j < theta.size(); ++j) {
                const double g = grad[j] + wd * theta[j];
                m[i][j] = kBeta1 * m[i][j] + (1.0 - kBeta1) * g;
                v[i][j] = kBeta2 * v[i][j] + (1.0 - kBeta2) * g * g;
                theta[j] -= lr * (m[i][j] / bc1) / (std::sqrt(v[i][j] / bc2) + kEps);
            }
        }
        for (auto& w : mp.decoder.data())
            if (w < 0.0) w = 0.0;

        history.total.push_back(loss_v);
        history.re.push_back(l_re.value());
        history.sad.push_back(l_sad.value());
        history.lr.push_back(lr);
        if (callback) callback(epoch, mp, loss_v);
    }

    history.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return history;
}

}  // namespace unmix
