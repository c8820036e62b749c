#pragma once

// Heatmap generation from X_l: squeeze (per-frame spatial mean), excitation
// with a softmax over channels, channel-weighted sum, clip-wide min-max
// normalization; plus the attention-reweighted auxiliary classifier and the
// quadratic energy regularizer.

#include "akn/graph.hpp"
#include "akn/ops.hpp"

#include <random>
#include <string>

namespace akn {

struct KeypointHeadConfig {
    std::size_t channels = 64;
    std::size_t reduction = 4;
    std::size_t num_classes = 4;
};

// Parameter names under "kp.".
template <typename T>
void init_keypoint_head(const KeypointHeadConfig& cfg, Parameters<T>& params, std::mt19937_64& rng)
{
    if (cfg.reduction == 0 || cfg.channels % cfg.reduction != 0)
        throw std::invalid_argument("reduction ratio " + std::to_string(cfg.reduction) + " must divide channel count " +
                                    std::to_string(cfg.channels));
    const std::size_t c = cfg.channels, hidden = cfg.channels / cfg.reduction;
    auto fill = [&](Dims dims, double fan_in, double gain) {
        std::normal_distribution<double> dist(0.0, std::sqrt(gain / fan_in));
        Tensor<T> t(std::move(dims));
        for (auto& v : t.data())
            v = static_cast<T>(dist(rng));
        return t;
    };
    params.set("kp.se.w1", fill({hidden, c}, static_cast<double>(c), 2.0));
    params.set("kp.se.w2", fill({c, hidden}, static_cast<double>(hidden), 1.0));
    params.set("kp.aux.conv1.weight", fill({c, c, 3, 3}, 9.0 * c, 2.0));
    params.set("kp.aux.conv1.bias", Tensor<T>({c}));
    params.set("kp.aux.conv2.weight", fill({c, c, 3, 3}, 9.0 * c, 2.0));
    params.set("kp.aux.conv2.bias", Tensor<T>({c}));
    params.set("kp.aux.fc.weight", fill({cfg.num_classes, c}, static_cast<double>(c), 1.0));
    params.set("kp.aux.fc.bias", Tensor<T>({cfg.num_classes}));
}

// Z: T x C, per-frame spatial mean of X_l (C x T x H x W).
template <typename T>
Var channel_squeeze(Graph<T>& g, Var features)
{
    return ops::spatial_mean(g, features);
}

// omega = softmax(W2 relu(W1 z)) per frame; returns T x C, each row a simplex vector.
template <typename T>
Var channel_weights(Graph<T>& g, Var squeezed, Var w1, Var w2)
{
    Var hidden = ops::relu(g, ops::matmul(g, squeezed, ops::transpose(g, w1)));
    return ops::softmax(g, ops::matmul(g, hidden, ops::transpose(g, w2)));
}

template <typename T>
struct HeatmapVars {
    Var raw;         // T x H x W, unbounded scores
    Var normalized;  // T x H x W in [0,1]
};

template <typename T>
HeatmapVars<T> heatmap(Graph<T>& g, Var features, Var omega)
{
    if (!g.value(features).all_finite())
        throw std::domain_error("heatmap: non-finite features");
    Var raw = ops::channel_weighted_sum(g, features, omega);
    return {raw, ops::minmax_normalize(g, raw)};
}

// X~_c = H (.) X_c for every channel c.
template <typename T>
Var attention_reweight(Graph<T>& g, Var features, Var heat)
{
    return ops::mul_channels(g, features, heat);
}

// conv(stride 2) -> relu -> conv(stride 2) -> relu -> GAP -> dense.
template <typename T>
Var aux_predict(Graph<T>& g, Var reweighted)
{
    Var x = ops::conv2d(g, reweighted, g.param("kp.aux.conv1.weight"), 2, 1);
    x = ops::relu(g, ops::channel_bias(g, x, g.param("kp.aux.conv1.bias")));
    x = ops::conv2d(g, x, g.param("kp.aux.conv2.weight"), 2, 1);
    x = ops::relu(g, ops::channel_bias(g, x, g.param("kp.aux.conv2.bias")));
    return ops::dense(g, ops::global_avg_pool(g, x), g.param("kp.aux.fc.weight"), g.param("kp.aux.fc.bias"));
}

// r_e = mean over all T*H*W positions of 4 H (1 - H).
template <typename T>
Var energy_reg(Graph<T>& g, Var heat)
{
    return ops::energy(g, heat);
}

} // namespace akn
