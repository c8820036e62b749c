#pragma once

#include "akn/graph.hpp"
#include "akn/ops.hpp"

#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace akn {

enum class StageTag { stem, s2, s3, s4, s5 };

std::string_view stage_name(StageTag tag);
StageTag parse_stage(std::string_view name);

enum class LayerKind { conv2d, relu, avgpool, temporal_shift, residual_block };

std::string_view layer_kind_name(LayerKind kind);

// One entry of the stage-structured layer list. A conv2d layer carries a
// per-channel scale/offset; a residual block holds two convs, their affines,
// and (when the shape changes) a 1x1 projection shortcut. `shift_fraction`
// is the TSM fraction for temporal_shift layers and for the residual branch
// of a block.
struct LayerSpec {
    LayerKind kind = LayerKind::conv2d;
    std::string name;
    StageTag stage = StageTag::stem;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t padding = 1;
    double shift_fraction = 0.0;

    bool has_projection() const { return in_channels != out_channels || stride != 1; }
};

struct StageConfig {
    StageTag tag;
    std::size_t channels;
    std::size_t stride;
};

struct BackboneConfig {
    std::size_t in_channels = 3;
    std::vector<StageConfig> stages = {
        {StageTag::stem, 16, 2}, {StageTag::s2, 32, 2}, {StageTag::s3, 64, 1},
        {StageTag::s4, 96, 2},   {StageTag::s5, 128, 2},
    };
    std::size_t kernel = 3;
    std::size_t blocks_per_stage = 1;
    double shift_fraction = 0.125;
    std::size_t num_classes = 4;
};

// The whole network G: layer list followed by a GAP + linear head ("head.fc").
struct Backbone {
    std::vector<LayerSpec> layers;
    std::size_t in_channels = 3;
    std::size_t num_classes = 0;

    std::size_t feature_channels() const { return layers.back().out_channels; }
    std::vector<StageTag> stage_list() const;
};

Backbone build_backbone(const BackboneConfig& config);

// F (layers up to and including the separating stage) and P (the rest).
struct NetworkSplit {
    StageTag at = StageTag::s3;
    std::vector<LayerSpec> front;
    std::vector<LayerSpec> back;
    std::size_t num_classes = 0;

    std::size_t split_channels() const { return front.back().out_channels; }
};

NetworkSplit split_at(const Backbone& net, StageTag stage);

// Feature-map extent after the given layers for an input of height x width.
struct Extent {
    std::size_t channels, height, width;
};
Extent output_extent(std::span<const LayerSpec> layers, std::size_t channels, std::size_t height, std::size_t width);

// T x C x H x W frames -> C x T x H x W.
template <typename T>
Tensor<T> to_channel_major(const Tensor<T>& clip)
{
    expect_rank(clip, 4, "clip");
    const std::size_t t = clip.dim(0), c = clip.dim(1), plane = clip.dim(2) * clip.dim(3);
    Tensor<T> out({c, t, clip.dim(2), clip.dim(3)});
    for (std::size_t f = 0; f < t; ++f)
        for (std::size_t ch = 0; ch < c; ++ch)
            std::copy_n(clip.ptr() + (f * c + ch) * plane, plane, out.ptr() + (ch * t + f) * plane);
    return out;
}

// He-normal conv weights, unit scale / zero offset affines.
template <typename T>
void init_backbone(const Backbone& net, Parameters<T>& params, std::mt19937_64& rng)
{
    auto conv = [&](const std::string& name, std::size_t cout, std::size_t cin, std::size_t k) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(cin * k * k)));
        Tensor<T> w({cout, cin, k, k});
        for (auto& v : w.data())
            v = static_cast<T>(dist(rng));
        params.set(name, std::move(w));
    };
    auto affine = [&](const std::string& name, std::size_t c, T scale) {
        params.set(name + ".scale", Tensor<T>({c}, scale));
        params.set(name + ".bias", Tensor<T>({c}, T{0}));
    };
    for (const auto& l : net.layers) {
        switch (l.kind) {
        case LayerKind::conv2d:
            conv(l.name + ".weight", l.out_channels, l.in_channels, l.kernel);
            affine(l.name + ".norm", l.out_channels, T{1});
            break;
        case LayerKind::residual_block:
            conv(l.name + ".conv1.weight", l.out_channels, l.in_channels, l.kernel);
            affine(l.name + ".norm1", l.out_channels, T{1});
            conv(l.name + ".conv2.weight", l.out_channels, l.out_channels, l.kernel);
            affine(l.name + ".norm2", l.out_channels, T{1});
            if (l.has_projection()) {
                conv(l.name + ".down.weight", l.out_channels, l.in_channels, 1);
                affine(l.name + ".down_norm", l.out_channels, T{1});
            }
            break;
        default:
            break;
        }
    }
    const std::size_t c = net.feature_channels();
    std::normal_distribution<double> dist(0.0, std::sqrt(1.0 / static_cast<double>(c)));
    Tensor<T> fc({net.num_classes, c});
    for (auto& v : fc.data())
        v = static_cast<T>(dist(rng));
    params.set("head.fc.weight", std::move(fc));
    params.set("head.fc.bias", Tensor<T>({net.num_classes}, T{0}));
}

namespace detail {

template <typename T>
Var affine(Graph<T>& g, Var x, const std::string& name)
{
    return ops::channel_affine(g, x, g.param(name + ".scale"), g.param(name + ".bias"));
}

} // namespace detail

// Run 2D layers over a C x T x H x W feature map.
template <typename T>
Var forward_layers(Graph<T>& g, std::span<const LayerSpec> layers, Var x)
{
    for (const auto& l : layers) {
        switch (l.kind) {
        case LayerKind::conv2d:
            x = ops::conv2d(g, x, g.param(l.name + ".weight"), l.stride, l.padding);
            x = detail::affine(g, x, l.name + ".norm");
            break;
        case LayerKind::relu:
            x = ops::relu(g, x);
            break;
        case LayerKind::avgpool:
            x = ops::avg_pool2d(g, x, l.kernel);
            break;
        case LayerKind::temporal_shift:
            x = ops::temporal_shift(g, x, l.shift_fraction);
            break;
        case LayerKind::residual_block: {
            Var r = l.shift_fraction > 0 ? ops::temporal_shift(g, x, l.shift_fraction) : x;
            r = ops::conv2d(g, r, g.param(l.name + ".conv1.weight"), l.stride, l.padding);
            r = ops::relu(g, detail::affine(g, r, l.name + ".norm1"));
            r = ops::conv2d(g, r, g.param(l.name + ".conv2.weight"), 1, l.padding);
            r = detail::affine(g, r, l.name + ".norm2");
            Var s = x;
            if (l.has_projection())
                s = detail::affine(g, ops::conv2d(g, x, g.param(l.name + ".down.weight"), l.stride, 0),
                                   l.name + ".down_norm");
            x = ops::relu(g, ops::add(g, r, s));
            break;
        }
        }
    }
    return x;
}

// GAP over (T,H,W) followed by the linear classifier.
template <typename T>
Var classify_head(Graph<T>& g, Var features)
{
    return ops::dense(g, ops::global_avg_pool(g, features), g.param("head.fc.weight"), g.param("head.fc.bias"));
}

// X_l = F(clip) for a T x C x H x W clip.
template <typename T>
Var forward_features(Graph<T>& g, const NetworkSplit& split, const Tensor<T>& clip)
{
    return forward_layers<T>(g, split.front, g.constant(to_channel_major(clip)));
}

// Logits of the unsplit network.
template <typename T>
Var forward_backbone(Graph<T>& g, const Backbone& net, const Tensor<T>& clip)
{
    return classify_head(g, forward_layers<T>(g, net.layers, g.constant(to_channel_major(clip))));
}

} // namespace akn
