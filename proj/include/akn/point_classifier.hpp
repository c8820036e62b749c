#pragma once

// Kernel compaction (2D -> 1D by summing one spatial kernel axis), the 1D
// counterpart Q of the back layers P, and the fused final classifier.

#include "akn/backbone.hpp"
#include "akn/graph.hpp"
#include "akn/ops.hpp"

#include <random>
#include <span>
#include <string>
#include <vector>

namespace akn {

enum class CompactAxis { width, height };

// How a 2D stride s maps onto the point axis: `area` uses s*s so the point
// count shrinks by the same factor as H*W; `linear` keeps s.
enum class PointStride { area, linear };

struct CompactOptions {
    CompactAxis axis = CompactAxis::width;
    PointStride stride = PointStride::area;
    // Drop temporal-shift layers (no 1D counterpart). When false they are rejected.
    bool drop_temporal_shift = true;
    // Extra leading input channels of the first layer (the 3 coordinate channels
    // when they are kept after the transform).
    std::size_t extra_input_channels = 0;
};

// w: Cout x Cin x k x k -> Cout x Cin x k, summing the width (or height) axis.
template <typename T>
Tensor<T> compact_kernel(const Tensor<T>& w, CompactAxis axis = CompactAxis::width)
{
    expect_rank(w, 4, "compact_kernel weight");
    const std::size_t co = w.dim(0), ci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const std::size_t k = axis == CompactAxis::width ? kh : kw;
    Tensor<T> out({co, ci, k});
    for (std::size_t o = 0; o < co; ++o)
        for (std::size_t i = 0; i < ci; ++i)
            for (std::size_t a = 0; a < kh; ++a)
                for (std::size_t b = 0; b < kw; ++b)
                    out[(o * ci + i) * k + (axis == CompactAxis::width ? a : b)] += w.at(o, i, a, b);
    return out;
}

enum class PointLayerKind { conv1d, relu, avgpool1d, residual_block };

struct PointLayerSpec {
    PointLayerKind kind = PointLayerKind::conv1d;
    std::string name;  // source layer name; parameters live under name + ".<part>.1d"
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t padding = 1;
    std::size_t in_extra = 0;  // zero-initialized extra input channels (first layer only)

    bool has_projection() const { return in_channels + in_extra != out_channels || stride != 1; }
};

// Topology-preserving 2D -> 1D conversion of the back layers.
std::vector<PointLayerSpec> compact_network(std::span<const LayerSpec> back, const CompactOptions& opts = {});

// Adds "<param>.1d" entries for every parameter of the compacted layers:
// conv weights are compacted, affines copied.
template <typename T>
void compact_parameters(std::span<const LayerSpec> back, const Parameters<T>& src, Parameters<T>& dst,
                        const CompactOptions& opts = {})
{
    auto kernel = [&](const std::string& name, std::size_t extra) {
        Tensor<T> w = compact_kernel(src.at(name), opts.axis);
        if (extra) {
            const std::size_t co = w.dim(0), ci = w.dim(1), k = w.dim(2);
            Tensor<T> widened({co, ci + extra, k});
            for (std::size_t o = 0; o < co; ++o)
                std::copy_n(w.ptr() + o * ci * k, ci * k, widened.ptr() + o * (ci + extra) * k);
            w = std::move(widened);
        }
        dst.set(name + ".1d", std::move(w));
    };
    auto copy_affine = [&](const std::string& name) {
        dst.set(name + ".scale.1d", src.at(name + ".scale"));
        dst.set(name + ".bias.1d", src.at(name + ".bias"));
    };
    bool first = true;
    for (const auto& l : back) {
        const std::size_t extra = first ? opts.extra_input_channels : 0;
        switch (l.kind) {
        case LayerKind::conv2d:
            kernel(l.name + ".weight", extra);
            copy_affine(l.name + ".norm");
            first = false;
            break;
        case LayerKind::residual_block:
            kernel(l.name + ".conv1.weight", extra);
            copy_affine(l.name + ".norm1");
            kernel(l.name + ".conv2.weight", 0);
            copy_affine(l.name + ".norm2");
            if (l.has_projection()) {
                kernel(l.name + ".down.weight", extra);
                copy_affine(l.name + ".down_norm");
            }
            first = false;
            break;
        default:
            break;
        }
    }
}

namespace detail {

template <typename T>
Var affine_1d(Graph<T>& g, Var x, const std::string& name)
{
    return ops::channel_affine(g, x, g.param(name + ".scale.1d"), g.param(name + ".bias.1d"));
}

} // namespace detail

// e_f = Q(P~): ranked points as a C x N signal -> C' x N'.
template <typename T>
Var point_forward(Graph<T>& g, std::span<const PointLayerSpec> layers, Var points)
{
    Var x = points;
    for (const auto& l : layers) {
        switch (l.kind) {
        case PointLayerKind::conv1d:
            x = ops::conv1d(g, x, g.param(l.name + ".weight.1d"), l.stride, l.padding);
            x = detail::affine_1d(g, x, l.name + ".norm");
            break;
        case PointLayerKind::relu:
            x = ops::relu(g, x);
            break;
        case PointLayerKind::avgpool1d:
            x = ops::avg_pool1d(g, x, l.kernel);
            break;
        case PointLayerKind::residual_block: {
            Var r = ops::conv1d(g, x, g.param(l.name + ".conv1.weight.1d"), l.stride, l.padding);
            r = ops::relu(g, detail::affine_1d(g, r, l.name + ".norm1"));
            r = ops::conv1d(g, r, g.param(l.name + ".conv2.weight.1d"), 1, l.padding);
            r = detail::affine_1d(g, r, l.name + ".norm2");
            Var s = x;
            if (l.has_projection())
                s = detail::affine_1d(g, ops::conv1d(g, x, g.param(l.name + ".down.weight.1d"), l.stride, 0),
                                      l.name + ".down_norm");
            x = ops::relu(g, ops::add(g, r, s));
            break;
        }
        }
    }
    return x;
}

// y_cls = f_c(concat(GAP(X_l), mean over points of e_f)). With `use_gap` off
// only the pooled point feature feeds f_c. Parameters "fc.weight"/"fc.bias".
template <typename T>
Var fuse_predict(Graph<T>& g, Var features, Var point_features, bool use_gap = true)
{
    Var pooled = ops::global_avg_pool(g, point_features);
    Var joined = use_gap ? ops::concat(g, {ops::global_avg_pool(g, features), pooled}) : pooled;
    return ops::dense(g, joined, g.param("fc.weight"), g.param("fc.bias"));
}

// f_c over [GAP(X_l); pooled e_f] (or the pooled e_f alone), normal with
// std 1/sqrt(fan_in) and zero bias.
template <typename T>
void init_fuse_head(std::size_t gap_channels, std::size_t point_channels, std::size_t num_classes, bool use_gap,
                    Parameters<T>& params, std::mt19937_64& rng)
{
    const std::size_t in = (use_gap ? gap_channels : 0) + point_channels;
    std::normal_distribution<double> dist(0.0, std::sqrt(1.0 / static_cast<double>(in)));
    Tensor<T> w({num_classes, in});
    for (auto& v : w.data())
        v = static_cast<T>(dist(rng));
    params.set("fc.weight", std::move(w));
    params.set("fc.bias", Tensor<T>({num_classes}));
}

} // namespace akn
