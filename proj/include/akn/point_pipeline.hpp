#pragma once

#include "akn/graph.hpp"
#include "akn/ops.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace akn {

struct PointCoord {
    std::uint32_t x = 0, y = 0, t = 0;
    friend bool operator==(const PointCoord&, const PointCoord&) = default;
};

// Selected keypoints. `positions` are flat indices t*H*W + y*W + x into the
// selection-layer grid; `features` (N x C) is filled only by the plain
// tensor overload of select_topn.
struct PointSet {
    std::size_t frames = 0, height = 0, width = 0;
    std::vector<std::size_t> positions;
    std::vector<PointCoord> coords;
    std::vector<double> scores;
    Tensor<double> features;
    bool ordered = false;

    std::size_t size() const { return positions.size(); }
};

// N = round-half-up(alpha * count), at least 1.
std::size_t point_count(double alpha, std::size_t count);

// Top-N positions of a T x H x W heatmap over the whole clip. Ties resolve by
// ascending (t, y, x). Output is in selection order (score descending).
template <typename T>
PointSet select_topn(const Tensor<T>& heat, double alpha);

// Same, additionally gathering the N x C feature rows from X_l (C x T x H x W).
template <typename T>
PointSet select_topn(const Tensor<T>& heat, const Tensor<T>& features, double alpha);

struct RankingConfig {
    // Temporal weight of the sort key x + y + tau * t. Values <= 0 select H + W.
    double tau = 0.0;
};

double ranking_key(const PointCoord& c, double tau);
double effective_tau(const RankingConfig& cfg, std::size_t height, std::size_t width);

// Stable descending sort by x + y + tau * t.
PointSet rank_points(PointSet points, const RankingConfig& cfg);

struct NormalizedCoords {
    std::vector<std::array<double, 3>> points;  // (x, y, t) after centering and scaling
    std::array<double, 3> centroid{};
    double radius = 0.0;
};

// Subtract the centroid and divide by the largest point-to-centroid distance
// (by 1 when every point coincides).
NormalizedCoords normalize_coords(const std::vector<PointCoord>& coords);

// One line per point, `t,y,x,score`, in the stored order.
void write_point_dump(std::ostream& os, const PointSet& points);

// ---------------------------------------------------------------------------
// Transform network: per-point 1D convs (C+3)->64->128->256, max over points,
// dense 256->128->64->(C+3)^2. Parameter names under "tnet.".

struct TransformNetConfig {
    std::size_t feature_channels = 64;
    std::array<std::size_t, 3> conv_widths{64, 128, 256};
    std::array<std::size_t, 2> fc_widths{128, 64};

    std::size_t augmented() const { return feature_channels + 3; }
};

template <typename T>
void init_transform_net(const TransformNetConfig& cfg, Parameters<T>& params, std::mt19937_64& rng)
{
    auto fill = [&](Dims dims, double fan_in) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        Tensor<T> t(std::move(dims));
        for (auto& v : t.data())
            v = static_cast<T>(dist(rng));
        return t;
    };
    std::size_t in = cfg.augmented();
    for (std::size_t i = 0; i < 3; ++i) {
        const std::string name = "tnet.conv" + std::to_string(i + 1);
        params.set(name + ".weight", fill({cfg.conv_widths[i], in, 1}, static_cast<double>(in)));
        params.set(name + ".bias", Tensor<T>({cfg.conv_widths[i]}));
        in = cfg.conv_widths[i];
    }
    for (std::size_t i = 0; i < 2; ++i) {
        const std::string name = "tnet.fc" + std::to_string(i + 1);
        params.set(name + ".weight", fill({cfg.fc_widths[i], in}, static_cast<double>(in)));
        params.set(name + ".bias", Tensor<T>({cfg.fc_widths[i]}));
        in = cfg.fc_widths[i];
    }
    const std::size_t d = cfg.augmented();
    // Zero weights and an identity bias: A = I at step 0.
    params.set("tnet.fc3.weight", Tensor<T>({d * d, in}));
    Tensor<T> bias({d * d});
    for (std::size_t i = 0; i < d; ++i)
        bias[i * d + i] = T{1};
    params.set("tnet.fc3.bias", std::move(bias));
}

// A = T(concat(S, D')); `augmented` is the (C+3) x N channel-major point matrix.
template <typename T>
Var transform_net(Graph<T>& g, Var augmented)
{
    const std::size_t d = g.value(augmented).dim(0);
    Var x = augmented;
    for (int i = 1; i <= 3; ++i) {
        const std::string name = "tnet.conv" + std::to_string(i);
        x = ops::conv1d(g, x, g.param(name + ".weight"), 1, 0);
        x = ops::relu(g, ops::channel_bias(g, x, g.param(name + ".bias")));
    }
    x = ops::max_last(g, x);
    for (int i = 1; i <= 2; ++i) {
        const std::string name = "tnet.fc" + std::to_string(i);
        x = ops::relu(g, ops::dense(g, x, g.param(name + ".weight"), g.param(name + ".bias")));
    }
    x = ops::dense(g, x, g.param("tnet.fc3.weight"), g.param("tnet.fc3.bias"));
    return ops::reshape(g, x, Dims{d, d});
}

// P^ = concat(S, D') A, keeping `keep` leading feature channels. Works on the
// transposed (channel-major) layout: returns rows [0, keep) of A^T U.
template <typename T>
Var apply_transform(Graph<T>& g, Var augmented, Var transform, std::size_t keep)
{
    Var out = ops::matmul(g, ops::transpose(g, transform), augmented);
    if (keep == g.value(out).dim(0))
        return out;
    return ops::slice_rows(g, out, 0, keep);
}

// (C+3) x N matrix whose first C rows are the gathered features and last three
// rows the normalized (x, y, t).
template <typename T>
Var augment_with_coords(Graph<T>& g, Var features, const NormalizedCoords& coords)
{
    const std::size_t n = coords.points.size();
    Tensor<T> d({3, n});
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t a = 0; a < 3; ++a)
            d[a * n + k] = static_cast<T>(coords.points[k][a]);
    return ops::concat(g, {features, g.constant(std::move(d))});
}

} // namespace akn
