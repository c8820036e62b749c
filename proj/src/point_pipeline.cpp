#include "akn/point_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace akn {

std::size_t point_count(double alpha, std::size_t count)
{
    if (!(alpha > 0.0) || alpha > 1.0)
        throw std::invalid_argument("sampling ratio alpha must lie in (0, 1], got " + std::to_string(alpha));
    const auto n = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(count) + 0.5));
    return std::clamp<std::size_t>(n, 1, count);
}

template <typename T>
PointSet select_topn(const Tensor<T>& heat, double alpha)
{
    expect_rank(heat, 3, "heatmap");
    const std::size_t total = heat.size();
    const std::size_t n = point_count(alpha, total);
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::size_t a, std::size_t b) { return heat[a] > heat[b] || (heat[a] == heat[b] && a < b); });
    order.resize(n);

    PointSet ps;
    ps.frames = heat.dim(0);
    ps.height = heat.dim(1);
    ps.width = heat.dim(2);
    const std::size_t plane = ps.height * ps.width;
    for (std::size_t idx : order) {
        ps.positions.push_back(idx);
        ps.coords.push_back({static_cast<std::uint32_t>(idx % ps.width),
                             static_cast<std::uint32_t>((idx % plane) / ps.width),
                             static_cast<std::uint32_t>(idx / plane)});
        ps.scores.push_back(static_cast<double>(heat[idx]));
    }
    return ps;
}

template <typename T>
PointSet select_topn(const Tensor<T>& heat, const Tensor<T>& features, double alpha)
{
    expect_rank(features, 4, "point features");
    if (features.dim(1) != heat.dim(0) || features.dim(2) != heat.dim(1) || features.dim(3) != heat.dim(2))
        throw ShapeError("select_topn: heatmap " + dims_to_string(heat.dims()) + " does not match features " +
                         dims_to_string(features.dims()));
    PointSet ps = select_topn(heat, alpha);
    const std::size_t c = features.dim(0);
    const std::size_t p = heat.size();
    ps.features = Tensor<double>({ps.size(), c});
    for (std::size_t k = 0; k < ps.size(); ++k)
        for (std::size_t ch = 0; ch < c; ++ch)
            ps.features[k * c + ch] = static_cast<double>(features[ch * p + ps.positions[k]]);
    return ps;
}

template PointSet select_topn<float>(const Tensor<float>&, double);
template PointSet select_topn<double>(const Tensor<double>&, double);
template PointSet select_topn<float>(const Tensor<float>&, const Tensor<float>&, double);
template PointSet select_topn<double>(const Tensor<double>&, const Tensor<double>&, double);

double ranking_key(const PointCoord& c, double tau)
{
    return static_cast<double>(c.x) + static_cast<double>(c.y) + tau * static_cast<double>(c.t);
}

double effective_tau(const RankingConfig& cfg, std::size_t height, std::size_t width)
{
    if (cfg.tau <= 0.0)
        return static_cast<double>(height + width);
    if (cfg.tau <= 1.0)
        throw std::invalid_argument("ranking weight tau must exceed 1");
    return cfg.tau;
}

PointSet rank_points(PointSet points, const RankingConfig& cfg)
{
    const double tau = effective_tau(cfg, points.height, points.width);
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ranking_key(points.coords[a], tau) > ranking_key(points.coords[b], tau);
    });

    PointSet out;
    out.frames = points.frames;
    out.height = points.height;
    out.width = points.width;
    out.ordered = true;
    const bool has_features = !points.features.empty();
    const std::size_t c = has_features ? points.features.dim(1) : 0;
    if (has_features)
        out.features = Tensor<double>(points.features.dims());
    for (std::size_t k = 0; k < order.size(); ++k) {
        const std::size_t src = order[k];
        out.positions.push_back(points.positions[src]);
        out.coords.push_back(points.coords[src]);
        out.scores.push_back(points.scores[src]);
        if (has_features)
            std::copy_n(points.features.ptr() + src * c, c, out.features.ptr() + k * c);
    }
    return out;
}

NormalizedCoords normalize_coords(const std::vector<PointCoord>& coords)
{
    if (coords.empty())
        throw std::invalid_argument("normalize_coords: empty point set");
    NormalizedCoords out;
    const double n = static_cast<double>(coords.size());
    for (const auto& c : coords) {
        out.centroid[0] += c.x / n;
        out.centroid[1] += c.y / n;
        out.centroid[2] += c.t / n;
    }
    out.points.reserve(coords.size());
    double radius = 0.0;
    for (const auto& c : coords) {
        std::array<double, 3> p{c.x - out.centroid[0], c.y - out.centroid[1], c.t - out.centroid[2]};
        radius = std::max(radius, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
        out.points.push_back(p);
    }
    out.radius = radius;
    const double div = radius < 1e-9 ? 1.0 : radius;
    for (auto& p : out.points)
        for (double& v : p)
            v /= div;
    return out;
}

void write_point_dump(std::ostream& os, const PointSet& points)
{
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto& c = points.coords[k];
        os << c.t << ',' << c.y << ',' << c.x << ',' << points.scores[k] << '\n';
    }
}

} // namespace akn
