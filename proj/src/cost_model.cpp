#include "akn/cost_model.hpp"

#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace akn {

std::string_view op_kind_name(OpKind kind)
{
    switch (kind) {
    case OpKind::conv3d: return "conv3d";
    case OpKind::conv2p1d: return "conv2p1d";
    case OpKind::conv2d: return "conv2d";
    case OpKind::conv1d_points: return "conv1d_points";
    }
    return "?";
}

std::string_view cost_group_name(CostGroup group)
{
    switch (group) {
    case CostGroup::front: return "front";
    case CostGroup::heatmap: return "heatmap";
    case CostGroup::aux: return "aux";
    case CostGroup::point: return "point";
    case CostGroup::head: return "head";
    }
    return "?";
}

OpCost op_cost(OpKind kind, const OpDims& d)
{
    OpCost c{kind, d, 0, 0};
    const std::uint64_t cc = d.c_in * d.c_out;
    const std::uint64_t thw = d.t * d.h * d.w;
    switch (kind) {
    case OpKind::conv3d:
        c.params = cc * d.ks * d.ks * d.kt;
        c.flops = c.params * thw;
        break;
    case OpKind::conv2p1d:
        c.params = cc * (d.ks * d.ks + d.kt);
        c.flops = c.params * thw;
        break;
    case OpKind::conv2d:
        c.params = cc * d.ks * d.ks;
        c.flops = c.params * thw;
        break;
    case OpKind::conv1d_points:
        c.params = cc * d.kp;
        c.flops = c.params * d.n;
        break;
    }
    return c;
}

double CostReport::back_reduction() const
{
    return baseline_back.flops ? 1.0 - static_cast<double>(point.flops) / static_cast<double>(baseline_back.flops)
                               : 0.0;
}

double CostReport::reduction() const
{
    return baseline_total.flops ? 1.0 - static_cast<double>(total.flops) / static_cast<double>(baseline_total.flops)
                                : 0.0;
}

namespace {

struct Grid {
    std::size_t channels, frames, height, width;
};

OpCost conv2d_cost(std::size_t cin, std::size_t cout, std::size_t k, const Grid& out)
{
    return op_cost(OpKind::conv2d, {.c_in = cin, .c_out = cout, .ks = k, .t = out.frames, .h = out.height,
                                    .w = out.width});
}

OpCost points_cost(std::size_t cin, std::size_t cout, std::size_t k, std::size_t n)
{
    return op_cost(OpKind::conv1d_points, {.c_in = cin, .c_out = cout, .kp = k, .n = n});
}

// 2D layers over a C x T x H x W grid; returns the output grid.
Grid cost_2d_layers(std::span<const LayerSpec> layers, Grid g, CostGroup group, std::vector<LayerCost>& out)
{
    for (const auto& l : layers) {
        switch (l.kind) {
        case LayerKind::conv2d:
        case LayerKind::residual_block: {
            Grid o{l.out_channels, g.frames, detail::conv_extent(g.height, l.kernel, l.stride, l.padding, "height"),
                   detail::conv_extent(g.width, l.kernel, l.stride, l.padding, "width")};
            if (l.kind == LayerKind::conv2d) {
                out.push_back({l.name, group, conv2d_cost(l.in_channels, l.out_channels, l.kernel, o)});
            } else {
                out.push_back({l.name + ".conv1", group, conv2d_cost(l.in_channels, l.out_channels, l.kernel, o)});
                out.push_back({l.name + ".conv2", group, conv2d_cost(l.out_channels, l.out_channels, l.kernel, o)});
                if (l.has_projection())
                    out.push_back({l.name + ".down", group, conv2d_cost(l.in_channels, l.out_channels, 1, o)});
            }
            g = o;
            break;
        }
        case LayerKind::avgpool:
            g.height /= l.kernel;
            g.width /= l.kernel;
            break;
        default:
            break;
        }
    }
    return g;
}

// Compacted 1D layers over n points; returns the output point count.
std::size_t cost_point_layers(std::span<const PointLayerSpec> layers, std::size_t n, std::vector<LayerCost>& out)
{
    for (const auto& l : layers) {
        switch (l.kind) {
        case PointLayerKind::conv1d:
        case PointLayerKind::residual_block: {
            const std::size_t m = detail::conv_extent(n, l.kernel, l.stride, l.padding, "length");
            const std::size_t cin = l.in_channels + l.in_extra;
            if (l.kind == PointLayerKind::conv1d) {
                out.push_back({l.name + ".1d", CostGroup::point, points_cost(cin, l.out_channels, l.kernel, m)});
            } else {
                out.push_back({l.name + ".conv1.1d", CostGroup::point, points_cost(cin, l.out_channels, l.kernel, m)});
                out.push_back(
                    {l.name + ".conv2.1d", CostGroup::point, points_cost(l.out_channels, l.out_channels, l.kernel, m)});
                if (l.has_projection())
                    out.push_back({l.name + ".down.1d", CostGroup::point, points_cost(cin, l.out_channels, 1, m)});
            }
            n = m;
            break;
        }
        case PointLayerKind::avgpool1d:
            n /= l.kernel;
            break;
        case PointLayerKind::relu:
            break;
        }
    }
    return n;
}

CostTotals sum(const std::vector<LayerCost>& layers)
{
    CostTotals t;
    for (const auto& l : layers)
        t += l.cost;
    return t;
}

} // namespace

CostReport network_cost(const ModelConfig& cfg, const CostInput& input)
{
    const ModelLayout layout(cfg);
    const auto& net = layout.backbone;
    CostReport r;

    // Baseline: every layer in 2D, then GAP + fc.
    const Grid in{net.in_channels, input.frames, input.height, input.width};
    std::vector<LayerCost> front_only;
    const Grid split_grid = cost_2d_layers(layout.split.front, in, CostGroup::front, front_only);
    r.baseline = front_only;
    std::vector<LayerCost> back_2d;
    const Grid last = cost_2d_layers(layout.split.back, split_grid, CostGroup::front, back_2d);
    r.baseline.insert(r.baseline.end(), back_2d.begin(), back_2d.end());
    r.baseline.push_back({"head.fc", CostGroup::head, points_cost(last.channels, net.num_classes, 1, 1)});
    r.baseline_total = sum(r.baseline);
    r.baseline_back = sum(back_2d);

    // Split model.
    const std::size_t c = split_grid.channels;
    const std::size_t thw = split_grid.frames * split_grid.height * split_grid.width;
    const std::size_t n = point_count(cfg.alpha, thw);
    r.points = n;
    std::vector<LayerCost>& L = r.layers;
    L = front_only;

    const std::size_t hidden = c / cfg.reduction;
    L.push_back({"kp.se.w1", CostGroup::heatmap, points_cost(c, hidden, 1, split_grid.frames)});
    L.push_back({"kp.se.w2", CostGroup::heatmap, points_cost(hidden, c, 1, split_grid.frames)});
    L.push_back({"kp.heatmap", CostGroup::heatmap, points_cost(c, 1, 1, thw)});

    Grid a = split_grid;
    for (const char* name : {"kp.aux.conv1", "kp.aux.conv2"}) {
        a = {c, a.frames, detail::conv_extent(a.height, 3, 2, 1, "height"), detail::conv_extent(a.width, 3, 2, 1, "width")};
        L.push_back({name, CostGroup::aux, conv2d_cost(c, c, 3, a)});
    }
    L.push_back({"kp.aux.fc", CostGroup::aux, points_cost(c, net.num_classes, 1, 1)});

    if (cfg.transform) {
        const TransformNetConfig tc{c};
        std::size_t prev = tc.augmented();
        const char* conv_names[] = {"tnet.conv1", "tnet.conv2", "tnet.conv3"};
        for (std::size_t i = 0; i < 3; ++i) {
            L.push_back({conv_names[i], CostGroup::point, points_cost(prev, tc.conv_widths[i], 1, n)});
            prev = tc.conv_widths[i];
        }
        const char* fc_names[] = {"tnet.fc1", "tnet.fc2"};
        for (std::size_t i = 0; i < 2; ++i) {
            L.push_back({fc_names[i], CostGroup::point, points_cost(prev, tc.fc_widths[i], 1, 1)});
            prev = tc.fc_widths[i];
        }
        const std::size_t aug = tc.augmented();
        L.push_back({"tnet.fc3", CostGroup::point, points_cost(prev, aug * aug, 1, 1)});
        const std::size_t keep = cfg.keep_coord_channels ? aug : c;
        L.push_back({"tnet.apply", CostGroup::point, points_cost(aug, keep, 1, n)});
    }
    cost_point_layers(layout.point_layers, n, L);

    const std::size_t fc_in = (cfg.concat ? c : 0) + layout.split.back.back().out_channels;
    L.push_back({"fc", CostGroup::head, points_cost(fc_in, net.num_classes, 1, 1)});

    for (const auto& l : L) {
        switch (l.group) {
        case CostGroup::front: r.front += l.cost; break;
        case CostGroup::heatmap: r.heatmap += l.cost; break;
        case CostGroup::aux: r.aux += l.cost; break;
        case CostGroup::point: r.point += l.cost; break;
        case CostGroup::head: r.head += l.cost; break;
        }
        r.total += l.cost;
    }
    return r;
}

std::vector<SweepRow> sweep(const ModelConfig& base, const CostInput& input, const std::vector<StageTag>& splits,
                            const std::vector<double>& alphas)
{
    std::vector<SweepRow> rows;
    for (StageTag s : splits)
        for (double a : alphas) {
            ModelConfig cfg = base;
            cfg.split = s;
            cfg.alpha = a;
            const auto r = network_cost(cfg, input);
            rows.push_back({s, a, static_cast<double>(r.total.flops) / 1e9, r.total.params, r.total.flops});
        }
    return rows;
}

void write_cost_table(std::ostream& os, const CostReport& r)
{
    os << "layer\tkind\tparams\tflops\n";
    for (const auto& l : r.layers)
        os << l.layer << '\t' << op_kind_name(l.cost.kind) << '\t' << l.cost.params << '\t' << l.cost.flops << '\n';
    auto line = [&](const char* name, const CostTotals& t) {
        os << name << "\ttotal\t" << t.params << '\t' << t.flops << '\n';
    };
    line("#front", r.front);
    line("#heatmap", r.heatmap);
    line("#aux", r.aux);
    line("#point", r.point);
    line("#head", r.head);
    line("#total", r.total);
    line("#baseline", r.baseline_total);
    line("#baseline_back", r.baseline_back);
    os << "#points\t" << r.points << '\n';
    os << std::fixed << std::setprecision(4) << "#back_reduction\t" << r.back_reduction() << '\n'
       << "#reduction\t" << r.reduction() << '\n';
    os.unsetf(std::ios::floatfield);
}

void write_sweep_table(std::ostream& os, const std::vector<SweepRow>& rows)
{
    os << "split\talpha\tgflops\tparams\n";
    for (const auto& r : rows)
        os << stage_name(r.split) << '\t' << std::setprecision(3) << r.alpha << '\t' << std::fixed
           << std::setprecision(6) << r.gflops << '\t' << r.params << '\n'
           << std::defaultfloat;
}

} // namespace akn
