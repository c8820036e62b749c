#include "akn/point_classifier.hpp"

#include <stdexcept>

namespace akn {

std::vector<PointLayerSpec> compact_network(std::span<const LayerSpec> back, const CompactOptions& opts)
{
    auto point_stride = [&](std::size_t s) { return opts.stride == PointStride::area ? s * s : s; };
    std::vector<PointLayerSpec> out;
    bool first = true;
    for (const auto& l : back) {
        const std::size_t extra = first ? opts.extra_input_channels : 0;
        switch (l.kind) {
        case LayerKind::conv2d:
            out.push_back({PointLayerKind::conv1d, l.name, l.in_channels, l.out_channels, l.kernel,
                           point_stride(l.stride), l.padding, extra});
            first = false;
            break;
        case LayerKind::relu:
            out.push_back({PointLayerKind::relu, l.name, l.in_channels, l.out_channels, 1, 1, 0, 0});
            break;
        case LayerKind::avgpool:
            out.push_back({PointLayerKind::avgpool1d, l.name, l.in_channels, l.out_channels,
                           point_stride(l.kernel), point_stride(l.kernel), 0, 0});
            break;
        case LayerKind::residual_block:
            if (extra && !l.has_projection())
                throw std::invalid_argument("layer " + l.name +
                                            " has an identity shortcut and cannot take extra coordinate channels");
            out.push_back({PointLayerKind::residual_block, l.name, l.in_channels, l.out_channels, l.kernel,
                           point_stride(l.stride), l.padding, extra});
            first = false;
            break;
        case LayerKind::temporal_shift:
            if (!opts.drop_temporal_shift)
                throw std::invalid_argument("layer " + l.name + " (temporal_shift) has no 1D counterpart");
            break;
        }
    }
    return out;
}

} // namespace akn
