#include "akn/backbone.hpp"

#include <algorithm>
#include <stdexcept>

namespace akn {

std::string_view stage_name(StageTag tag)
{
    switch (tag) {
    case StageTag::stem: return "stem";
    case StageTag::s2: return "s2";
    case StageTag::s3: return "s3";
    case StageTag::s4: return "s4";
    case StageTag::s5: return "s5";
    }
    return "?";
}

StageTag parse_stage(std::string_view name)
{
    for (StageTag t : {StageTag::stem, StageTag::s2, StageTag::s3, StageTag::s4, StageTag::s5})
        if (stage_name(t) == name)
            return t;
    throw std::invalid_argument("unknown stage '" + std::string(name) + "' (expected stem, s2, s3, s4 or s5)");
}

std::string_view layer_kind_name(LayerKind kind)
{
    switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::temporal_shift: return "temporal_shift";
    case LayerKind::residual_block: return "residual_block";
    }
    return "?";
}

std::vector<StageTag> Backbone::stage_list() const
{
    std::vector<StageTag> out;
    for (const auto& l : layers)
        if (out.empty() || out.back() != l.stage)
            out.push_back(l.stage);
    return out;
}

Backbone build_backbone(const BackboneConfig& config)
{
    if (config.stages.empty())
        throw std::invalid_argument("backbone needs at least one stage");
    if (config.in_channels == 0)
        throw std::invalid_argument("backbone input channels must be positive");
    if (config.num_classes == 0)
        throw std::invalid_argument("class count must be positive");
    if (config.kernel % 2 == 0)
        throw std::invalid_argument("backbone kernel size must be odd");
    if (config.blocks_per_stage == 0)
        throw std::invalid_argument("blocks_per_stage must be positive");

    Backbone net;
    net.in_channels = config.in_channels;
    net.num_classes = config.num_classes;
    std::size_t channels = config.in_channels;
    for (std::size_t i = 0; i < config.stages.size(); ++i) {
        const auto& s = config.stages[i];
        if (s.channels == 0)
            throw std::invalid_argument("stage " + std::string(stage_name(s.tag)) + " has zero channels");
        if (s.stride == 0)
            throw std::invalid_argument("stage " + std::string(stage_name(s.tag)) + " has zero stride");
        if (i > 0 && static_cast<int>(s.tag) <= static_cast<int>(config.stages[i - 1].tag))
            throw std::invalid_argument("stage tags must appear in order stem, s2, s3, s4, s5");
        const std::string prefix(stage_name(s.tag));
        const std::size_t pad = config.kernel / 2;
        if (s.tag == StageTag::stem) {
            net.layers.push_back({LayerKind::conv2d, prefix + ".conv", s.tag, channels, s.channels, config.kernel,
                                  s.stride, pad, 0.0});
            net.layers.push_back({LayerKind::relu, prefix + ".relu", s.tag, s.channels, s.channels, 1, 1, 0, 0.0});
        } else {
            for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
                net.layers.push_back({LayerKind::residual_block, prefix + ".block" + std::to_string(b), s.tag,
                                      b == 0 ? channels : s.channels, s.channels, config.kernel,
                                      b == 0 ? s.stride : 1, pad, config.shift_fraction});
            }
        }
        channels = s.channels;
    }
    return net;
}

NetworkSplit split_at(const Backbone& net, StageTag stage)
{
    if (stage == StageTag::stem || stage == StageTag::s5)
        throw std::invalid_argument("separating layer " + std::string(stage_name(stage)) +
                                    " rejected: the first and last stages cannot split the network");
    const auto stages = net.stage_list();
    if (std::find(stages.begin(), stages.end(), stage) == stages.end())
        throw std::invalid_argument("separating layer " + std::string(stage_name(stage)) +
                                    " is not part of the backbone");
    NetworkSplit split;
    split.at = stage;
    split.num_classes = net.num_classes;
    for (const auto& l : net.layers) {
        if (static_cast<int>(l.stage) <= static_cast<int>(stage))
            split.front.push_back(l);
        else
            split.back.push_back(l);
    }
    if (split.back.empty())
        throw std::invalid_argument("separating layer leaves no back layers");
    return split;
}

Extent output_extent(std::span<const LayerSpec> layers, std::size_t channels, std::size_t height, std::size_t width)
{
    Extent e{channels, height, width};
    for (const auto& l : layers) {
        switch (l.kind) {
        case LayerKind::conv2d:
        case LayerKind::residual_block:
            e.height = detail::conv_extent(e.height, l.kernel, l.stride, l.padding, "height");
            e.width = detail::conv_extent(e.width, l.kernel, l.stride, l.padding, "width");
            e.channels = l.out_channels;
            break;
        case LayerKind::avgpool:
            e.height /= l.kernel;
            e.width /= l.kernel;
            break;
        default:
            break;
        }
    }
    return e;
}

} // namespace akn
