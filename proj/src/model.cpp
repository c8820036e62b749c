#include "akn/model.hpp"

namespace akn {

ModelLayout::ModelLayout(const ModelConfig& cfg)
: backbone(build_backbone(cfg.backbone))
, split(split_at(backbone, cfg.split))
, split_channels(split.split_channels())
{
    if (!(cfg.alpha > 0.0) || cfg.alpha > 1.0)
        throw std::invalid_argument("alpha must lie in (0, 1]");
    if (cfg.tau > 0.0 && cfg.tau <= 1.0)
        throw std::invalid_argument("tau must exceed 1");
    CompactOptions opts;
    opts.axis = cfg.compact_axis;
    opts.stride = cfg.point_stride;
    opts.extra_input_channels = (cfg.transform && cfg.keep_coord_channels) ? 3 : 0;
    point_layers = compact_network(split.back, opts);
}

std::unordered_set<std::string> front_parameter_names(const ModelLayout& layout, const std::vector<std::string>& names)
{
    std::unordered_set<std::string> out;
    for (const auto& l : layout.split.front)
        for (const auto& n : names)
            if (n.rfind(l.name + ".", 0) == 0)
                out.insert(n);
    return out;
}

} // namespace akn
