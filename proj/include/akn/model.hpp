#pragma once

// The full two-stage model: stage 1 is the plain backbone; stage 2 splits it
// at the separating stage, selects keypoints from the heatmap of X_l, and
// classifies them with the compacted 1D counterpart of the back layers.

#include "akn/backbone.hpp"
#include "akn/keypoint_head.hpp"
#include "akn/point_classifier.hpp"
#include "akn/point_pipeline.hpp"

#include <random>
#include <unordered_set>

namespace akn {

struct ModelConfig {
    BackboneConfig backbone;
    StageTag split = StageTag::s3;
    double alpha = 0.3;
    double tau = 0.0;  // <= 0: H + W of the selection layer
    bool rank = true;
    bool reg = true;
    bool transform = true;
    bool concat = true;
    bool keep_coord_channels = false;
    std::size_t reduction = 4;
    CompactAxis compact_axis = CompactAxis::width;
    PointStride point_stride = PointStride::area;
};

// Everything derived from a ModelConfig that forward passes need.
struct ModelLayout {
    Backbone backbone;
    NetworkSplit split;
    std::vector<PointLayerSpec> point_layers;
    std::size_t split_channels = 0;

    explicit ModelLayout(const ModelConfig& cfg);
};

template <typename T>
Parameters<T> init_stage1(const ModelLayout& layout, std::mt19937_64& rng)
{
    Parameters<T> params;
    init_backbone(layout.backbone, params, rng);
    return params;
}

// Stage-2 parameters: the front layers of the stage-1 network, the compacted
// back layers, the keypoint head, the transform net and the fused classifier.
template <typename T>
Parameters<T> init_stage2(const ModelConfig& cfg, const ModelLayout& layout, const Parameters<T>& stage1,
                          std::mt19937_64& rng)
{
    Parameters<T> params;
    Parameters<T> fresh;
    init_backbone(layout.backbone, fresh, rng);
    for (const auto& l : layout.split.front) {
        for (std::size_t i = 0; i < fresh.size(); ++i) {
            const auto& name = fresh.name(i);
            if (name.rfind(l.name + ".", 0) == 0) {
                if (!stage1.contains(name))
                    throw std::invalid_argument("stage-1 checkpoint lacks parameter " + name);
                params.set(name, stage1.at(name));
            }
        }
    }
    CompactOptions opts;
    opts.axis = cfg.compact_axis;
    opts.stride = cfg.point_stride;
    opts.extra_input_channels = (cfg.transform && cfg.keep_coord_channels) ? 3 : 0;
    compact_parameters<T>(layout.split.back, stage1, params, opts);
    init_keypoint_head<T>({layout.split_channels, cfg.reduction, layout.backbone.num_classes}, params, rng);
    if (cfg.transform)
        init_transform_net<T>({layout.split_channels}, params, rng);
    init_fuse_head<T>(layout.split_channels, layout.split.back.back().out_channels, layout.backbone.num_classes,
                      cfg.concat, params, rng);
    return params;
}

// Names of the front-layer parameters (for freezing F during fine-tuning).
std::unordered_set<std::string> front_parameter_names(const ModelLayout& layout, const std::vector<std::string>& names);

template <typename T>
struct Stage2Vars {
    Var features;   // X_l
    Var omega;      // T x C channel weights
    Var heat_raw;
    Var heat;       // normalized heatmap
    Var aux_logits;
    Var energy;     // r_e
    Var point_features;  // e_f
    Var logits;
    PointSet points;     // selected, ranked when enabled
};

template <typename T>
Stage2Vars<T> forward_stage2(Graph<T>& g, const ModelConfig& cfg, const ModelLayout& layout, const Tensor<T>& clip)
{
    Stage2Vars<T> v;
    v.features = forward_features(g, layout.split, clip);
    v.omega = channel_weights(g, channel_squeeze(g, v.features), g.param("kp.se.w1"), g.param("kp.se.w2"));
    auto hm = heatmap(g, v.features, v.omega);
    v.heat_raw = hm.raw;
    v.heat = hm.normalized;
    v.aux_logits = aux_predict(g, attention_reweight(g, v.features, v.heat));
    v.energy = energy_reg(g, v.heat);

    v.points = select_topn(g.value(v.heat), cfg.alpha);
    if (cfg.rank)
        v.points = rank_points(std::move(v.points), RankingConfig{cfg.tau});

    Var s = ops::gather_columns(g, v.features, v.points.positions);
    Var transformed = s;
    if (cfg.transform) {
        Var u = augment_with_coords(g, s, normalize_coords(v.points.coords));
        Var a = transform_net(g, u);
        transformed = apply_transform(g, u, a, cfg.keep_coord_channels ? g.value(u).dim(0) : layout.split_channels);
    }
    v.point_features = point_forward<T>(g, layout.point_layers, transformed);
    v.logits = fuse_predict(g, v.features, v.point_features, cfg.concat);
    return v;
}

struct LossTerms {
    double cls = 0.0;
    double aux = 0.0;
    double reg = 0.0;
    double total = 0.0;
};

template <typename T>
struct LossVars {
    Var total;
    LossTerms terms;
};

// L = (L_cls + L_aux) / 2 + r_e; the regularizer term is omitted when `energy` is invalid.
template <typename T>
LossVars<T> total_loss(Graph<T>& g, Var logits, Var aux_logits, std::size_t label, Var energy)
{
    Var cls = ops::cross_entropy(g, logits, label);
    Var aux = ops::cross_entropy(g, aux_logits, label);
    Var total = ops::scale(g, ops::add(g, cls, aux), T(0.5));
    LossVars<T> out;
    out.terms.cls = static_cast<double>(g.value(cls).item());
    out.terms.aux = static_cast<double>(g.value(aux).item());
    if (energy.valid()) {
        total = ops::add(g, total, energy);
        out.terms.reg = static_cast<double>(g.value(energy).item());
    }
    out.total = total;
    out.terms.total = static_cast<double>(g.value(total).item());
    return out;
}

} // namespace akn
