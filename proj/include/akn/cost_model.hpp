#pragma once

// Analytical parameter / multiply-accumulate accounting.

#include "akn/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace akn {

enum class OpKind { conv3d, conv2p1d, conv2d, conv1d_points };

std::string_view op_kind_name(OpKind kind);

struct OpDims {
    std::uint64_t c_in = 1, c_out = 1;
    std::uint64_t ks = 1, kt = 1, kp = 1;
    std::uint64_t t = 1, h = 1, w = 1;
    std::uint64_t n = 1;  // points (conv1d_points only)
};

struct OpCost {
    OpKind kind = OpKind::conv2d;
    OpDims dims;
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
};

//   conv3d        Cin Cout ks^2 kt        x T H W
//   conv2p1d      Cin Cout (ks^2 + kt)    x T H W
//   conv2d        Cin Cout ks^2           x T H W
//   conv1d_points Cin Cout kp             x N
OpCost op_cost(OpKind kind, const OpDims& dims);

enum class CostGroup { front, heatmap, aux, point, head };

std::string_view cost_group_name(CostGroup group);

struct LayerCost {
    std::string layer;
    CostGroup group;
    OpCost cost;
};

struct CostTotals {
    std::uint64_t params = 0;
    std::uint64_t flops = 0;

    CostTotals& operator+=(const OpCost& c)
    {
        params += c.params;
        flops += c.flops;
        return *this;
    }
};

struct CostReport {
    std::vector<LayerCost> layers;     // the split model, in execution order
    std::vector<LayerCost> baseline;   // the unsplit 2D network
    CostTotals front, heatmap, aux, point, head, total;
    CostTotals baseline_total;
    CostTotals baseline_back;  // 2D layers that the point branch replaces
    std::size_t points = 0;    // N at the separating layer

    // 1 - point / baseline_back (flops).
    double back_reduction() const;
    // 1 - total / baseline_total (flops).
    double reduction() const;
};

struct CostInput {
    std::size_t frames = 8, height = 32, width = 32;
};

CostReport network_cost(const ModelConfig& cfg, const CostInput& input);

struct SweepRow {
    StageTag split;
    double alpha;
    double gflops;
    std::uint64_t params;
    std::uint64_t flops;
};

std::vector<SweepRow> sweep(const ModelConfig& base, const CostInput& input, const std::vector<StageTag>& splits,
                            const std::vector<double>& alphas);

// Tab-separated tables: `layer kind params flops` and `split alpha gflops params`.
void write_cost_table(std::ostream& os, const CostReport& report);
void write_sweep_table(std::ostream& os, const std::vector<SweepRow>& rows);

} // namespace akn
