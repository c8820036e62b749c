#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "akn/grad_check.hpp"
#include "akn/point_classifier.hpp"
#include "support/oracles.hpp"

using namespace akn;
using akn::testing::naive_conv1d;
using akn::testing::random_tensor;

namespace {

Tensor<double> affine_oracle(Tensor<double> x, const Tensor<double>& scale, const Tensor<double>& bias)
{
    const std::size_t c = x.dim(0), n = x.size() / c;
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t k = 0; k < n; ++k)
            x[i * n + k] = x[i * n + k] * scale[i] + bias[i];
    return x;
}

Tensor<double> relu_oracle(Tensor<double> x)
{
    for (auto& v : x.data())
        v = std::max(v, 0.0);
    return x;
}

// Replays one compacted residual block with the naive 1D convolution.
Tensor<double> block_oracle(const PointLayerSpec& l, const Parameters<double>& p, const Tensor<double>& x)
{
    auto aff = [&](const Tensor<double>& v, const std::string& n) {
        return affine_oracle(v, p.at(l.name + "." + n + ".scale.1d"), p.at(l.name + "." + n + ".bias.1d"));
    };
    auto r = relu_oracle(aff(naive_conv1d(x, p.at(l.name + ".conv1.weight.1d"), l.stride, l.padding), "norm1"));
    r = aff(naive_conv1d(r, p.at(l.name + ".conv2.weight.1d"), 1, l.padding), "norm2");
    Tensor<double> s = x;
    if (l.has_projection())
        s = aff(naive_conv1d(x, p.at(l.name + ".down.weight.1d"), l.stride, 0), "down_norm");
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] += s[i];
    return relu_oracle(r);
}

void perturb_affines(Parameters<double>& p, std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 0.2);
    for (const auto& name : p.names())
        if (name.find("norm") != std::string::npos)
            for (auto& v : p.at(name).data())
                v += n(rng);
}

} // namespace

TEST_CASE("compact_kernel sums the width axis")
{
    Tensor<double> w({1, 1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
    const auto c = compact_kernel(w);
    CHECK(c.dims() == Dims{1, 1, 3});
    CHECK(c == Tensor<double>({1, 1, 3}, std::vector<double>{6, 15, 24}));
    CHECK(compact_kernel(w, CompactAxis::height) == Tensor<double>({1, 1, 3}, std::vector<double>{12, 15, 18}));
    const auto zeros = compact_kernel(Tensor<double>({2, 3, 3, 3}));
    for (double v : zeros.data())
        CHECK(v == 0.0);
    CHECK(compact_kernel(Tensor<double>({4, 2, 1, 1}, 1.5)).dims() == Dims{4, 2, 1});
}

TEST_CASE("width-constant inputs: conv2d equals conv1d of the compacted kernel")
{
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        CHECK(testing::compaction_pair_error(rng, CompactAxis::width, 3, 4, 7, 6) <= 1e-6);
        CHECK(testing::compaction_pair_error(rng, CompactAxis::height, 2, 3, 5, 5) <= 1e-6);
    }
}

TEST_CASE("compact_network preserves topology")
{
    const auto net = build_backbone({});
    const auto split = split_at(net, StageTag::s3);
    const auto q = compact_network(split.back);
    REQUIRE(q.size() == split.back.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        CHECK(q[i].kind == PointLayerKind::residual_block);
        CHECK(q[i].name == split.back[i].name);
        CHECK(q[i].in_channels == split.back[i].in_channels);
        CHECK(q[i].out_channels == split.back[i].out_channels);
        CHECK(q[i].kernel == split.back[i].kernel);
        CHECK(q[i].stride == split.back[i].stride * split.back[i].stride);
        CHECK(q[i].has_projection() == split.back[i].has_projection());
    }
    CompactOptions linear;
    linear.stride = PointStride::linear;
    CHECK(compact_network(split.back, linear)[0].stride == 2);

    std::vector<LayerSpec> shifted = split.back;
    shifted.insert(shifted.begin(), LayerSpec{LayerKind::temporal_shift, "tsm", StageTag::s4, 64, 64, 1, 1, 0, 0.125});
    CHECK(compact_network(shifted).size() == q.size());
    CompactOptions strict;
    strict.drop_temporal_shift = false;
    CHECK_THROWS_WITH_AS(compact_network(shifted, strict), doctest::Contains("tsm"), std::invalid_argument);

    CompactOptions coords;
    coords.extra_input_channels = 3;
    const auto qc = compact_network(split.back, coords);
    CHECK(qc[0].in_extra == 3);
    CHECK(qc[1].in_extra == 0);
}

TEST_CASE("compacted parameter counts shrink by the kernel size")
{
    const auto net = build_backbone({});
    std::mt19937_64 rng(2);
    Parameters<double> p;
    init_backbone(net, p, rng);
    for (StageTag s : {StageTag::s2, StageTag::s3, StageTag::s4}) {
        const auto split = split_at(net, s);
        Parameters<double> q;
        compact_parameters<double>(split.back, p, q);
        std::size_t conv2d = 0, conv1d = 0, other2d = 0, other1d = 0;
        for (const auto& name : q.names()) {
            const std::string src = name.substr(0, name.size() - 3);
            const auto& w2 = p.at(src);
            if (w2.rank() == 4) {
                CHECK(q.at(name).size() * w2.dim(3) == w2.size());
                conv2d += w2.dim(2) == 3 ? w2.size() : 0;
                conv1d += w2.dim(2) == 3 ? q.at(name).size() : 0;
            } else {
                CHECK(q.at(name) == w2);
                other2d += w2.size();
                other1d += q.at(name).size();
            }
        }
        CHECK(conv2d == 3 * conv1d);
        CHECK(other2d == other1d);
    }
}

TEST_CASE("point_forward equals a layer-by-layer replay")
{
    const auto net = build_backbone({});
    std::mt19937_64 rng(3);
    Parameters<double> p;
    init_backbone(net, p, rng);
    perturb_affines(p, rng);
    for (StageTag s : {StageTag::s2, StageTag::s3}) {
        const auto split = split_at(net, s);
        Parameters<double> q;
        compact_parameters<double>(split.back, p, q);
        const auto layers = compact_network(split.back);
        const auto x = random_tensor({split.split_channels(), 37}, rng);
        Graph<double> g(&q);
        const auto& got = g.value(point_forward<double>(g, layers, g.constant(x)));
        Tensor<double> want = x;
        for (const auto& l : layers)
            want = block_oracle(l, q, want);
        REQUIRE(got.dims() == want.dims());
        CHECK(testing::max_abs_diff(got, want) < 1e-9);
    }
}

TEST_CASE("point_forward output shapes")
{
    BackboneConfig cfg;
    cfg.stages = {{StageTag::stem, 8, 1}, {StageTag::s2, 8, 1}, {StageTag::s3, 12, 1}, {StageTag::s4, 16, 1}};
    const auto net = build_backbone(cfg);
    const auto split = split_at(net, StageTag::s2);
    std::mt19937_64 rng(4);
    Parameters<double> p;
    init_backbone(net, p, rng);
    Parameters<double> q;
    compact_parameters<double>(split.back, p, q);
    const auto layers = compact_network(split.back);
    Graph<double> g(&q);
    CHECK(g.value(point_forward<double>(g, layers, g.constant(random_tensor({8, 1}, rng)))).dims() == Dims{16, 1});
    CHECK(g.value(point_forward<double>(g, layers, g.constant(random_tensor({8, 10}, rng)))).dims() == Dims{16, 10});
    CHECK(g.value(point_forward<double>(g, layers, g.constant(random_tensor({8, 20}, rng)))).dims() == Dims{16, 20});
}

TEST_CASE("fused prediction")
{
    std::mt19937_64 rng(5);
    Parameters<double> p;
    init_fuse_head<double>(3, 2, 5, true, p, rng);
    CHECK(p.at("fc.weight").dims() == Dims{5, 5});
    p.at("fc.bias") = random_tensor({5}, rng);
    Graph<double> g(&p);
    const auto& zero = g.value(fuse_predict(g, g.constant(Tensor<double>({3, 2, 2, 2})),
                                            g.constant(Tensor<double>({2, 4}))));
    CHECK(zero == p.at("fc.bias"));

    // Identity f_c returns [GAP(X); mean(e_f)].
    Tensor<double> eye({5, 5});
    for (std::size_t i = 0; i < 5; ++i)
        eye.at(i, i) = 1.0;
    p.at("fc.weight") = eye;
    p.at("fc.bias") = Tensor<double>({5});
    const auto x = random_tensor({3, 2, 2, 2}, rng), e = random_tensor({2, 4}, rng);
    Graph<double> h(&p);
    const auto& out = h.value(fuse_predict(h, h.constant(x), h.constant(e)));
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0;
        for (std::size_t i = 0; i < 8; ++i)
            s += x[c * 8 + i];
        CHECK(out[c] == doctest::Approx(s / 8));
    }
    for (std::size_t c = 0; c < 2; ++c)
        CHECK(out[3 + c] == doctest::Approx((e[c * 4] + e[c * 4 + 1] + e[c * 4 + 2] + e[c * 4 + 3]) / 4));

    // Gradient through both branches.
    Parameters<double> gp;
    init_fuse_head<double>(3, 2, 4, true, gp, rng);
    gp.add("x", x);
    gp.add("e", e);
    auto report = grad_check(gp, [](Graph<double>& gg) {
        return ops::cross_entropy(gg, fuse_predict(gg, gg.param("x"), gg.param("e")), 1);
    });
    CHECK(report.passed(1e-4));

    Parameters<double> only;
    init_fuse_head<double>(3, 2, 4, false, only, rng);
    CHECK(only.at("fc.weight").dims() == Dims{4, 2});
}
