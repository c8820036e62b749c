#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "akn/grad_check.hpp"
#include "akn/keypoint_head.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <limits>

using namespace akn;
using akn::testing::random_tensor;

TEST_CASE("channel squeeze")
{
    Graph<double> g;
    Var c = g.constant(Tensor<double>({2, 3, 2, 2}, 0.75));
    const auto& z = g.value(channel_squeeze(g, c));
    CHECK(z.dims() == Dims{3, 2});
    for (double v : z.data())
        CHECK(v == 0.75);

    Tensor<double> one({1, 1, 3, 4});
    one[0] = 12.0;  // value H*W at (0,0)
    CHECK(g.value(channel_squeeze(g, g.constant(one))).item() == doctest::Approx(1.0));

    std::mt19937_64 rng(1);
    const auto x = random_tensor({3, 2, 4, 5}, rng);
    const auto& r = g.value(channel_squeeze(g, g.constant(x)));
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t c2 = 0; c2 < 3; ++c2) {
            double s = 0;
            for (std::size_t i = 0; i < 20; ++i)
                s += x[(c2 * 2 + t) * 20 + i];
            CHECK(r.at(t, c2) == doctest::Approx(s / 20.0).epsilon(1e-13));
        }
}

TEST_CASE("channel weights are per-frame simplex vectors")
{
    Graph<double> g;
    std::mt19937_64 rng(2);
    Var z = g.constant(random_tensor({4, 8}, rng));
    Var zero1 = g.constant(Tensor<double>({2, 8})), zero2 = g.constant(Tensor<double>({8, 2}));
    for (double v : g.value(channel_weights(g, z, zero1, zero2)).data())
        CHECK(v == doctest::Approx(1.0 / 8.0));

    for (int trial = 0; trial < 20; ++trial) {
        auto w1 = random_tensor({2, 8}, rng, -3, 3), w2 = random_tensor({8, 2}, rng, -3, 3);
        const auto& w = g.value(channel_weights(g, z, g.constant(w1), g.constant(w2)));
        for (std::size_t t = 0; t < 4; ++t) {
            double s = 0;
            for (std::size_t c = 0; c < 8; ++c) {
                CHECK(w.at(t, c) >= 0.0);
                s += w.at(t, c);
            }
            CHECK(std::abs(s - 1.0) < 1e-6);
        }
        // Oracle: softmax(W2 relu(W1 z)) per frame.
        const auto& zv = g.value(z);
        for (std::size_t t = 0; t < 4; ++t) {
            double hidden[2], logits[8], total = 0;
            for (std::size_t j = 0; j < 2; ++j) {
                hidden[j] = 0;
                for (std::size_t c = 0; c < 8; ++c)
                    hidden[j] += w1.at(j, c) * zv.at(t, c);
                hidden[j] = std::max(hidden[j], 0.0);
            }
            for (std::size_t c = 0; c < 8; ++c) {
                logits[c] = w2.at(c, 0) * hidden[0] + w2.at(c, 1) * hidden[1];
                total += std::exp(logits[c]);
            }
            for (std::size_t c = 0; c < 8; ++c)
                CHECK(w.at(t, c) == doctest::Approx(std::exp(logits[c]) / total).epsilon(1e-12));
        }
    }
    // C = 2 with equal logits.
    Graph<double> h;
    Var two = h.constant(Tensor<double>({1, 2}, 1.0));
    const auto& e = h.value(channel_weights(h, two, h.constant(Tensor<double>({1, 2}, 0.3)),
                                            h.constant(Tensor<double>({2, 1}, 0.7))));
    CHECK(e[0] == doctest::Approx(0.5));
    CHECK(e[1] == doctest::Approx(0.5));
}

TEST_CASE("heatmap")
{
    std::mt19937_64 rng(3);
    Graph<double> g;
    const auto x = random_tensor({4, 2, 3, 3}, rng);
    Var xv = g.constant(x);
    Tensor<double> onehot({2, 4});
    onehot.at(0, 2) = 1.0;
    onehot.at(1, 2) = 1.0;
    auto hm = heatmap(g, xv, g.constant(onehot));
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t k = 0; k < 9; ++k)
            CHECK(g.value(hm.raw)[t * 9 + k] == x[(2 * 2 + t) * 9 + k]);
    const auto& h = g.value(hm.normalized);
    CHECK(*std::min_element(h.data().begin(), h.data().end()) == 0.0);
    CHECK(*std::max_element(h.data().begin(), h.data().end()) == 1.0);

    // Normalization preserves the order of the raw scores.
    const auto& raw = g.value(hm.raw);
    for (std::size_t a = 0; a < raw.size(); ++a)
        for (std::size_t b = 0; b < raw.size(); ++b)
            if (raw[a] < raw[b])
                CHECK(h[a] < h[b]);

    auto flat = heatmap(g, g.constant(Tensor<double>({4, 2, 3, 3}, 0.3)), g.constant(onehot));
    for (double v : g.value(flat.normalized).data())
        CHECK(v == 0.5);

    Tensor<double> bad = x;
    bad[5] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(heatmap(g, g.constant(bad), g.constant(onehot)), std::domain_error);
    bad[5] = std::nan("");
    CHECK_THROWS_AS(heatmap(g, g.constant(bad), g.constant(onehot)), std::domain_error);
}

TEST_CASE("attention reweighting")
{
    std::mt19937_64 rng(4);
    Graph<double> g;
    const auto x = random_tensor({3, 2, 2, 2}, rng);
    Var xv = g.constant(x);
    CHECK(g.value(attention_reweight(g, xv, g.constant(Tensor<double>({2, 2, 2}, 1.0)))) == x);
    for (double v : g.value(attention_reweight(g, xv, g.constant(Tensor<double>({2, 2, 2}, 0.0)))).data())
        CHECK(v == 0.0);

    Parameters<double> p;
    p.add("x", x);
    auto h = random_tensor({2, 2, 2}, rng, 0, 1);
    auto report = grad_check(p, [&](Graph<double>& gg) {
        return ops::sum(gg, attention_reweight(gg, gg.param("x"), gg.constant(h)));
    });
    CHECK(report.passed(1e-4));
}

TEST_CASE("energy regularizer values")
{
    Graph<double> g;
    CHECK(g.value(energy_reg(g, g.constant(Tensor<double>({2, 3, 3}, 0.5)))).item() == 1.0);
    Tensor<double> bin({2, 3, 3});
    for (std::size_t i = 0; i < bin.size(); i += 2)
        bin[i] = 1.0;
    CHECK(g.value(energy_reg(g, g.constant(bin))).item() == 0.0);
    CHECK(g.value(energy_reg(g, g.constant(Tensor<double>({1, 2, 2}, 0.25)))).item() == doctest::Approx(0.75));

    // d r_e / dH = (4 - 8H) / (T H W)
    std::mt19937_64 rng(5);
    Parameters<double> p;
    p.add("h", random_tensor({2, 3, 3}, rng, 0, 1));
    Graph<double> gg(&p);
    auto grads = gg.backward(energy_reg(gg, gg.param("h")));
    for (std::size_t i = 0; i < 18; ++i)
        CHECK((*grads[0])[i] == doctest::Approx((4.0 - 8.0 * p.at("h")[i]) / 18.0).epsilon(1e-12));
    for (int trial = 0; trial < 10; ++trial) {
        const double r = gg.value(energy_reg(gg, gg.constant(random_tensor({2, 3, 3}, rng, 0, 1)))).item();
        CHECK(r >= 0.0);
        CHECK(r <= 1.0);
    }
}

TEST_CASE("keypoint head parameters and aux prediction")
{
    std::mt19937_64 rng(6);
    Parameters<double> p;
    CHECK_THROWS_AS(init_keypoint_head<double>({64, 5, 4}, p, rng), std::invalid_argument);
    init_keypoint_head<double>({64, 4, 4}, p, rng);
    CHECK(p.at("kp.se.w1").dims() == Dims{16, 64});
    CHECK(p.at("kp.se.w2").dims() == Dims{64, 16});
    Graph<double> g(&p);
    Var x = g.constant(random_tensor({64, 8, 8, 8}, rng, 0, 1));
    auto w = channel_weights(g, channel_squeeze(g, x), g.param("kp.se.w1"), g.param("kp.se.w2"));
    auto hm = heatmap(g, x, w);
    CHECK(g.value(hm.normalized).dims() == Dims{8, 8, 8});
    Var aux = aux_predict(g, attention_reweight(g, x, hm.normalized));
    CHECK(g.value(aux).dims() == Dims{4});
    CHECK(g.value(aux).all_finite());
}
