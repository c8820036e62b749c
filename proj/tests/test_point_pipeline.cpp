#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "akn/grad_check.hpp"
#include "akn/point_pipeline.hpp"
#include "support/oracles.hpp"

#include <set>
#include <sstream>

using namespace akn;
using akn::testing::brute_topn;
using akn::testing::random_tensor;

namespace {

PointSet make_points(std::vector<PointCoord> coords, std::size_t t, std::size_t h, std::size_t w)
{
    PointSet ps;
    ps.frames = t;
    ps.height = h;
    ps.width = w;
    for (std::size_t k = 0; k < coords.size(); ++k) {
        ps.positions.push_back((coords[k].t * h + coords[k].y) * w + coords[k].x);
        ps.scores.push_back(static_cast<double>(k));
    }
    ps.coords = std::move(coords);
    return ps;
}

} // namespace

TEST_CASE("point count rounds half up and stays positive")
{
    CHECK(point_count(0.3, 512) == 154);
    CHECK(point_count(0.5, 3) == 2);
    CHECK(point_count(0.1, 5) == 1);
    CHECK(point_count(0.01, 4) == 1);
    CHECK(point_count(1.0, 17) == 17);
    CHECK_THROWS_AS(point_count(0.0, 10), std::invalid_argument);
    CHECK_THROWS_AS(point_count(-0.2, 10), std::invalid_argument);
    CHECK_THROWS_AS(point_count(1.5, 10), std::invalid_argument);
}

TEST_CASE("top-N on the 2x2 example")
{
    Tensor<double> h({1, 2, 2}, std::vector<double>{0.9, 0.1, 0.2, 0.8});
    const auto ps = select_topn(h, 0.5);
    REQUIRE(ps.size() == 2);
    CHECK(ps.coords[0] == PointCoord{0, 0, 0});
    CHECK(ps.coords[1] == PointCoord{1, 1, 0});
    CHECK(ps.scores[0] == 0.9);
    CHECK_THROWS_AS(select_topn(h, 0.0), std::invalid_argument);
}

TEST_CASE("alpha = 1 selects every position")
{
    std::mt19937_64 rng(1);
    const auto h = random_tensor({3, 4, 5}, rng, 0, 1);
    const auto ps = select_topn(h, 1.0);
    CHECK(ps.size() == 60);
    std::set<std::size_t> all(ps.positions.begin(), ps.positions.end());
    CHECK(all.size() == 60);
}

TEST_CASE("top-N matches the full-sort oracle and is optimal")
{
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<std::size_t> td(1, 8), sd(1, 14);
    for (int trial = 0; trial < 200; ++trial) {
        auto h = random_tensor({td(rng), sd(rng), sd(rng)}, rng, 0, 1);
        // Quantize some trials to force ties.
        if (trial % 3 == 0)
            for (auto& v : h.data())
                v = std::round(v * 4) / 4;
        for (double alpha : {0.1, 0.3, 0.5}) {
            const auto ps = select_topn(h, alpha);
            const auto want = brute_topn(h, alpha);
            REQUIRE(ps.positions == want);
            CHECK(ps.size() == point_count(alpha, h.size()));
            std::set<std::size_t> chosen(ps.positions.begin(), ps.positions.end());
            double lo = 2, hi = -1;
            for (std::size_t i = 0; i < h.size(); ++i)
                (chosen.count(i) ? lo : hi) = chosen.count(i) ? std::min(lo, h[i]) : std::max(hi, h[i]);
            CHECK(lo >= hi);
        }
    }
}

TEST_CASE("gathered features follow the selected positions")
{
    std::mt19937_64 rng(3);
    const auto h = random_tensor({2, 3, 3}, rng, 0, 1);
    const auto x = random_tensor({5, 2, 3, 3}, rng);
    const auto ps = select_topn(h, x, 0.4);
    REQUIRE(ps.features.dims() == Dims{ps.size(), 5});
    for (std::size_t k = 0; k < ps.size(); ++k) {
        const auto& c = ps.coords[k];
        CHECK(ps.positions[k] == (c.t * 3 + c.y) * 3 + c.x);
        for (std::size_t ch = 0; ch < 5; ++ch)
            CHECK(ps.features.at(k, ch) == x.at(ch, c.t, c.y, c.x));
    }
    CHECK_THROWS_AS(select_topn(h, random_tensor({5, 2, 3, 4}, rng), 0.4), ShapeError);
}

TEST_CASE("ranking example with tau = 10")
{
    auto ps = make_points({{1, 1, 0}, {0, 0, 1}, {3, 3, 0}}, 2, 4, 4);
    const auto r = rank_points(ps, {10.0});
    REQUIRE(r.size() == 3);
    CHECK(r.coords[0] == PointCoord{0, 0, 1});
    CHECK(r.coords[1] == PointCoord{3, 3, 0});
    CHECK(r.coords[2] == PointCoord{1, 1, 0});
    CHECK(r.ordered);

    auto single = rank_points(make_points({{2, 1, 0}}, 1, 4, 4), {});
    CHECK(single.coords[0] == PointCoord{2, 1, 0});
    CHECK_THROWS_AS(rank_points(ps, {0.5}), std::invalid_argument);
    CHECK(effective_tau({}, 5, 7) == 12.0);
}

TEST_CASE("ranking is a permutation with non-increasing keys")
{
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const auto h = random_tensor({4, 6, 5}, rng, 0, 1);
        const auto x = random_tensor({3, 4, 6, 5}, rng);
        const auto ps = select_topn(h, x, 0.3);
        const double tau = trial % 2 ? 2.5 : 0.0;
        const auto r = rank_points(ps, {tau});
        const double eff = effective_tau({tau}, 6, 5);
        std::multiset<std::size_t> a(ps.positions.begin(), ps.positions.end()), b(r.positions.begin(), r.positions.end());
        CHECK(a == b);
        for (std::size_t k = 0; k < r.size(); ++k) {
            if (k > 0)
                CHECK(ranking_key(r.coords[k - 1], eff) >= ranking_key(r.coords[k], eff));
            if (k > 0 && tau == 0.0)
                CHECK(r.coords[k - 1].t >= r.coords[k].t);
            const auto& c = r.coords[k];
            for (std::size_t ch = 0; ch < 3; ++ch)
                CHECK(r.features.at(k, ch) == x.at(ch, c.t, c.y, c.x));
        }
    }
}

TEST_CASE("coordinate normalization")
{
    auto pair = normalize_coords({{0, 0, 0}, {2, 0, 0}});
    CHECK(pair.points[0] == std::array<double, 3>{-1, 0, 0});
    CHECK(pair.points[1] == std::array<double, 3>{1, 0, 0});
    auto one = normalize_coords({{3, 4, 1}});
    CHECK(one.points[0] == std::array<double, 3>{0, 0, 0});
    auto same = normalize_coords({{3, 4, 1}, {3, 4, 1}});
    CHECK(same.points[1] == std::array<double, 3>{0, 0, 0});
    CHECK_THROWS(normalize_coords({}));

    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::uint32_t> u(0, 13);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<PointCoord> pts(2 + trial % 30);
        for (auto& p : pts)
            p = {u(rng), u(rng), u(rng) % 8};
        pts.back().x = pts.front().x + 1;
        const auto n = normalize_coords(pts);
        std::array<double, 3> mean{};
        double norm = 0;
        for (const auto& p : n.points) {
            for (int a = 0; a < 3; ++a)
                mean[a] += p[a] / static_cast<double>(pts.size());
            norm = std::max(norm, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
        }
        for (double m : mean)
            CHECK(std::abs(m) < 1e-6);
        CHECK(std::abs(norm - 1.0) < 1e-6);
    }
}

TEST_CASE("transform network starts at identity")
{
    std::mt19937_64 rng(6);
    Parameters<double> p;
    init_transform_net<double>({5}, p, rng);
    CHECK(p.at("tnet.conv1.weight").dims() == Dims{64, 8, 1});
    CHECK(p.at("tnet.fc3.weight").dims() == Dims{64, 64});
    Graph<double> g(&p);
    const auto u = random_tensor({8, 11}, rng);
    Var uv = g.constant(u);
    Var a = transform_net(g, uv);
    const auto& av = g.value(a);
    REQUIRE(av.dims() == Dims{8, 8});
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j)
            CHECK(av.at(i, j) == (i == j ? 1.0 : 0.0));
    const auto& out = g.value(apply_transform(g, uv, a, 5));
    CHECK(out.dims() == Dims{5, 11});
    for (std::size_t i = 0; i < 55; ++i)
        CHECK(out[i] == u[i]);

    // Gradient of sum(A) with respect to the transform weights.
    std::normal_distribution<double> n(0.0, 0.05);
    for (auto& v : p.at("tnet.fc3.weight").data())
        v = n(rng);
    p.add("u", u);
    auto report = grad_check(p, [](Graph<double>& gg) { return ops::sum(gg, transform_net(gg, gg.param("u"))); });
    CHECK(report.passed(1e-4));
}

TEST_CASE("apply_transform against a naive product")
{
    std::mt19937_64 rng(7);
    Graph<double> g;
    const auto u = random_tensor({6, 9}, rng);
    const auto two = [] {
        Tensor<double> t({6, 6});
        for (std::size_t i = 0; i < 6; ++i)
            t.at(i, i) = 2.0;
        return t;
    }();
    const auto& doubled = g.value(apply_transform(g, g.constant(u), g.constant(two), 3));
    for (std::size_t i = 0; i < 27; ++i)
        CHECK(doubled[i] == 2.0 * u[i]);

    for (int trial = 0; trial < 10; ++trial) {
        const auto a = random_tensor({6, 6}, rng);
        const auto& out = g.value(apply_transform(g, g.constant(u), g.constant(a), 3));
        // Row-major P^ = U^T A (N x 6), keep the first 3 columns; stored transposed.
        for (std::size_t k = 0; k < 9; ++k)
            for (std::size_t c = 0; c < 3; ++c) {
                double s = 0;
                for (std::size_t j = 0; j < 6; ++j)
                    s += u.at(j, k) * a.at(j, c);
                CHECK(out.at(c, k) == doctest::Approx(s).epsilon(1e-12));
            }
    }
}

TEST_CASE("augmented point matrix and dump format")
{
    Graph<double> g;
    const auto coords = normalize_coords({{0, 0, 0}, {2, 0, 0}});
    Var f = g.constant(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3, 4}));
    const auto& m = g.value(augment_with_coords(g, f, coords));
    CHECK(m.dims() == Dims{5, 2});
    CHECK(m.at(1, 1) == 4.0);
    CHECK(m.at(2, 0) == -1.0);
    CHECK(m.at(2, 1) == 1.0);

    Tensor<double> h({2, 1, 2}, std::vector<double>{0.25, 0.5, 1.0, 0.75});
    std::ostringstream os;
    write_point_dump(os, rank_points(select_topn(h, 0.5), {}));
    CHECK(os.str() == "1,0,1,0.75\n1,0,0,1\n");
}
