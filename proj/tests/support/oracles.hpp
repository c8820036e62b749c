#pragma once

// Naive reference implementations used only by the tests.

#include "akn/point_classifier.hpp"
#include "akn/point_pipeline.hpp"
#include "akn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace akn::testing {

inline Tensor<double> random_tensor(Dims dims, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<double> t(std::move(dims));
    for (auto& v : t.data())
        v = u(rng);
    return t;
}

// x: C x T x H x W, w: O x C x k x k -> O x T x Ho x Wo.
inline Tensor<double> naive_conv2d(const Tensor<double>& x, const Tensor<double>& w, std::size_t stride,
                                   std::size_t pad)
{
    const std::size_t c = x.dim(0), t = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t ho = (h + 2 * pad - kh) / stride + 1, wo = (wd + 2 * pad - kw) / stride + 1;
    Tensor<double> y({o, t, ho, wo});
    for (std::size_t oc = 0; oc < o; ++oc)
        for (std::size_t f = 0; f < t; ++f)
            for (std::size_t i = 0; i < ho; ++i)
                for (std::size_t j = 0; j < wo; ++j) {
                    double s = 0;
                    for (std::size_t ic = 0; ic < c; ++ic)
                        for (std::size_t a = 0; a < kh; ++a)
                            for (std::size_t b = 0; b < kw; ++b) {
                                const long yy = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                                const long xx = static_cast<long>(j * stride + b) - static_cast<long>(pad);
                                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(wd))
                                    continue;
                                s += w.at(oc, ic, a, b) * x.at(ic, f, static_cast<std::size_t>(yy),
                                                                static_cast<std::size_t>(xx));
                            }
                    y.at(oc, f, i, j) = s;
                }
    return y;
}

// x: C x L, w: O x C x k -> O x Lo.
inline Tensor<double> naive_conv1d(const Tensor<double>& x, const Tensor<double>& w, std::size_t stride,
                                   std::size_t pad)
{
    const std::size_t c = x.dim(0), l = x.dim(1), o = w.dim(0), k = w.dim(2);
    const std::size_t lo = (l + 2 * pad - k) / stride + 1;
    Tensor<double> y({o, lo});
    for (std::size_t oc = 0; oc < o; ++oc)
        for (std::size_t i = 0; i < lo; ++i) {
            double s = 0;
            for (std::size_t ic = 0; ic < c; ++ic)
                for (std::size_t a = 0; a < k; ++a) {
                    const long p = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                    if (p >= 0 && p < static_cast<long>(l))
                        s += w.at(oc, ic, a) * x.at(ic, static_cast<std::size_t>(p));
                }
            y.at(oc, i) = s;
        }
    return y;
}

// Full sort of every position by (score desc, flat index asc), first N kept.
template <typename T>
std::vector<std::size_t> brute_topn(const Tensor<T>& heat, double alpha)
{
    std::vector<std::size_t> idx(heat.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (heat[a] != heat[b])
            return heat[a] > heat[b];
        return a < b;
    });
    const double want = std::floor(alpha * static_cast<double>(heat.size()) + 0.5);
    const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(want));
    idx.resize(std::min(n, heat.size()));
    return idx;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b)
{
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Width-constant equivalence of one compacted kernel: a random C x 1 x H x W
// input constant along the summed axis, conv2d with w against conv1d with the
// compacted kernel on the profile. Returns the max abs error over interior
// outputs (those whose receptive field stays inside the summed axis).
inline double compaction_pair_error(std::mt19937_64& rng, CompactAxis axis, std::size_t cin, std::size_t cout,
                                    std::size_t len, std::size_t across)
{
    const auto w = random_tensor({cout, cin, 3, 3}, rng);
    const auto profile = random_tensor({cin, len}, rng);
    const bool width = axis == CompactAxis::width;
    Tensor<double> x(width ? Dims{cin, 1, len, across} : Dims{cin, 1, across, len});
    for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t i = 0; i < len; ++i)
            for (std::size_t j = 0; j < across; ++j) {
                if (width)
                    x.at(c, 0, i, j) = profile.at(c, i);
                else
                    x.at(c, 0, j, i) = profile.at(c, i);
            }
    const auto y2 = naive_conv2d(x, w, 1, 1);
    const auto y1 = naive_conv1d(profile, compact_kernel(w, axis), 1, 1);
    double err = 0;
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t i = 0; i < len; ++i)
            for (std::size_t j = 1; j + 1 < across; ++j) {
                const double v = width ? y2.at(o, 0, i, j) : y2.at(o, 0, j, i);
                err = std::max(err, std::abs(v - y1.at(o, i)));
            }
    return err;
}

} // namespace akn::testing
