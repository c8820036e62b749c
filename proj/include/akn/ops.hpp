#pragma once

// Forward kernels (plain tensor functions) and their differentiable graph
// counterparts in akn::ops. Convolutions lower to im2col + GEMM.

#include "akn/graph.hpp"
#include "akn/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace akn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

namespace detail {

// Geometry of a (possibly frame-batched) 2D cross-correlation. A 1D
// convolution is the special case H = kh = 1.
struct ConvGeometry {
    std::size_t channels = 0, frames = 1, height = 1, width = 1;
    std::size_t kh = 1, kw = 1, sh = 1, sw = 1, ph = 0, pw = 0;
    std::size_t out_h = 1, out_w = 1;

    std::size_t rows() const { return channels * kh * kw; }
    std::size_t cols() const { return frames * out_h * out_w; }
};

inline std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                               const char* axis)
{
    if (stride == 0)
        throw std::invalid_argument(std::string("convolution stride along ") + axis + " must be positive");
    if (in + 2 * pad < k)
        throw ShapeError(std::string("convolution ") + axis + " extent " + std::to_string(in) +
                         " with padding " + std::to_string(pad) + " is smaller than kernel " +
                         std::to_string(k));
    return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col)
{
    const std::size_t plane = g.height * g.width;
    const std::size_t out_plane = g.out_h * g.out_w;
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t i = 0; i < g.kh; ++i)
            for (std::size_t j = 0; j < g.kw; ++j) {
                T* row = col + ((c * g.kh + i) * g.kw + j) * g.cols();
                for (std::size_t f = 0; f < g.frames; ++f) {
                    const T* src = x + (c * g.frames + f) * plane;
                    T* dst = row + f * out_plane;
                    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                        const long ih = static_cast<long>(oh * g.sh + i) - static_cast<long>(g.ph);
                        T* drow = dst + oh * g.out_w;
                        if (ih < 0 || ih >= static_cast<long>(g.height)) {
                            std::fill(drow, drow + g.out_w, T{0});
                            continue;
                        }
                        const T* srow = src + ih * g.width;
                        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                            const long iw = static_cast<long>(ow * g.sw + j) - static_cast<long>(g.pw);
                            drow[ow] = (iw < 0 || iw >= static_cast<long>(g.width)) ? T{0} : srow[iw];
                        }
                    }
                }
            }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* x)
{
    const std::size_t plane = g.height * g.width;
    const std::size_t out_plane = g.out_h * g.out_w;
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t i = 0; i < g.kh; ++i)
            for (std::size_t j = 0; j < g.kw; ++j) {
                const T* row = col + ((c * g.kh + i) * g.kw + j) * g.cols();
                for (std::size_t f = 0; f < g.frames; ++f) {
                    T* dst = x + (c * g.frames + f) * plane;
                    const T* src = row + f * out_plane;
                    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                        const long ih = static_cast<long>(oh * g.sh + i) - static_cast<long>(g.ph);
                        if (ih < 0 || ih >= static_cast<long>(g.height))
                            continue;
                        T* drow = dst + ih * g.width;
                        const T* srow = src + oh * g.out_w;
                        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                            const long iw = static_cast<long>(ow * g.sw + j) - static_cast<long>(g.pw);
                            if (iw >= 0 && iw < static_cast<long>(g.width))
                                drow[iw] += srow[ow];
                        }
                    }
                }
            }
}

template <typename T>
ConvGeometry conv2d_geometry(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t pad)
{
    if (x.rank() != 3 && x.rank() != 4)
        throw ShapeError("conv2d input: expected rank 3 (CxHxW) or 4 (CxTxHxW), got " + dims_to_string(x.dims()));
    expect_rank(w, 4, "conv2d weight");
    if (w.dim(2) != w.dim(3))
        throw ShapeError("conv2d weight: kernel height " + std::to_string(w.dim(2)) + " differs from width " +
                         std::to_string(w.dim(3)));
    if (w.dim(2) % 2 == 0)
        throw std::invalid_argument("conv2d kernel size must be odd, got " + std::to_string(w.dim(2)));
    if (w.dim(1) != x.dim(0))
        throw ShapeError("conv2d input channels: input has " + std::to_string(x.dim(0)) + ", weight expects " +
                         std::to_string(w.dim(1)));
    ConvGeometry g;
    g.channels = x.dim(0);
    g.frames = x.rank() == 4 ? x.dim(1) : 1;
    g.height = x.dim(x.rank() - 2);
    g.width = x.dim(x.rank() - 1);
    g.kh = g.kw = w.dim(2);
    g.sh = g.sw = stride;
    g.ph = g.pw = pad;
    g.out_h = conv_extent(g.height, g.kh, stride, pad, "height");
    g.out_w = conv_extent(g.width, g.kw, stride, pad, "width");
    return g;
}

template <typename T>
ConvGeometry conv1d_geometry(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t pad)
{
    expect_rank(x, 2, "conv1d input");
    expect_rank(w, 3, "conv1d weight");
    if (w.dim(2) % 2 == 0)
        throw std::invalid_argument("conv1d kernel size must be odd, got " + std::to_string(w.dim(2)));
    if (w.dim(1) != x.dim(0))
        throw ShapeError("conv1d input channels: input has " + std::to_string(x.dim(0)) + ", weight expects " +
                         std::to_string(w.dim(1)));
    ConvGeometry g;
    g.channels = x.dim(0);
    g.width = x.dim(1);
    g.kw = w.dim(2);
    g.sw = stride;
    g.pw = pad;
    g.out_w = conv_extent(g.width, g.kw, stride, pad, "length");
    return g;
}

template <typename T>
Tensor<T> conv_gemm(const Tensor<T>& x, const Tensor<T>& w, const ConvGeometry& g, Dims out_dims,
                    std::vector<T>* keep_col)
{
    const std::size_t cout = w.dim(0);
    std::vector<T> col(g.rows() * g.cols());
    im2col(x.ptr(), g, col.data());
    Tensor<T> out(std::move(out_dims));
    ConstMatrixMap<T> wm(w.ptr(), cout, g.rows());
    ConstMatrixMap<T> cm(col.data(), g.rows(), g.cols());
    MatrixMap<T> om(out.ptr(), cout, g.cols());
    om.noalias() = wm * cm;
    if (keep_col)
        *keep_col = std::move(col);
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Plain forward kernels

// Cross-correlation over CxHxW, or frame-wise over CxTxHxW.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride = 1, std::size_t pad = 0)
{
    const auto g = detail::conv2d_geometry(x, w, stride, pad);
    Dims out = x.rank() == 4 ? Dims{w.dim(0), g.frames, g.out_h, g.out_w} : Dims{w.dim(0), g.out_h, g.out_w};
    return detail::conv_gemm<T>(x, w, g, std::move(out), nullptr);
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride = 1, std::size_t pad = 0)
{
    const auto g = detail::conv1d_geometry(x, w, stride, pad);
    return detail::conv_gemm<T>(x, w, g, Dims{w.dim(0), g.out_w}, nullptr);
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b)
{
    expect_rank(x, 1, "dense input");
    expect_rank(w, 2, "dense weight");
    expect_rank(b, 1, "dense bias");
    expect_dim(w, 1, x.dim(0), "dense weight (input width)");
    expect_dim(b, 0, w.dim(0), "dense bias (output width)");
    Tensor<T> y = b;
    ConstMatrixMap<T> wm(w.ptr(), w.dim(0), w.dim(1));
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(x.ptr(), x.size());
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> yv(y.ptr(), y.size());
    yv.noalias() += wm * xv;
    return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x)
{
    Tensor<T> y = x;
    for (auto& v : y.data())
        v = std::max(v, T{0});
    return y;
}

// Softmax along the last axis.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x)
{
    Tensor<T> y = x;
    const std::size_t n = x.dim(x.rank() - 1);
    for (std::size_t r = 0; r < x.size() / n; ++r) {
        T* row = y.ptr() + r * n;
        const T mx = *std::max_element(row, row + n);
        T total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            row[i] = std::exp(row[i] - mx);
            total += row[i];
        }
        for (std::size_t i = 0; i < n; ++i)
            row[i] /= total;
    }
    return y;
}

// Mean over every axis but the first: Cx... -> [C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x)
{
    const std::size_t c = x.dim(0);
    const std::size_t inner = x.size() / c;
    Tensor<T> y({c});
    for (std::size_t i = 0; i < c; ++i) {
        T s = 0;
        for (std::size_t k = 0; k < inner; ++k)
            s += x[i * inner + k];
        y[i] = s / static_cast<T>(inner);
    }
    return y;
}

template <typename T>
Tensor<T> elementwise_mul(const Tensor<T>& a, const Tensor<T>& b)
{
    if (a.dims() != b.dims())
        throw ShapeError("elementwise_mul: " + dims_to_string(a.dims()) + " vs " + dims_to_string(b.dims()));
    Tensor<T> y = a;
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] *= b[i];
    return y;
}

// Concatenate along axis 0; trailing dims must agree.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts)
{
    if (parts.empty())
        throw std::invalid_argument("concat of zero tensors");
    Dims dims = parts.front().dims();
    std::size_t lead = 0;
    for (const auto& p : parts) {
        if (p.rank() != dims.size() || !std::equal(p.dims().begin() + 1, p.dims().end(), dims.begin() + 1))
            throw ShapeError("concat: trailing dims " + dims_to_string(p.dims()) + " do not match " +
                             dims_to_string(dims));
        lead += p.dim(0);
    }
    dims[0] = lead;
    std::vector<T> data;
    data.reserve(dims_product(dims));
    for (const auto& p : parts)
        data.insert(data.end(), p.data().begin(), p.data().end());
    return Tensor<T>(std::move(dims), std::move(data));
}

// Per-channel affine y_c = scale_c * x_c + bias_c (inference-mode batchnorm).
template <typename T>
Tensor<T> channel_affine(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& bias)
{
    const std::size_t c = x.dim(0);
    expect_rank(scale, 1, "affine scale");
    expect_dim(scale, 0, c, "affine scale");
    expect_dim(bias, 0, c, "affine bias");
    const std::size_t inner = x.size() / c;
    Tensor<T> y = x;
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t k = 0; k < inner; ++k)
            y[i * inner + k] = scale[i] * x[i * inner + k] + bias[i];
    return y;
}

// Batchnorm with frozen statistics, folded into a per-channel affine.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& mean, const Tensor<T>& var, const Tensor<T>& gamma,
                    const Tensor<T>& beta, T eps = T(1e-5))
{
    const std::size_t c = x.dim(0);
    Tensor<T> scale({c}), bias({c});
    for (std::size_t i = 0; i < c; ++i) {
        scale[i] = gamma[i] / std::sqrt(var[i] + eps);
        bias[i] = beta[i] - mean[i] * scale[i];
    }
    return channel_affine(x, scale, bias);
}

// TSM shift on CxTxHxW: the first floor(fraction*C) channels take frame t-1,
// the next floor(fraction*C) take frame t+1, zero-filled at the clip borders.
template <typename T>
Tensor<T> temporal_shift(const Tensor<T>& x, double fraction)
{
    expect_rank(x, 4, "temporal_shift input");
    if (fraction < 0.0 || fraction > 0.5)
        throw std::invalid_argument("temporal_shift fraction must lie in [0, 0.5]");
    const std::size_t c = x.dim(0), t = x.dim(1), plane = x.dim(2) * x.dim(3);
    const std::size_t fold = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(c)));
    Tensor<T> y(x.dims());
    for (std::size_t ch = 0; ch < c; ++ch) {
        const long offset = ch < fold ? -1 : (ch < 2 * fold ? 1 : 0);
        for (std::size_t f = 0; f < t; ++f) {
            const long src = static_cast<long>(f) + offset;
            if (src < 0 || src >= static_cast<long>(t))
                continue;
            std::copy_n(x.ptr() + (ch * t + src) * plane, plane, y.ptr() + (ch * t + f) * plane);
        }
    }
    return y;
}

// ---------------------------------------------------------------------------
// Differentiable graph operators

namespace ops {

template <typename T>
Var constant(Graph<T>& g, Tensor<T> value)
{
    return g.constant(std::move(value));
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b)
{
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    if (av.dims() != bv.dims())
        throw ShapeError("add: " + dims_to_string(av.dims()) + " vs " + dims_to_string(bv.dims()));
    Tensor<T> y = av;
    y += bv;
    return g.record("add", {a, b}, std::move(y), [a, b](Graph<T>& gr, const Tensor<T>& gy) {
        gr.accumulate(a, gy);
        gr.accumulate(b, gy);
    });
}

template <typename T>
Var scale(Graph<T>& g, Var a, T s)
{
    Tensor<T> y = g.value(a);
    for (auto& v : y.data())
        v *= s;
    return g.record("scale", {a}, std::move(y), [a, s](Graph<T>& gr, const Tensor<T>& gy) {
        Tensor<T> gx = gy;
        for (auto& v : gx.data())
            v *= s;
        gr.accumulate(a, std::move(gx));
    });
}

template <typename T>
Var mul(Graph<T>& g, Var a, Var b)
{
    Tensor<T> y = elementwise_mul(g.value(a), g.value(b));
    return g.record("mul", {a, b}, std::move(y), [a, b](Graph<T>& gr, const Tensor<T>& gy) {
        if (gr.requires_grad(a))
            gr.accumulate(a, elementwise_mul(gy, gr.value(b)));
        if (gr.requires_grad(b))
            gr.accumulate(b, elementwise_mul(gy, gr.value(a)));
    });
}

template <typename T>
Var relu(Graph<T>& g, Var a)
{
    Tensor<T> y = akn::relu(g.value(a));
    return g.record("relu", {a}, std::move(y), [a](Graph<T>& gr, const Tensor<T>& gy) {
        const auto& x = gr.value(a);
        Tensor<T> gx = gy;
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (x[i] <= T{0})
                gx[i] = 0;
        gr.accumulate(a, std::move(gx));
    });
}

template <typename T>
Var sum(Graph<T>& g, Var a)
{
    T s = 0;
    for (T v : g.value(a).data())
        s += v;
    return g.record("sum", {a}, Tensor<T>::scalar(s), [a](Graph<T>& gr, const Tensor<T>& gy) {
        gr.accumulate(a, Tensor<T>(gr.value(a).dims(), gy[0]));
    });
}

template <typename T>
Var mean(Graph<T>& g, Var a)
{
    const T n = static_cast<T>(g.value(a).size());
    return scale(g, sum(g, a), T{1} / n);
}

template <typename T>
Var reshape(Graph<T>& g, Var a, Dims dims)
{
    Tensor<T> y = g.value(a).reshaped(std::move(dims));
    return g.record("reshape", {a}, std::move(y), [a](Graph<T>& gr, const Tensor<T>& gy) {
        gr.accumulate(a, gy.reshaped(gr.value(a).dims()));
    });
}

template <typename T>
Var conv2d(Graph<T>& g, Var x, Var w, std::size_t stride, std::size_t pad)
{
    const auto& xv = g.value(x);
    const auto& wv = g.value(w);
    const auto geo = detail::conv2d_geometry(xv, wv, stride, pad);
    Dims out = xv.rank() == 4 ? Dims{wv.dim(0), geo.frames, geo.out_h, geo.out_w}
                              : Dims{wv.dim(0), geo.out_h, geo.out_w};
    auto col = std::make_shared<std::vector<T>>();
    Tensor<T> y = detail::conv_gemm(xv, wv, geo, std::move(out), col.get());
    return g.record("conv2d", {x, w}, std::move(y), [x, w, geo, col](Graph<T>& gr, const Tensor<T>& gy) {
        const auto& wv = gr.value(w);
        const std::size_t cout = wv.dim(0);
        ConstMatrixMap<T> gm(gy.ptr(), cout, geo.cols());
        if (gr.requires_grad(w)) {
            Tensor<T> gw(wv.dims());
            ConstMatrixMap<T> cm(col->data(), geo.rows(), geo.cols());
            MatrixMap<T>(gw.ptr(), cout, geo.rows()).noalias() = gm * cm.transpose();
            gr.accumulate(w, std::move(gw));
        }
        if (gr.requires_grad(x)) {
            RowMatrix<T> gcol = ConstMatrixMap<T>(wv.ptr(), cout, geo.rows()).transpose() * gm;
            Tensor<T> gx(gr.value(x).dims());
            detail::col2im(gcol.data(), geo, gx.ptr());
            gr.accumulate(x, std::move(gx));
        }
    });
}

template <typename T>
Var conv1d(Graph<T>& g, Var x, Var w, std::size_t stride, std::size_t pad)
{
    const auto& xv = g.value(x);
    const auto& wv = g.value(w);
    const auto geo = detail::conv1d_geometry(xv, wv, stride, pad);
    auto col = std::make_shared<std::vector<T>>();
    Tensor<T> y = detail::conv_gemm(xv, wv, geo, Dims{wv.dim(0), geo.out_w}, col.get());
    return g.record("conv1d", {x, w}, std::move(y), [x, w, geo, col](Graph<T>& gr, const Tensor<T>& gy) {
        const auto& wv = gr.value(w);
        const std::size_t cout = wv.dim(0);
        ConstMatrixMap<T> gm(gy.ptr(), cout, geo.cols());
        if (gr.requires_grad(w)) {
            Tensor<T> gw(wv.dims());
            ConstMatrixMap<T> cm(col->data(), geo.rows(), geo.cols());
            MatrixMap<T>(gw.ptr(), cout, geo.rows()).noalias() = gm * cm.transpose();
            gr.accumulate(w, std::move(gw));
        }
        if (gr.requires_grad(x)) {
            RowMatrix<T> gcol = ConstMatrixMap<T>(wv.ptr(), cout, geo.rows()).transpose() * gm;
            Tensor<T> gx(gr.value(x).dims());
            detail::col2im(gcol.data(), geo, gx.ptr());
            gr.accumulate(x, std::move(gx));
        }
    });
}

template <typename T>
Var channel_affine(Graph<T>& g, Var x, Var scale_v, Var bias_v)
{
    Tensor<T> y = akn::channel_affine(g.value(x), g.value(scale_v), g.value(bias_v));
    return g.record("affine", {x, scale_v, bias_v}, std::move(y),
                    [x, scale_v, bias_v](Graph<T>& gr, const Tensor<T>& gy) {
                        const auto& xv = gr.value(x);
                        const auto& sv = gr.value(scale_v);
                        const std::size_t c = xv.dim(0);
                        const std::size_t inner = xv.size() / c;
                        if (gr.requires_grad(x)) {
                            Tensor<T> gx(xv.dims());
                            for (std::size_t i = 0; i < c; ++i)
                                for (std::size_t k = 0; k < inner; ++k)
                                    gx[i * inner + k] = gy[i * inner + k] * sv[i];
                            gr.accumulate(x, std::move(gx));
                        }
                        Tensor<T> gs({c}), gb({c});
                        for (std::size_t i = 0; i < c; ++i) {
                            T ss = 0, sb = 0;
                            for (std::size_t k = 0; k < inner; ++k) {
                                ss += gy[i * inner + k] * xv[i * inner + k];
                                sb += gy[i * inner + k];
                            }
                            gs[i] = ss;
                            gb[i] = sb;
                        }
                        gr.accumulate(scale_v, std::move(gs));
                        gr.accumulate(bias_v, std::move(gb));
                    });
}

// Per-channel bias only: y_c = x_c + b_c.
template <typename T>
Var channel_bias(Graph<T>& g, Var x, Var bias_v)
{
    const auto& xv = g.value(x);
    const auto& bv = g.value(bias_v);
    const std::size_t c = xv.dim(0);
    expect_dim(bv, 0, c, "channel bias");
    const std::size_t inner = xv.size() / c;
    Tensor<T> y = xv;
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t k = 0; k < inner; ++k)
            y[i * inner + k] += bv[i];
    return g.record("bias", {x, bias_v}, std::move(y), [x, bias_v, c, inner](Graph<T>& gr, const Tensor<T>& gy) {
        gr.accumulate(x, gy);
        Tensor<T> gb({c});
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t k = 0; k < inner; ++k)
                gb[i] += gy[i * inner + k];
        gr.accumulate(bias_v, std::move(gb));
    });
}

template <typename T>
Var dense(Graph<T>& g, Var x, Var w, Var b)
{
    Tensor<T> y = akn::dense(g.value(x), g.value(w), g.value(b));
    return g.record("dense", {x, w, b}, std::move(y), [x, w, b](Graph<T>& gr, const Tensor<T>& gy) {
        const auto& xv = gr.value(x);
        const auto& wv = gr.value(w);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> gv(gy.ptr(), gy.size());
        if (gr.requires_grad(w)) {
            Tensor<T> gw(wv.dims());
            Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xvec(xv.ptr(), xv.size());
            MatrixMap<T>(gw.ptr(), wv.dim(0), wv.dim(1)).noalias() = gv * xvec.transpose();
            gr.accumulate(w, std::move(gw));
        }
        if (gr.requires_grad(x)) {
            Tensor<T> gx(xv.dims());
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(gx.ptr(), gx.size()).noalias() =
                ConstMatrixMap<T>(wv.ptr(), wv.dim(0), wv.dim(1)).transpose() * gv;
            gr.accumulate(x, std::move(gx));
        }
        gr.accumulate(b, gy);
    });
}

// Softmax along the last axis.
template <typename T>
Var softmax(Graph<T>& g, Var x)
{
    Tensor<T> y = akn::softmax(g.value(x));
    auto keep = std::make_shared<Tensor<T>>(y);
    return g.record("softmax", {x}, std::move(y), [x, keep](Graph<T>& gr, const Tensor<T>& gy) {
        const Tensor<T>& s = *keep;
        const std::size_t n = s.dim(s.rank() - 1);
        Tensor<T> gx(s.dims());
        for (std::size_t r = 0; r < s.size() / n; ++r) {
            T dot = 0;
            for (std::size_t i = 0; i < n; ++i)
                dot += gy[r * n + i] * s[r * n + i];
            for (std::size_t i = 0; i < n; ++i)
                gx[r * n + i] = s[r * n + i] * (gy[r * n + i] - dot);
        }
        gr.accumulate(x, std::move(gx));
    });
}

template <typename T>
Var global_avg_pool(Graph<T>& g, Var x)
{
    Tensor<T> y = akn::global_avg_pool(g.value(x));
    return g.record("global_avg_pool", {x}, std::move(y), [x](Graph<T>& gr, const Tensor<T>& gy) {
        const auto& dims = gr.value(x).dims();
        Tensor<T> gx(dims);
        const std::size_t c = dims[0];
        const std::size_t inner = gx.size() / c;
        for (std::size_t i = 0; i < c; ++i)
            std::fill_n(gx.ptr() + i * inner, inner, gy[i] / static_cast<T>(inner));
        gr.accumulate(x, std::move(gx));
    });
}

// CxTxHxW -> TxC: spatial mean per channel and frame.
template <typename T>
Var spatial_mean(Graph<T>& g, Var x)
{
    const auto& xv = g.value(x);
    expect_rank(xv, 4, "spatial_mean input");
    const std::size_t c = xv.dim(0), t = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    Tensor<T> y({t, c});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t f = 0; f < t; ++f) {
            const T* p = xv.ptr() + (ch * t + f) * plane;
            T s = 0;
            for (std::size_t k = 0; k < plane; ++k)
                s += p[k];
            y[f * c + ch] = s / static_cast<T>(plane);
        }
    return g.record("spatial_mean", {x}, std::move(y), [x, c, t, plane](Graph<T>& gr, const Tensor<T>& gy) {
        Tensor<T> gx(gr.value(x).dims());
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t f = 0; f < t; ++f)
                std::fill_n(gx.ptr() + (ch * t + f) * plane, plane, gy[f * c + ch] / static_cast<T>(plane));
        gr.accumulate(x, std::move(gx));
    });
}

template <typename T>
Var temporal_shift(Graph<T>& g, Var x, double fraction)
{
    Tensor<T> y = akn::temporal_shift(g.value(x), fraction);
    return g.record("temporal_shift", {x}, std::move(y), [x, fraction](Graph<T>& gr, const Tensor<T>& gy) {
        // Adjoint of a shift by +1 is a shift by -1: swap the two channel groups.
        const auto& dims = gy.dims();
        const std::size_t c = dims[0], t = dims[1], plane = dims[2] * dims[3];
        const std::size_t fold = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(c)));
        Tensor<T> gx(dims);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const long offset = ch < fold ? -1 : (ch < 2 * fold ? 1 : 0);
            for (std::size_t f = 0; f < t; ++f) {
                const long src = static_cast<long>(f) + offset;
                if (src < 0 || src >= static_cast<long>(t))
                    continue;
                const T* from = gy.ptr() + (ch * t + f) * plane;
                T* to = gx.ptr() + (ch * t + src) * plane;
                for (std::size_t k = 0; k < plane; ++k)
                    to[k] += from[k];
            }
        }
        gr.accumulate(x, std::move(gx));
    });
}

// Non-overlapping k x k average pooling over the trailing two axes (floor).
template <typename T>
Var avg_pool2d(Graph<T>& g, Var x, std::size_t k)
{
    const auto& xv = g.value(x);
    if (xv.rank() < 3)
        throw ShapeError("avg_pool2d input: expected rank >= 3, got " + dims_to_string(xv.dims()));
    const std::size_t h = xv.dim(xv.rank() - 2), w = xv.dim(xv.rank() - 1);
    if (k == 0 || h < k || w < k)
        throw ShapeError("avg_pool2d: window " + std::to_string(k) + " exceeds extent " + dims_to_string(xv.dims()));
    const std::size_t oh = h / k, ow = w / k, planes = xv.size() / (h * w);
    Dims od = xv.dims();
    od[od.size() - 2] = oh;
    od[od.size() - 1] = ow;
    Tensor<T> y(od);
    const T inv = T{1} / static_cast<T>(k * k);
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                T s = 0;
                for (std::size_t a = 0; a < k; ++a)
                    for (std::size_t b = 0; b < k; ++b)
                        s += xv[(p * h + i * k + a) * w + j * k + b];
                y[(p * oh + i) * ow + j] = s * inv;
            }
    return g.record("avg_pool2d", {x}, std::move(y), [x, k, h, w, oh, ow, planes, inv](Graph<T>& gr, const Tensor<T>& gy) {
        Tensor<T> gx(gr.value(x).dims());
        for (std::size_t p = 0; p < planes; ++p)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j)
                    for (std::size_t a = 0; a < k; ++a)
                        for (std::size_t b = 0; b < k; ++b)
                            gx[(p * h + i * k + a) * w + j * k + b] = gy[(p * oh + i) * ow + j] * inv;
        gr.accumulate(x, std::move(gx));
    });
}

// Non-overlapping average pooling along the last axis of CxL.
template <typename T>
Var avg_pool1d(Graph<T>& g, Var x, std::size_t k)
{
    const auto& xv = g.value(x);
    expect_rank(xv, 2, "avg_pool1d input");
    const std::size_t c = xv.dim(0), l = xv.dim(1);
    if (k == 0 || l < k)
        throw ShapeError("avg_pool1d: window " + std::to_string(k) + " exceeds length " + std::to_string(l));
    const std::size_t ol = l / k;
    Tensor<T> y({c, ol});
    const T inv = T{1} / static_cast<T>(k);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < ol; ++i) {
            T s = 0;
            for (std::size_t a = 0; a < k; ++a)
                s += xv[ch * l + i * k + a];
            y[ch * ol + i] = s * inv;
        }
    return g.record("avg_pool1d", {x}, std::move(y), [x, k, c, l, ol, inv](Graph<T>& gr, const Tensor<T>& gy) {
        Tensor<T> gx({c, l});
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < ol; ++i)
                for (std::size_t a = 0; a < k; ++a)
                    gx[ch * l + i * k + a] = gy[ch * ol + i] * inv;
        gr.accumulate(x, std::move(gx));
    });
}

template <typename T>
Var matmul(Graph<T>& g, Var a, Var b)
{
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    expect_rank(av, 2, "matmul lhs");
    expect_rank(bv, 2, "matmul rhs");
    expect_dim(bv, 0, av.dim(1), "matmul rhs (inner)");
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor<T> y({m, n});
    MatrixMap<T>(y.ptr(), m, n).noalias() = ConstMatrixMap<T>(av.ptr(), m, k) * ConstMatrixMap<T>(bv.ptr(), k, n);
    return g.record("matmul", {a, b}, std::move(y), [a, b, m, k, n](Graph<T>& gr, const Tensor<T>& gy) {
        ConstMatrixMap<T> gm(gy.ptr(), m, n);
        if (gr.requires_grad(a)) {
            Tensor<T> ga({m, k});
            MatrixMap<T>(ga.ptr(), m, k).noalias() = gm * ConstMatrixMap<T>(gr.value(b).ptr(), k, n).transpose();
            gr.accumulate(a, std::move(ga));
        }
        if (gr.requires_grad(b)) {
            Tensor<T> gb({k, n});
            MatrixMap<T>(gb.ptr(), k, n).noalias() = ConstMatrixMap<T>(gr.value(a).ptr(), m, k).transpose() * gm;
            gr.accumulate(b, std::move(gb));
        }
    });
}

template <typename T>
Var transpose(Graph<T>& g, Var a)
{
    const auto& av = g.value(a);
    expect_rank(av, 2, "transpose input");
    const std::size_t m = av.dim(0), n = av.dim(1);
    Tensor<T> y({n, m});
    MatrixMap<T>(y.ptr(), n, m) = ConstMatrixMap<T>(av.ptr(), m, n).transpose();
    return g.record("transpose", {a}, std::move(y), [a, m, n](Graph<T>& gr, const Tensor<T>& gy) {
        Tensor<T> ga({m, n});
        MatrixMap<T>(ga.ptr(), m, n) = ConstMatrixMap<T>(gy.ptr(), n, m).transpose();
        gr.accumulate(a, std::move(ga));
    });
}

// Concatenate along axis 0.
template <typename T>
Var concat(Graph<T>& g, const std::vector<Var>& parts)
{
    std::vector<Tensor<T>> values;
    std::vector<std::size_t> sizes;
    for (Var p : parts) {
        values.push_back(g.value(p));
        sizes.push_back(values.back().size());
    }
    Tensor<T> y = akn::concat(values);
    return g.record("concat", parts, std::move(y), [parts, sizes](Graph<T>& gr, const Tensor<T>& gy) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (gr.requires_grad(parts[i])) {
                std::vector<T> chunk(gy.ptr() + off, gy.ptr() + off + sizes[i]);
                gr.accumulate(parts[i], Tensor<T>(gr.value(parts[i]).dims(), std::move(chunk)));
            }
            off += sizes[i];
        }
    });
}

// Rows [begin, end) along axis 0.
template <typename T>
Var slice_rows(Graph<T>& g, Var a, std::size_t begin, std::size_t end)
{
    const auto& av = g.value(a);
    if (begin >= end || end > av.dim(0))
        throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside dimension 0 of " + dims_to_string(av.dims()));
    const std::size_t inner = av.size() / av.dim(0);
    Dims od = av.dims();
    od[0] = end - begin;
    std::vector<T> data(av.ptr() + begin * inner, av.ptr() + end * inner);
    return g.record("slice_rows", {a}, Tensor<T>(od, std::move(data)),
                    [a, begin, inner](Graph<T>& gr, const Tensor<T>& gy) {
                        Tensor<T> ga(gr.value(a).dims());
                        std::copy(gy.data().begin(), gy.data().end(), ga.ptr() + begin * inner);
                        gr.accumulate(a, std::move(ga));
                    });
}

// Max over the last axis of CxN -> [C]. Ties resolve to the lowest index.
template <typename T>
Var max_last(Graph<T>& g, Var x)
{
    const auto& xv = g.value(x);
    expect_rank(xv, 2, "max_last input");
    const std::size_t c = xv.dim(0), n = xv.dim(1);
    Tensor<T> y({c});
    std::vector<std::size_t> arg(c);
    for (std::size_t i = 0; i < c; ++i) {
        const T* row = xv.ptr() + i * n;
        arg[i] = static_cast<std::size_t>(std::max_element(row, row + n) - row);
        y[i] = row[arg[i]];
    }
    return g.record("max_last", {x}, std::move(y), [x, arg, c, n](Graph<T>& gr, const Tensor<T>& gy) {
        Tensor<T> gx({c, n});
        for (std::size_t i = 0; i < c; ++i)
            gx[i * n + arg[i]] = gy[i];
        gr.accumulate(x, std::move(gx));
    });
}

// Heatmap scores: x is CxTxHxW, w is TxC; out(t,i,j) = sum_c w(t,c) x(c,t,i,j).
template <typename T>
Var channel_weighted_sum(Graph<T>& g, Var x, Var w)
{
    const auto& xv = g.value(x);
    const auto& wv = g.value(w);
    expect_rank(xv, 4, "heatmap features");
    const std::size_t c = xv.dim(0), t = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    expect_rank(wv, 2, "heatmap channel weights");
    expect_dim(wv, 0, t, "heatmap channel weights (frames)");
    expect_dim(wv, 1, c, "heatmap channel weights (channels)");
    Tensor<T> y({t, xv.dim(2), xv.dim(3)});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t f = 0; f < t; ++f) {
            const T wt = wv[f * c + ch];
            const T* src = xv.ptr() + (ch * t + f) * plane;
            T* dst = y.ptr() + f * plane;
            for (std::size_t k = 0; k < plane; ++k)
                dst[k] += wt * src[k];
        }
    return g.record("channel_weighted_sum", {x, w}, std::move(y), [x, w, c, t, plane](Graph<T>& gr, const Tensor<T>& gy) {
        const auto& xv = gr.value(x);
        const auto& wv = gr.value(w);
        if (gr.requires_grad(x)) {
            Tensor<T> gx(xv.dims());
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t f = 0; f < t; ++f) {
                    const T wt = wv[f * c + ch];
                    const T* src = gy.ptr() + f * plane;
                    T* dst = gx.ptr() + (ch * t + f) * plane;
                    for (std::size_t k = 0; k < plane; ++k)
                        dst[k] = wt * src[k];
                }
            gr.accumulate(x, std::move(gx));
        }
        if (gr.requires_grad(w)) {
            Tensor<T> gw(wv.dims());
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t f = 0; f < t; ++f) {
                    const T* a = gy.ptr() + f * plane;
                    const T* b = xv.ptr() + (ch * t + f) * plane;
                    T s = 0;
                    for (std::size_t k = 0; k < plane; ++k)
                        s += a[k] * b[k];
                    gw[f * c + ch] = s;
                }
            gr.accumulate(w, std::move(gw));
        }
    });
}

// Min-max normalization over the whole tensor to [0,1]. A constant input maps
// to 0.5 everywhere with zero gradient.
template <typename T>
Var minmax_normalize(Graph<T>& g, Var x)
{
    const auto& xv = g.value(x);
    if (!xv.all_finite())
        throw std::domain_error("minmax_normalize: non-finite input");
    const auto [lo_it, hi_it] = std::minmax_element(xv.data().begin(), xv.data().end());
    const std::size_t lo = static_cast<std::size_t>(lo_it - xv.data().begin());
    const std::size_t hi = static_cast<std::size_t>(hi_it - xv.data().begin());
    const T range = xv[hi] - xv[lo];
    Tensor<T> y(xv.dims());
    if (!(range > T{0})) {
        std::fill(y.data().begin(), y.data().end(), T(0.5));
        return g.record("minmax_normalize", {x}, std::move(y), [](Graph<T>&, const Tensor<T>&) {});
    }
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = (xv[i] - xv[lo]) / range;
    auto keep = std::make_shared<Tensor<T>>(y);
    return g.record("minmax_normalize", {x}, std::move(y), [x, keep, lo, hi, range](Graph<T>& gr, const Tensor<T>& gy) {
        const Tensor<T>& h = *keep;
        Tensor<T> gx(h.dims());
        T to_lo = 0, to_hi = 0;
        for (std::size_t i = 0; i < h.size(); ++i) {
            gx[i] = gy[i] / range;
            to_lo += gy[i] * (h[i] - T{1});
            to_hi -= gy[i] * h[i];
        }
        gx[lo] += to_lo / range;
        gx[hi] += to_hi / range;
        gr.accumulate(x, std::move(gx));
    });
}

// x is Cx(rest), h has dims (rest): each channel is multiplied by h.
template <typename T>
Var mul_channels(Graph<T>& g, Var x, Var h)
{
    const auto& xv = g.value(x);
    const auto& hv = g.value(h);
    const std::size_t c = xv.dim(0);
    const std::size_t inner = xv.size() / c;
    if (hv.size() != inner || hv.rank() + 1 != xv.rank() ||
        !std::equal(hv.dims().begin(), hv.dims().end(), xv.dims().begin() + 1))
        throw ShapeError("mul_channels: map " + dims_to_string(hv.dims()) + " does not match features " +
                         dims_to_string(xv.dims()));
    Tensor<T> y(xv.dims());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t k = 0; k < inner; ++k)
            y[ch * inner + k] = xv[ch * inner + k] * hv[k];
    return g.record("mul_channels", {x, h}, std::move(y), [x, h, c, inner](Graph<T>& gr, const Tensor<T>& gy) {
        const auto& xv = gr.value(x);
        const auto& hv = gr.value(h);
        if (gr.requires_grad(x)) {
            Tensor<T> gx(xv.dims());
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t k = 0; k < inner; ++k)
                    gx[ch * inner + k] = gy[ch * inner + k] * hv[k];
            gr.accumulate(x, std::move(gx));
        }
        if (gr.requires_grad(h)) {
            Tensor<T> gh(hv.dims());
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t k = 0; k < inner; ++k)
                    gh[k] += gy[ch * inner + k] * xv[ch * inner + k];
            gr.accumulate(h, std::move(gh));
        }
    });
}

// Gather columns: x is Cx(positions...), flattened to CxP; returns CxN with
// column n = x[:, index[n]]. The backward pass scatters into those positions.
template <typename T>
Var gather_columns(Graph<T>& g, Var x, std::vector<std::size_t> index)
{
    const auto& xv = g.value(x);
    const std::size_t c = xv.dim(0);
    const std::size_t p = xv.size() / c;
    if (index.empty())
        throw ShapeError("gather_columns: empty index");
    const std::size_t n = index.size();
    Tensor<T> y({c, n});
    for (std::size_t k = 0; k < n; ++k)
        if (index[k] >= p)
            throw std::out_of_range("gather_columns: position " + std::to_string(index[k]) + " >= " + std::to_string(p));
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t k = 0; k < n; ++k)
            y[ch * n + k] = xv[ch * p + index[k]];
    return g.record("gather_columns", {x}, std::move(y), [x, index = std::move(index), c, p, n](Graph<T>& gr, const Tensor<T>& gy) {
        Tensor<T> gx(gr.value(x).dims());
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t k = 0; k < n; ++k)
                gx[ch * p + index[k]] += gy[ch * n + k];
        gr.accumulate(x, std::move(gx));
    });
}

// Mean of 4 h (1 - h) over every element.
template <typename T>
Var energy(Graph<T>& g, Var h)
{
    const auto& hv = g.value(h);
    T s = 0;
    for (T v : hv.data())
        s += T{4} * v * (T{1} - v);
    const T n = static_cast<T>(hv.size());
    return g.record("energy", {h}, Tensor<T>::scalar(s / n), [h, n](Graph<T>& gr, const Tensor<T>& gy) {
        const auto& hv = gr.value(h);
        Tensor<T> gh(hv.dims());
        for (std::size_t i = 0; i < hv.size(); ++i)
            gh[i] = gy[0] * (T{4} - T{8} * hv[i]) / n;
        gr.accumulate(h, std::move(gh));
    });
}

// Cross-entropy of logits [K] against an integer label.
template <typename T>
Var cross_entropy(Graph<T>& g, Var logits, std::size_t label)
{
    const auto& lv = g.value(logits);
    expect_rank(lv, 1, "cross_entropy logits");
    if (label >= lv.size())
        throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " >= class count " +
                                std::to_string(lv.size()));
    auto prob = std::make_shared<Tensor<T>>(akn::softmax(lv));
    const T mx = *std::max_element(lv.data().begin(), lv.data().end());
    T z = 0;
    for (T v : lv.data())
        z += std::exp(v - mx);
    const T loss = std::log(z) + mx - lv[label];
    return g.record("cross_entropy", {logits}, Tensor<T>::scalar(loss), [logits, prob, label](Graph<T>& gr, const Tensor<T>& gy) {
        Tensor<T> gl = *prob;
        gl[label] -= T{1};
        for (auto& v : gl.data())
            v *= gy[0];
        gr.accumulate(logits, std::move(gl));
    });
}

} // namespace ops
} // namespace akn
