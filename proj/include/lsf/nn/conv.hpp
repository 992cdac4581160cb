#pragma once

#include "lsf/rng.hpp"
#include "lsf/tensor.hpp"

#include <cmath>
#include <string>

namespace lsf::nn {

/// Weights and bias of a 2-D convolution. Standard convolutions store weights as
/// (out, in, k, k); transposed convolutions as (in, out, k, k).
template <typename T>
struct ConvLayer {
    Tensor<T> weight;
    Tensor<T> bias; // (1, out, 1, 1)
    int stride = 1;
    int pad = 0;

    [[nodiscard]] int kernel() const noexcept { return weight.h(); }

    [[nodiscard]] ConvLayer zeros_like() const { return {weight.zeros_like(), bias.zeros_like(), stride, pad}; }

    template <typename U>
    [[nodiscard]] ConvLayer<U> cast() const
    {
        return {weight.template cast<U>(), bias.template cast<U>(), stride, pad};
    }

    template <typename F>
    void visit(const std::string& name, F&& f)
    {
        f(name + ".weight", weight);
        f(name + ".bias", bias);
    }
};

/// Geometry fixed by kernel size: 3x3 keeps size (pad 1), 1x1 is pointwise,
/// 2x2 halves exactly with stride 2.
template <typename T>
ConvLayer<T> make_conv(int in, int out, int kernel)
{
    ConvLayer<T> l;
    l.weight = Tensor<T>(out, in, kernel, kernel);
    l.bias = Tensor<T>(1, out, 1, 1);
    switch (kernel) {
    case 1: l.stride = 1; l.pad = 0; break;
    case 2: l.stride = 2; l.pad = 0; break;
    case 3: l.stride = 1; l.pad = 1; break;
    default: throw DimensionError("make_conv: kernel must be 1, 2 or 3");
    }
    return l;
}

/// 2x2 stride-2 transposed convolution; exactly doubles spatial size.
template <typename T>
ConvLayer<T> make_conv_transpose(int in, int out)
{
    return {Tensor<T>(in, out, 2, 2), Tensor<T>(1, out, 1, 1), 2, 0};
}

/// He (fan-in) normal initialisation of the weights; bias stays zero.
template <typename T>
void he_init(ConvLayer<T>& l, Rng& rng, bool transposed = false)
{
    const int fan_in = transposed ? l.weight.n() : l.weight.c() * l.kernel() * l.kernel();
    std::normal_distribution<double> g(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : l.weight.values()) v = static_cast<T>(g(rng));
    l.bias.fill(T(0));
}

namespace detail {

// Output columns ox for which ox*stride - pad + kx lands in [0, in_w).
inline void valid_range(int in_w, int out_w, int stride, int pad, int k, int& lo, int& hi)
{
    lo = 0;
    while (lo < out_w && lo * stride - pad + k < 0) ++lo;
    hi = out_w;
    while (hi > lo && (hi - 1) * stride - pad + k >= in_w) --hi;
}

} // namespace detail

inline int conv_out_extent(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }

template <typename T>
void check_conv_input(const ConvLayer<T>& l, const Tensor<T>& x)
{
    if (x.c() != l.weight.c())
        throw DimensionError("conv2d: input has " + std::to_string(x.c()) + " channels, weight expects " +
                             std::to_string(l.weight.c()));
    if (l.stride == 2 && (x.h() % 2 || x.w() % 2)) throw DimensionError("conv2d: stride-2 input must have even extents");
}

/// Cross-correlation with zero padding.
template <typename T>
Tensor<T> conv2d_forward(const ConvLayer<T>& l, const Tensor<T>& x)
{
    check_conv_input(l, x);
    const int k = l.kernel(), s = l.stride, p = l.pad;
    const int cout = l.weight.n(), cin = l.weight.c();
    const int oh = conv_out_extent(x.h(), k, s, p), ow = conv_out_extent(x.w(), k, s, p);
    Tensor<T> y(x.n(), cout, oh, ow);
    for (int n = 0; n < x.n(); ++n)
        for (int co = 0; co < cout; ++co) {
            T* out = y.plane(n, co);
            std::fill(out, out + static_cast<std::size_t>(oh) * ow, l.bias[co]);
            for (int ci = 0; ci < cin; ++ci) {
                const T* in = x.plane(n, ci);
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const T wv = l.weight(co, ci, ky, kx);
                        int lo, hi;
                        detail::valid_range(x.w(), ow, s, p, kx, lo, hi);
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * s - p + ky;
                            if (iy < 0 || iy >= x.h()) continue;
                            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(iy) * x.w() - p + kx;
                            T* orow = out + static_cast<std::size_t>(oy) * ow;
                            for (int ox = lo; ox < hi; ++ox) orow[ox] += wv * in[off + ox * s];
                        }
                    }
            }
        }
    return y;
}

/// Accumulates weight/bias gradients into `grads` and returns the input gradient.
template <typename T>
Tensor<T> conv2d_backward(const ConvLayer<T>& l, const Tensor<T>& x, const Tensor<T>& gy, ConvLayer<T>& grads)
{
    check_conv_input(l, x);
    const int k = l.kernel(), s = l.stride, p = l.pad;
    const int cout = l.weight.n(), cin = l.weight.c();
    const int oh = gy.h(), ow = gy.w();
    if (gy.n() != x.n() || gy.c() != cout || oh != conv_out_extent(x.h(), k, s, p) || ow != conv_out_extent(x.w(), k, s, p))
        throw DimensionError("conv2d_backward: output gradient shape " + gy.shape().str());
    Tensor<T> gx(x.shape());
    for (int n = 0; n < x.n(); ++n)
        for (int co = 0; co < cout; ++co) {
            const T* g = gy.plane(n, co);
            T bsum = 0;
            for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) bsum += g[i];
            grads.bias[co] += bsum;
            for (int ci = 0; ci < cin; ++ci) {
                const T* in = x.plane(n, ci);
                T* gin = gx.plane(n, ci);
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const T wv = l.weight(co, ci, ky, kx);
                        T wsum = 0;
                        int lo, hi;
                        detail::valid_range(x.w(), ow, s, p, kx, lo, hi);
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * s - p + ky;
                            if (iy < 0 || iy >= x.h()) continue;
                            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(iy) * x.w() - p + kx;
                            const T* grow = g + static_cast<std::size_t>(oy) * ow;
                            for (int ox = lo; ox < hi; ++ox) {
                                wsum += grow[ox] * in[off + ox * s];
                                gin[off + ox * s] += wv * grow[ox];
                            }
                        }
                        grads.weight(co, ci, ky, kx) += wsum;
                    }
            }
        }
    return gx;
}

template <typename T>
void check_convT_input(const ConvLayer<T>& l, const Tensor<T>& x)
{
    if (l.kernel() != 2 || l.stride != 2) throw DimensionError("conv_transpose2d: only 2x2 stride-2 is supported");
    if (x.c() != l.weight.n())
        throw DimensionError("conv_transpose2d: input has " + std::to_string(x.c()) + " channels, weight expects " +
                             std::to_string(l.weight.n()));
}

template <typename T>
Tensor<T> conv_transpose2d_forward(const ConvLayer<T>& l, const Tensor<T>& x)
{
    check_convT_input(l, x);
    const int cin = l.weight.n(), cout = l.weight.c(), h = x.h(), w = x.w();
    Tensor<T> y(x.n(), cout, 2 * h, 2 * w);
    for (int n = 0; n < x.n(); ++n)
        for (int co = 0; co < cout; ++co) {
            T* out = y.plane(n, co);
            std::fill(out, out + static_cast<std::size_t>(4) * h * w, l.bias[co]);
            for (int ci = 0; ci < cin; ++ci) {
                const T* in = x.plane(n, ci);
                for (int ky = 0; ky < 2; ++ky)
                    for (int kx = 0; kx < 2; ++kx) {
                        const T wv = l.weight(ci, co, ky, kx);
                        for (int iy = 0; iy < h; ++iy) {
                            T* orow = out + static_cast<std::size_t>(2 * iy + ky) * 2 * w + kx;
                            const T* irow = in + static_cast<std::size_t>(iy) * w;
                            for (int ix = 0; ix < w; ++ix) orow[2 * ix] += wv * irow[ix];
                        }
                    }
            }
        }
    return y;
}

template <typename T>
Tensor<T> conv_transpose2d_backward(const ConvLayer<T>& l, const Tensor<T>& x, const Tensor<T>& gy, ConvLayer<T>& grads)
{
    check_convT_input(l, x);
    const int cin = l.weight.n(), cout = l.weight.c(), h = x.h(), w = x.w();
    if (gy.n() != x.n() || gy.c() != cout || gy.h() != 2 * h || gy.w() != 2 * w)
        throw DimensionError("conv_transpose2d_backward: output gradient shape " + gy.shape().str());
    Tensor<T> gx(x.shape());
    for (int n = 0; n < x.n(); ++n)
        for (int co = 0; co < cout; ++co) {
            const T* g = gy.plane(n, co);
            T bsum = 0;
            for (std::size_t i = 0; i < static_cast<std::size_t>(4) * h * w; ++i) bsum += g[i];
            grads.bias[co] += bsum;
            for (int ci = 0; ci < cin; ++ci) {
                const T* in = x.plane(n, ci);
                T* gin = gx.plane(n, ci);
                for (int ky = 0; ky < 2; ++ky)
                    for (int kx = 0; kx < 2; ++kx) {
                        const T wv = l.weight(ci, co, ky, kx);
                        T wsum = 0;
                        for (int iy = 0; iy < h; ++iy) {
                            const T* grow = g + static_cast<std::size_t>(2 * iy + ky) * 2 * w + kx;
                            const T* irow = in + static_cast<std::size_t>(iy) * w;
                            T* girow = gin + static_cast<std::size_t>(iy) * w;
                            for (int ix = 0; ix < w; ++ix) {
                                wsum += grow[2 * ix] * irow[ix];
                                girow[ix] += wv * grow[2 * ix];
                            }
                        }
                        grads.weight(ci, co, ky, kx) += wsum;
                    }
            }
        }
    return gx;
}

} // namespace lsf::nn
