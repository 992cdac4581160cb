#pragma once

#include "lsf/nn/conv.hpp"

#include <algorithm>
#include <cmath>

namespace lsf::nn {

inline constexpr double leaky_slope = 0.2;

template <typename T>
Tensor<T> leaky_relu_forward(Tensor<T> x, double slope = leaky_slope)
{
    for (auto& v : x.values())
        if (v < 0) v = static_cast<T>(v * slope);
    return x;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, Tensor<T> gy, double slope = leaky_slope)
{
    x.require_same(gy, "leaky_relu_backward");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] < 0) gy[i] = static_cast<T>(gy[i] * slope);
    return gy;
}

template <typename T>
Tensor<T> sigmoid_forward(Tensor<T> x)
{
    for (auto& v : x.values()) v = T(1) / (T(1) + std::exp(-v));
    return x;
}

/// Takes the forward output, not the input.
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, Tensor<T> gy)
{
    y.require_same(gy, "sigmoid_backward");
    for (std::size_t i = 0; i < y.size(); ++i) gy[i] *= y[i] * (T(1) - y[i]);
    return gy;
}

/// (N, C*f*f, H, W) -> (N, C, f*H, f*W); channel c*f*f + i*f + j lands at row offset i, column offset j.
template <typename T>
Tensor<T> pixel_shuffle_forward(const Tensor<T>& x, int factor = 2)
{
    const int ff = factor * factor;
    if (x.c() % ff != 0) throw DimensionError("pixel_shuffle: channels not divisible by factor^2");
    const int c_out = x.c() / ff;
    Tensor<T> y(x.n(), c_out, x.h() * factor, x.w() * factor);
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < c_out; ++c)
            for (int i = 0; i < factor; ++i)
                for (int j = 0; j < factor; ++j) {
                    const T* in = x.plane(n, c * ff + i * factor + j);
                    for (int yy = 0; yy < x.h(); ++yy)
                        for (int xx = 0; xx < x.w(); ++xx) y(n, c, yy * factor + i, xx * factor + j) = in[yy * x.w() + xx];
                }
    return y;
}

/// Inverse rearrangement (space-to-depth); also the exact backward of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& y, int factor = 2)
{
    if (y.h() % factor || y.w() % factor) throw DimensionError("pixel_unshuffle: extents not divisible by factor");
    const int ff = factor * factor;
    Tensor<T> x(y.n(), y.c() * ff, y.h() / factor, y.w() / factor);
    for (int n = 0; n < y.n(); ++n)
        for (int c = 0; c < y.c(); ++c)
            for (int i = 0; i < factor; ++i)
                for (int j = 0; j < factor; ++j) {
                    T* out = x.plane(n, c * ff + i * factor + j);
                    for (int yy = 0; yy < x.h(); ++yy)
                        for (int xx = 0; xx < x.w(); ++xx) out[yy * x.w() + xx] = y(n, c, yy * factor + i, xx * factor + j);
                }
    return x;
}

template <typename T>
Tensor<T> pixel_shuffle_backward(const Tensor<T>& gy, int factor = 2)
{
    return pixel_unshuffle(gy, factor);
}

namespace detail {

struct Tap {
    int i0, i1;
    double l;
};

// Half-pixel-centred source tap for output index o when upsampling n -> 2n.
inline Tap upsample_tap(int o, int n)
{
    const double s = std::clamp((o + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(n - 1));
    const int i0 = static_cast<int>(std::floor(s));
    return {i0, std::min(i0 + 1, n - 1), s - i0};
}

} // namespace detail

/// Bilinear 2x upsampling (half-pixel centres, edge clamp), values multiplied by `gain`.
template <typename T>
Tensor<T> upsample2x_forward(const Tensor<T>& x, double gain = 1.0)
{
    Tensor<T> y(x.n(), x.c(), 2 * x.h(), 2 * x.w());
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c) {
            const T* in = x.plane(n, c);
            for (int oy = 0; oy < y.h(); ++oy) {
                const auto ty = detail::upsample_tap(oy, x.h());
                for (int ox = 0; ox < y.w(); ++ox) {
                    const auto tx = detail::upsample_tap(ox, x.w());
                    const double top = (1 - tx.l) * in[ty.i0 * x.w() + tx.i0] + tx.l * in[ty.i0 * x.w() + tx.i1];
                    const double bot = (1 - tx.l) * in[ty.i1 * x.w() + tx.i0] + tx.l * in[ty.i1 * x.w() + tx.i1];
                    y(n, c, oy, ox) = static_cast<T>(gain * ((1 - ty.l) * top + ty.l * bot));
                }
            }
        }
    return y;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& gy, const Shape& in_shape, double gain = 1.0)
{
    Tensor<T> gx(in_shape);
    const int h = in_shape.h, w = in_shape.w;
    for (int n = 0; n < gy.n(); ++n)
        for (int c = 0; c < gy.c(); ++c) {
            T* g = gx.plane(n, c);
            for (int oy = 0; oy < gy.h(); ++oy) {
                const auto ty = detail::upsample_tap(oy, h);
                for (int ox = 0; ox < gy.w(); ++ox) {
                    const auto tx = detail::upsample_tap(ox, w);
                    const double v = gain * gy(n, c, oy, ox);
                    g[ty.i0 * w + tx.i0] += static_cast<T>(v * (1 - ty.l) * (1 - tx.l));
                    g[ty.i0 * w + tx.i1] += static_cast<T>(v * (1 - ty.l) * tx.l);
                    g[ty.i1 * w + tx.i0] += static_cast<T>(v * ty.l * (1 - tx.l));
                    g[ty.i1 * w + tx.i1] += static_cast<T>(v * ty.l * tx.l);
                }
            }
        }
    return gx;
}

/// conv3x3 -> LeakyReLU(0.2) -> conv3x3 plus identity skip.
template <typename T>
struct ResBlock {
    ConvLayer<T> conv1, conv2;

    static ResBlock make(int channels, Rng& rng)
    {
        ResBlock b{make_conv<T>(channels, channels, 3), make_conv<T>(channels, channels, 3)};
        he_init(b.conv1, rng);
        he_init(b.conv2, rng);
        return b;
    }
    [[nodiscard]] ResBlock zeros_like() const { return {conv1.zeros_like(), conv2.zeros_like()}; }
    template <typename U>
    [[nodiscard]] ResBlock<U> cast() const
    {
        return {conv1.template cast<U>(), conv2.template cast<U>()};
    }
    template <typename F>
    void visit(const std::string& name, F&& f)
    {
        conv1.visit(name + ".conv1", f);
        conv2.visit(name + ".conv2", f);
    }
};

template <typename T>
struct ResBlockCache {
    Tensor<T> x, pre; // block input, first conv output
};

template <typename T>
Tensor<T> resblock_forward(const ResBlock<T>& b, const Tensor<T>& x, ResBlockCache<T>* cache = nullptr)
{
    Tensor<T> pre = conv2d_forward(b.conv1, x);
    Tensor<T> y = conv2d_forward(b.conv2, leaky_relu_forward(pre));
    y += x;
    if (cache) *cache = {x, std::move(pre)};
    return y;
}

template <typename T>
Tensor<T> resblock_backward(const ResBlock<T>& b, const ResBlockCache<T>& cache, const Tensor<T>& gy, ResBlock<T>& grads)
{
    Tensor<T> g = conv2d_backward(b.conv2, leaky_relu_forward(cache.pre), gy, grads.conv2);
    g = leaky_relu_backward(cache.pre, std::move(g));
    Tensor<T> gx = conv2d_backward(b.conv1, cache.x, g, grads.conv1);
    gx += gy;
    return gx;
}

} // namespace lsf::nn
