#pragma once

#include "lsf/nn/conv.hpp"

#include <cmath>
#include <vector>

namespace lsf::nn {

// Deformable 3x3 convolution (offsets only, single deformable group, no modulation).
// Offsets have 18 channels: for tap k = ky*3 + kx, channel 2k is the vertical and
// 2k+1 the horizontal displacement. Samples outside the input read as zero.

inline constexpr int deform_kernel = 3;
inline constexpr int deform_taps = deform_kernel * deform_kernel;
inline constexpr int offset_channels = 2 * deform_taps;

namespace detail {

struct Bilinear {
    int y0, x0;
    double ly, lx;
};

inline Bilinear bilinear_at(double py, double px)
{
    const double fy = std::floor(py), fx = std::floor(px);
    return {static_cast<int>(fy), static_cast<int>(fx), py - fy, px - fx};
}

template <typename T>
inline T read_zero(const T* plane, int h, int w, int y, int x)
{
    return (y < 0 || y >= h || x < 0 || x >= w) ? T(0) : plane[y * w + x];
}

template <typename T>
void check_deform(const ConvLayer<T>& l, const Tensor<T>& x, const Tensor<T>& offsets)
{
    if (l.kernel() != deform_kernel || l.stride != 1 || l.pad != 1)
        throw DimensionError("deform_conv2d: layer must be 3x3, stride 1, pad 1");
    if (x.c() != l.weight.c()) throw DimensionError("deform_conv2d: input channel mismatch");
    if (offsets.n() != x.n() || offsets.c() != offset_channels || offsets.h() != x.h() || offsets.w() != x.w())
        throw DimensionError("deform_conv2d: offsets must be (N,18,H,W), got " + offsets.shape().str());
}

// Sampled columns for one sample: (cin * 9) rows of H*W values.
template <typename T>
std::vector<T> deform_columns(const Tensor<T>& x, const Tensor<T>& offsets, int n)
{
    const int h = x.h(), w = x.w(), cin = x.c();
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    std::vector<T> cols(static_cast<std::size_t>(cin) * deform_taps * hw);
    for (int k = 0; k < deform_taps; ++k) {
        const int ky = k / deform_kernel, kx = k % deform_kernel;
        const T* oy = offsets.plane(n, 2 * k);
        const T* ox = offsets.plane(n, 2 * k + 1);
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                const std::size_t pos = static_cast<std::size_t>(y) * w + xx;
                const auto b = bilinear_at(y - 1 + ky + static_cast<double>(oy[pos]), xx - 1 + kx + static_cast<double>(ox[pos]));
                const double w00 = (1 - b.ly) * (1 - b.lx), w01 = (1 - b.ly) * b.lx;
                const double w10 = b.ly * (1 - b.lx), w11 = b.ly * b.lx;
                for (int ci = 0; ci < cin; ++ci) {
                    const T* in = x.plane(n, ci);
                    double v = w00 * read_zero(in, h, w, b.y0, b.x0);
                    if (w01 != 0) v += w01 * read_zero(in, h, w, b.y0, b.x0 + 1);
                    if (w10 != 0) v += w10 * read_zero(in, h, w, b.y0 + 1, b.x0);
                    if (w11 != 0) v += w11 * read_zero(in, h, w, b.y0 + 1, b.x0 + 1);
                    cols[(static_cast<std::size_t>(ci) * deform_taps + k) * hw + pos] = static_cast<T>(v);
                }
            }
    }
    return cols;
}

} // namespace detail

template <typename T>
Tensor<T> deform_conv2d_forward(const ConvLayer<T>& l, const Tensor<T>& x, const Tensor<T>& offsets)
{
    detail::check_deform(l, x, offsets);
    const int cout = l.weight.n(), rows = x.c() * deform_taps;
    const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
    Tensor<T> y(x.n(), cout, x.h(), x.w());
    for (int n = 0; n < x.n(); ++n) {
        const auto cols = detail::deform_columns(x, offsets, n);
        for (int co = 0; co < cout; ++co) {
            T* out = y.plane(n, co);
            std::fill(out, out + hw, l.bias[co]);
            const T* wrow = l.weight.data() + static_cast<std::size_t>(co) * rows;
            for (int j = 0; j < rows; ++j) {
                const T wv = wrow[j];
                const T* col = cols.data() + static_cast<std::size_t>(j) * hw;
                for (std::size_t p = 0; p < hw; ++p) out[p] += wv * col[p];
            }
        }
    }
    return y;
}

/// Accumulates weight/bias gradients into `grads`, writes the offset gradient into
/// `grad_offsets` (overwritten), and returns the input gradient.
template <typename T>
Tensor<T> deform_conv2d_backward(const ConvLayer<T>& l, const Tensor<T>& x, const Tensor<T>& offsets, const Tensor<T>& gy,
                                 ConvLayer<T>& grads, Tensor<T>& grad_offsets)
{
    detail::check_deform(l, x, offsets);
    const int h = x.h(), w = x.w(), cin = x.c(), cout = l.weight.n(), rows = cin * deform_taps;
    if (gy.n() != x.n() || gy.c() != cout || gy.h() != h || gy.w() != w)
        throw DimensionError("deform_conv2d_backward: output gradient shape " + gy.shape().str());
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    Tensor<T> gx(x.shape());
    grad_offsets = Tensor<T>(offsets.shape());
    std::vector<T> gcols(static_cast<std::size_t>(rows) * hw);
    for (int n = 0; n < x.n(); ++n) {
        const auto cols = detail::deform_columns(x, offsets, n);
        std::fill(gcols.begin(), gcols.end(), T(0));
        for (int co = 0; co < cout; ++co) {
            const T* g = gy.plane(n, co);
            T bsum = 0;
            for (std::size_t p = 0; p < hw; ++p) bsum += g[p];
            grads.bias[co] += bsum;
            const T* wrow = l.weight.data() + static_cast<std::size_t>(co) * rows;
            T* gwrow = grads.weight.data() + static_cast<std::size_t>(co) * rows;
            for (int j = 0; j < rows; ++j) {
                const T* col = cols.data() + static_cast<std::size_t>(j) * hw;
                T* gcol = gcols.data() + static_cast<std::size_t>(j) * hw;
                const T wv = wrow[j];
                T acc = 0;
                for (std::size_t p = 0; p < hw; ++p) {
                    acc += g[p] * col[p];
                    gcol[p] += wv * g[p];
                }
                gwrow[j] += acc;
            }
        }
        for (int k = 0; k < deform_taps; ++k) {
            const int ky = k / deform_kernel, kx = k % deform_kernel;
            const T* oy = offsets.plane(n, 2 * k);
            const T* ox = offsets.plane(n, 2 * k + 1);
            T* goy = grad_offsets.plane(n, 2 * k);
            T* gox = grad_offsets.plane(n, 2 * k + 1);
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    const std::size_t pos = static_cast<std::size_t>(y) * w + xx;
                    const auto b = detail::bilinear_at(y - 1 + ky + static_cast<double>(oy[pos]), xx - 1 + kx + static_cast<double>(ox[pos]));
                    const int corner_y[4] = {b.y0, b.y0, b.y0 + 1, b.y0 + 1};
                    const int corner_x[4] = {b.x0, b.x0 + 1, b.x0, b.x0 + 1};
                    const double cw[4] = {(1 - b.ly) * (1 - b.lx), (1 - b.ly) * b.lx, b.ly * (1 - b.lx), b.ly * b.lx};
                    double dy = 0, dx = 0;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double gc = gcols[(static_cast<std::size_t>(ci) * deform_taps + k) * hw + pos];
                        if (gc == 0) continue;
                        const T* in = x.plane(n, ci);
                        T* gin = gx.plane(n, ci);
                        double v[4];
                        for (int q = 0; q < 4; ++q) {
                            v[q] = detail::read_zero(in, h, w, corner_y[q], corner_x[q]);
                            if (corner_y[q] >= 0 && corner_y[q] < h && corner_x[q] >= 0 && corner_x[q] < w)
                                gin[corner_y[q] * w + corner_x[q]] += static_cast<T>(gc * cw[q]);
                        }
                        dy += gc * ((1 - b.lx) * (v[2] - v[0]) + b.lx * (v[3] - v[1]));
                        dx += gc * ((1 - b.ly) * (v[1] - v[0]) + b.ly * (v[3] - v[2]));
                    }
                    goy[pos] = static_cast<T>(dy);
                    gox[pos] = static_cast<T>(dx);
                }
        }
    }
    return gx;
}

} // namespace lsf::nn
