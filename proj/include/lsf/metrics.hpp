#pragma once

#include "lsf/tensor.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace lsf {

inline constexpr double psnr_cap_db = 99.0;

/// PSNR for unit peak; identical inputs report psnr_cap_db.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b)
{
    a.require_same(b, "psnr");
    double se = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.size());
    if (mse <= 0) return psnr_cap_db;
    return std::min(psnr_cap_db, 10.0 * std::log10(1.0 / mse));
}

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma)
{
    std::vector<double> g(size);
    double sum = 0;
    const double c = (size - 1) / 2.0;
    for (int i = 0; i < size; ++i) sum += g[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
    for (auto& v : g) v /= sum;
    return g;
}

// Separable 'valid' filtering: output is (h - k + 1) x (w - k + 1).
inline std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& g)
{
    const int k = static_cast<int>(g.size()), oh = h - k + 1, ow = w - k + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0;
            for (int i = 0; i < k; ++i) acc += g[i] * img[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0;
            for (int i = 0; i < k; ++i) acc += g[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

} // namespace detail

/// Mean SSIM over every channel and sample, Gaussian-weighted windows fully inside
/// the image.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimParams& p = {})
{
    a.require_same(b, "ssim");
    if (a.h() < p.window || a.w() < p.window) throw DimensionError("ssim: image smaller than the window");
    const auto g = detail::gaussian_window(p.window, p.sigma);
    const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
    const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
    const int h = a.h(), w = a.w();
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    double total = 0;
    int planes = 0;
    for (int n = 0; n < a.n(); ++n)
        for (int c = 0; c < a.c(); ++c, ++planes) {
            std::vector<double> x(hw), y(hw), xx(hw), yy(hw), xy(hw);
            const T* pa = a.plane(n, c);
            const T* pb = b.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) {
                x[i] = pa[i];
                y[i] = pb[i];
                xx[i] = x[i] * x[i];
                yy[i] = y[i] * y[i];
                xy[i] = x[i] * y[i];
            }
            const auto mx = detail::filter_valid(x, h, w, g), my = detail::filter_valid(y, h, w, g);
            const auto sxx = detail::filter_valid(xx, h, w, g), syy = detail::filter_valid(yy, h, w, g);
            const auto sxy = detail::filter_valid(xy, h, w, g);
            double sum = 0;
            for (std::size_t i = 0; i < mx.size(); ++i) {
                const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
                sum += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                       ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
            }
            total += sum / static_cast<double>(mx.size());
        }
    return total / planes;
}

} // namespace lsf
