#pragma once

#include "lsf/raw.hpp"

#include <array>
#include <cmath>
#include <string>

namespace lsf {

enum class ToneMode { gamma, mulaw };

inline std::string to_string(ToneMode m) { return m == ToneMode::gamma ? "gamma" : "mulaw"; }

inline ToneMode parse_tone_mode(const std::string& s)
{
    if (s == "gamma") return ToneMode::gamma;
    if (s == "mulaw") return ToneMode::mulaw;
    throw ValueError("unknown mode '" + s + "' (expected gamma or mulaw)");
}

using Matrix3 = std::array<std::array<double, 3>, 3>;

inline constexpr Matrix3 identity_ccm{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

/// Mild saturation boost; rows sum to one so greys are preserved.
inline constexpr Matrix3 default_ccm{{{1.20, -0.15, -0.05}, {-0.10, 1.15, -0.05}, {-0.05, -0.20, 1.25}}};

struct IspConfig {
    std::array<double, 3> wb_gains{2.0, 1.0, 1.6};
    Matrix3 ccm = default_ccm;
    ToneMode mode = ToneMode::gamma;
    double mu = 100.0;
    double epsilon = 1e-8;

    void validate() const
    {
        for (double g : wb_gains)
            if (!(g > 0) || !std::isfinite(g)) throw ValueError("white-balance gains must be finite and positive");
        for (const auto& row : ccm)
            if (std::abs(row[0] + row[1] + row[2] - 1.0) > 1e-9) throw ValueError("ccm rows must sum to 1");
        if (!(mu > 0)) throw ValueError("mu must be positive");
        if (!(epsilon > 0)) throw ValueError("epsilon must be positive");
    }
};

inline constexpr double gamma_exponent = 1.0 / 2.22;

template <typename T>
T gamma_curve(T v, double epsilon = 1e-8)
{
    return static_cast<T>(std::pow(std::max(static_cast<double>(v), epsilon), gamma_exponent));
}

template <typename T>
T gamma_curve_derivative(T v, double epsilon = 1e-8)
{
    const double x = static_cast<double>(v);
    return x > epsilon ? static_cast<T>(gamma_exponent * std::pow(x, gamma_exponent - 1.0)) : T(0);
}

/// Inputs below zero are floored to zero, which keeps the curve defined on
/// untrained network outputs.
template <typename T>
T mu_law_curve(T v, double mu = 100.0)
{
    const double h = std::max(static_cast<double>(v), 0.0);
    return static_cast<T>(std::log1p(mu * h) / std::log1p(mu));
}

template <typename T>
T mu_law_derivative(T v, double mu = 100.0)
{
    const double h = static_cast<double>(v);
    return h > 0 ? static_cast<T>(mu / ((1.0 + mu * h) * std::log1p(mu))) : T(0);
}

inline void require_positive_gains(const std::array<double, 3>& gains)
{
    for (double g : gains)
        if (!(g > 0)) throw ValueError("white_balance: gains must be positive");
}

template <typename T>
RgbImage<T> white_balance(RgbImage<T> img, const std::array<double, 3>& gains)
{
    require_positive_gains(gains);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x) img.at(c, y, x) = static_cast<T>(img.at(c, y, x) * gains[c]);
    return img;
}

template <typename T>
RawImage<T> white_balance(RawImage<T> raw, const std::array<double, 3>& gains)
{
    require_positive_gains(gains);
    for (int y = 0; y < raw.height(); ++y)
        for (int x = 0; x < raw.width(); ++x) raw(y, x) = static_cast<T>(raw(y, x) * gains[bayer_color(y, x)]);
    return raw;
}

/// White balance on a batch of packed raws (R, G1, G2, B channels).
template <typename T>
void white_balance_packed(Tensor<T>& packed, const std::array<double, 3>& gains)
{
    require_positive_gains(gains);
    if (packed.c() != 4) throw DimensionError("white_balance_packed: expected 4 channels");
    const std::array<double, 4> g{gains[0], gains[1], gains[1], gains[2]};
    const std::size_t hw = static_cast<std::size_t>(packed.h()) * packed.w();
    for (int n = 0; n < packed.n(); ++n)
        for (int c = 0; c < 4; ++c) {
            T* p = packed.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) p[i] = static_cast<T>(p[i] * g[c]);
        }
}

namespace detail {

// Malvar-He-Cutler 5x5 kernels, scaled by 8.
using Kernel5 = std::array<std::array<double, 5>, 5>;

inline constexpr Kernel5 mhc_g_at_rb{{{0, 0, -1, 0, 0}, {0, 0, 2, 0, 0}, {-1, 2, 4, 2, -1}, {0, 0, 2, 0, 0}, {0, 0, -1, 0, 0}}};
// R at a green site in a red row (B at green in a blue row).
inline constexpr Kernel5 mhc_rb_at_g_row{
    {{0, 0, 0.5, 0, 0}, {0, -1, 0, -1, 0}, {-1, 4, 5, 4, -1}, {0, -1, 0, -1, 0}, {0, 0, 0.5, 0, 0}}};
// R at a green site in a blue row (B at green in a red row).
inline constexpr Kernel5 mhc_rb_at_g_col{
    {{0, 0, -1, 0, 0}, {0, -1, 4, -1, 0}, {0.5, 0, 5, 0, 0.5}, {0, -1, 4, -1, 0}, {0, 0, -1, 0, 0}}};
inline constexpr Kernel5 mhc_rb_at_br{
    {{0, 0, -1.5, 0, 0}, {0, 2, 0, 2, 0}, {-1.5, 0, 6, 0, -1.5}, {0, 2, 0, 2, 0}, {0, 0, -1.5, 0, 0}}};

inline int reflect101(int i, int n)
{
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
}

template <typename T>
double apply_kernel5(const RawImage<T>& raw, const Kernel5& k, int y, int x)
{
    double acc = 0;
    for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
            const double c = k[dy + 2][dx + 2];
            if (c == 0) continue;
            acc += c * raw(reflect101(y + dy, raw.height()), reflect101(x + dx, raw.width()));
        }
    return acc / 8.0;
}

} // namespace detail

/// Malvar-He-Cutler gradient-corrected linear demosaic of an RGGB mosaic.
/// Borders use even reflection (which keeps the Bayer phase); output is clipped to [0,1].
template <typename T>
RgbImage<T> demosaic_malvar(const RawImage<T>& raw)
{
    using namespace detail;
    if (raw.height() < 5 || raw.width() < 5) throw DimensionError("demosaic_malvar: image smaller than 5x5");
    require_even(raw.height(), raw.width(), "demosaic_malvar");
    RgbImage<T> out(raw.height(), raw.width());
    for (int y = 0; y < raw.height(); ++y)
        for (int x = 0; x < raw.width(); ++x) {
            const double v = raw(y, x);
            double r, g, b;
            const bool red_row = (y & 1) == 0;
            switch (bayer_color(y, x)) {
            case 0:
                r = v;
                g = apply_kernel5(raw, mhc_g_at_rb, y, x);
                b = apply_kernel5(raw, mhc_rb_at_br, y, x);
                break;
            case 2:
                b = v;
                g = apply_kernel5(raw, mhc_g_at_rb, y, x);
                r = apply_kernel5(raw, mhc_rb_at_br, y, x);
                break;
            default:
                g = v;
                r = apply_kernel5(raw, red_row ? mhc_rb_at_g_row : mhc_rb_at_g_col, y, x);
                b = apply_kernel5(raw, red_row ? mhc_rb_at_g_col : mhc_rb_at_g_row, y, x);
                break;
            }
            out.at(0, y, x) = static_cast<T>(std::clamp(r, 0.0, 1.0));
            out.at(1, y, x) = static_cast<T>(std::clamp(g, 0.0, 1.0));
            out.at(2, y, x) = static_cast<T>(std::clamp(b, 0.0, 1.0));
        }
    return out;
}

inline void require_row_sum_one(const Matrix3& ccm)
{
    for (const auto& row : ccm)
        if (!std::isfinite(row[0] + row[1] + row[2]) || std::abs(row[0] + row[1] + row[2] - 1.0) > 1e-9)
            throw ValueError("apply_ccm: rows of the colour matrix must sum to 1");
}

/// Per-pixel 3x3 colour transform of every 3-channel sample in a batch.
template <typename T>
Tensor<T> apply_ccm(const Tensor<T>& rgb, const Matrix3& ccm)
{
    require_row_sum_one(ccm);
    if (rgb.c() != 3) throw DimensionError("apply_ccm: expected 3 channels, got " + rgb.shape().str());
    Tensor<T> out(rgb.shape());
    const std::size_t hw = static_cast<std::size_t>(rgb.h()) * rgb.w();
    for (int n = 0; n < rgb.n(); ++n) {
        const T* in[3] = {rgb.plane(n, 0), rgb.plane(n, 1), rgb.plane(n, 2)};
        for (int r = 0; r < 3; ++r) {
            T* o = out.plane(n, r);
            for (std::size_t i = 0; i < hw; ++i)
                o[i] = static_cast<T>(ccm[r][0] * in[0][i] + ccm[r][1] * in[1][i] + ccm[r][2] * in[2][i]);
        }
    }
    return out;
}

template <typename T>
RgbImage<T> apply_ccm(const RgbImage<T>& rgb, const Matrix3& ccm)
{
    return RgbImage<T>(apply_ccm(rgb.tensor(), ccm));
}

template <typename T>
Tensor<T> gamma_correct(Tensor<T> t, double epsilon = 1e-8)
{
    for (auto& v : t.values()) v = gamma_curve(v, epsilon);
    return t;
}

template <typename T>
Tensor<T> mu_law(Tensor<T> t, double mu = 100.0)
{
    for (auto& v : t.values()) v = mu_law_curve(v, mu);
    return t;
}

/// Colour correction followed by the mode's tone curve.
template <typename T>
Tensor<T> post_process(const Tensor<T>& camera_rgb, const IspConfig& cfg)
{
    Tensor<T> z = apply_ccm(camera_rgb, cfg.ccm);
    return cfg.mode == ToneMode::gamma ? gamma_correct(std::move(z), cfg.epsilon) : mu_law(std::move(z), cfg.mu);
}

template <typename T>
RgbImage<T> post_process(const RgbImage<T>& camera_rgb, const IspConfig& cfg)
{
    return RgbImage<T>(post_process(camera_rgb.tensor(), cfg));
}

/// Vector-Jacobian product of post_process at camera_rgb.
template <typename T>
Tensor<T> post_process_backward(const Tensor<T>& camera_rgb, const Tensor<T>& grad_out, const IspConfig& cfg)
{
    camera_rgb.require_same(grad_out, "post_process_backward");
    const Tensor<T> z = apply_ccm(camera_rgb, cfg.ccm);
    Tensor<T> gz(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const T d = cfg.mode == ToneMode::gamma ? gamma_curve_derivative(z[i], cfg.epsilon) : mu_law_derivative(z[i], cfg.mu);
        gz[i] = d * grad_out[i];
    }
    Tensor<T> gx(z.shape());
    const std::size_t hw = static_cast<std::size_t>(z.h()) * z.w();
    for (int n = 0; n < z.n(); ++n)
        for (int c = 0; c < 3; ++c) {
            T* o = gx.plane(n, c);
            for (int r = 0; r < 3; ++r) {
                const T* g = gz.plane(n, r);
                const T m = static_cast<T>(cfg.ccm[r][c]);
                for (std::size_t i = 0; i < hw; ++i) o[i] += m * g[i];
            }
        }
    return gx;
}

} // namespace lsf
