#pragma once

#include "lsf/io.hpp"
#include "lsf/isp.hpp"
#include "lsf/raw.hpp"
#include "lsf/rng.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace lsf {

struct SceneParams {
    double scale_s = 2.0;
    std::uint64_t seed = 0;
    int light_source_count = 0;
    double light_source_radius = 3.0;
};

inline constexpr double scale_min = 1.3;
inline constexpr double scale_max = 3.0;
/// Upper bound of the procedural texture; below 1/scale_min so only light sources saturate.
inline constexpr double texture_max = 0.75;
inline constexpr double texture_min = 0.02;
inline constexpr double light_peak_min = 1.2;
inline constexpr double light_peak_max = 2.5;

inline double sample_scale(Rng& rng) { return uniform(rng, scale_min, scale_max); }

template <typename T>
IrradianceImage<T> apply_scale(IrradianceImage<T> img, double s)
{
    if (!(s > 0)) throw ValueError("apply_scale: scale must be positive");
    for (auto& v : img.tensor().values()) v = static_cast<T>(v * s);
    return img;
}

namespace detail {

// One octave of value noise: random lattice every `cell` pixels, bilinearly interpolated.
inline std::vector<double> value_noise(Rng& rng, int height, int width, int cell)
{
    const int gh = height / cell + 2, gw = width / cell + 2;
    std::vector<double> grid(static_cast<std::size_t>(gh) * gw);
    for (auto& g : grid) g = uniform(rng, 0.0, 1.0);
    std::vector<double> out(static_cast<std::size_t>(height) * width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double fy = static_cast<double>(y) / cell, fx = static_cast<double>(x) / cell;
            const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
            const double ly = fy - y0, lx = fx - x0;
            // smoothstep weights give C1 continuity across cells
            const double sy = ly * ly * (3 - 2 * ly), sx = lx * lx * (3 - 2 * lx);
            const double a = grid[y0 * gw + x0], b = grid[y0 * gw + x0 + 1];
            const double c = grid[(y0 + 1) * gw + x0], d = grid[(y0 + 1) * gw + x0 + 1];
            out[static_cast<std::size_t>(y) * width + x] = (1 - sy) * ((1 - sx) * a + sx * b) + sy * ((1 - sx) * c + sx * d);
        }
    return out;
}

} // namespace detail

/// Smooth random colour texture in [texture_min, texture_max] plus Gaussian light
/// sources whose peaks lie in [light_peak_min, light_peak_max]. Light centres are kept
/// far enough apart that each saturating region stays separate.
template <typename T>
IrradianceImage<T> procedural_scene(const SceneParams& params, int height, int width)
{
    require_even(height, width, "procedural_scene");
    Rng rng(params.seed);
    IrradianceImage<T> img(height, width);

    const int base_cell = std::max(4, std::min(height, width) / 4);
    std::vector<double> lum(static_cast<std::size_t>(height) * width, 0.0);
    double weight = 0, amp = 1;
    for (int cell = base_cell; cell >= 2 && amp > 0.1; cell /= 2, amp *= 0.5) {
        const auto octave = detail::value_noise(rng, height, width, cell);
        for (std::size_t i = 0; i < lum.size(); ++i) lum[i] += amp * octave[i];
        weight += amp;
    }
    std::array<std::vector<double>, 3> tint;
    for (auto& t : tint) t = detail::value_noise(rng, height, width, std::max(4, base_cell * 2));

    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * width + x;
                const double l = lum[i] / weight;
                const double v = l * (0.6 + 0.4 * tint[c][i]);
                img.at(c, y, x) = static_cast<T>(texture_min + (texture_max - texture_min) * std::clamp(v, 0.0, 1.0));
            }

    const double r = params.light_source_radius;
    const double min_sep = 7.0 * r;
    const double margin = 2.0 * r;
    std::vector<std::array<double, 2>> centres;
    for (int k = 0; k < params.light_source_count; ++k) {
        std::array<double, 2> ctr{};
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            ctr = {uniform(rng, margin, height - 1 - margin), uniform(rng, margin, width - 1 - margin)};
            placed = true;
            for (const auto& o : centres)
                if (std::hypot(o[0] - ctr[0], o[1] - ctr[1]) < min_sep) placed = false;
        }
        if (!placed) throw ValueError("procedural_scene: cannot place light sources without overlap");
        centres.push_back(ctr);
        const double peak = uniform(rng, light_peak_min, light_peak_max);
        std::array<double, 3> colour{};
        for (auto& cc : colour) cc = uniform(rng, 0.9, 1.0);
        const int y0 = std::max(0, static_cast<int>(ctr[0] - 5 * r)), y1 = std::min(height - 1, static_cast<int>(ctr[0] + 5 * r) + 1);
        const int x0 = std::max(0, static_cast<int>(ctr[1] - 5 * r)), x1 = std::min(width - 1, static_cast<int>(ctr[1] + 5 * r) + 1);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double d2 = (y - ctr[0]) * (y - ctr[0]) + (x - ctr[1]) * (x - ctr[1]);
                const double g = peak * std::exp(-d2 / (2 * r * r));
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<T>(img.at(c, y, x) + g * colour[c]);
            }
    }
    return img;
}

/// Load a linear scene. Accepts 8/16-bit P6 images (3 channels) and tensor files
/// holding either 3-channel irradiance or a 1-channel RGGB mosaic, which is
/// converted with align_downsample. Odd extents are cropped to even.
template <typename T>
IrradianceImage<T> load_irradiance(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) throw IoError("load_irradiance: no such file '" + path.string() + "'");
    const auto ext = path.extension().string();
    Tensor<T> t;
    if (ext == ".ppm" || ext == ".pnm") {
        t = load_ppm<T>(path);
    } else if (ext == ".lsft") {
        t = load_tensor<T>(path);
    } else {
        throw IoError("load_irradiance: unsupported format '" + ext + "'");
    }
    if (t.n() != 1 || (t.c() != 3 && t.c() != 1))
        throw IoError("load_irradiance: expected a 1- or 3-channel image, got " + t.shape().str());
    const int h = t.h() & ~1, w = t.w() & ~1;
    if (h == 0 || w == 0) throw DimensionError("load_irradiance: image too small");
    Tensor<T> cropped(1, t.c(), h, w);
    for (int c = 0; c < t.c(); ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) cropped(0, c, y, x) = std::max(t(0, c, y, x), T(0));
    if (cropped.c() == 1) return align_downsample(RawImage<T>(std::move(cropped)));
    return IrradianceImage<T>(std::move(cropped));
}

/// Training target: clip to [0,1] then ISP post-processing. In gamma mode pass the
/// scaled scene; in mu-law mode pass the unscaled scene.
template <typename T>
RgbImage<T> make_ground_truth(const IrradianceImage<T>& scene, const IspConfig& cfg)
{
    Tensor<T> t = scene.tensor();
    clip_unit_inplace(t);
    return RgbImage<T>(post_process(t, cfg));
}

} // namespace lsf
