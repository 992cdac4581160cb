#pragma once

#include "lsf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lsf {

enum class ImageKind {
    irradiance, ///< linear 3-channel scene radiance, unbounded above
    raw,        ///< single-channel RGGB mosaic
    packed,     ///< half-resolution R, G1, G2, B planes
    rgb,        ///< 3-channel camera RGB or display sRGB
};

template <ImageKind K>
inline constexpr int kind_channels = (K == ImageKind::raw) ? 1 : (K == ImageKind::packed) ? 4 : 3;

/// Planar image with a channel count fixed by its kind. Storage is a batch-of-one
/// tensor so images move into the network without copies of layout logic.
template <typename T, ImageKind K>
class Image {
public:
    static constexpr int channels = kind_channels<K>;

    Image() = default;
    Image(int height, int width, T fill = T(0)) : t_(1, channels, height, width, fill) {}
    explicit Image(Tensor<T> t) : t_(std::move(t))
    {
        if (t_.n() != 1 || t_.c() != channels)
            throw DimensionError("image expects (1," + std::to_string(channels) + ",H,W), got " + t_.shape().str());
    }

    [[nodiscard]] int height() const noexcept { return t_.h(); }
    [[nodiscard]] int width() const noexcept { return t_.w(); }
    T& at(int c, int y, int x) noexcept { return t_(0, c, y, x); }
    const T& at(int c, int y, int x) const noexcept { return t_(0, c, y, x); }
    T& operator()(int y, int x) noexcept
        requires(channels == 1)
    {
        return t_(0, 0, y, x);
    }
    const T& operator()(int y, int x) const noexcept
        requires(channels == 1)
    {
        return t_(0, 0, y, x);
    }

    [[nodiscard]] const Tensor<T>& tensor() const& noexcept { return t_; }
    [[nodiscard]] Tensor<T>& tensor() & noexcept { return t_; }
    [[nodiscard]] Tensor<T> tensor() && noexcept { return std::move(t_); }

    friend bool operator==(const Image&, const Image&) = default;

private:
    Tensor<T> t_;
};

template <typename T> using IrradianceImage = Image<T, ImageKind::irradiance>;
template <typename T> using RawImage = Image<T, ImageKind::raw>;
template <typename T> using PackedRaw = Image<T, ImageKind::packed>;
template <typename T> using RgbImage = Image<T, ImageKind::rgb>;

/// Channel index of the RGGB colour filter at raw site (y, x): 0=R, 1=G, 2=B.
constexpr int bayer_color(int y, int x) noexcept
{
    const int py = y & 1, px = x & 1;
    return py == 0 ? (px == 0 ? 0 : 1) : (px == 0 ? 1 : 2);
}

/// Packed plane holding raw site (y, x): 0=R, 1=G1, 2=G2, 3=B.
constexpr int bayer_plane(int y, int x) noexcept { return (y & 1) * 2 + (x & 1); }

inline void require_even(int h, int w, const char* what)
{
    if (h <= 0 || w <= 0 || (h % 2) != 0 || (w % 2) != 0)
        throw DimensionError(std::string(what) + ": dimensions must be positive and even, got " + std::to_string(h) +
                             "x" + std::to_string(w));
}

template <typename T>
RawImage<T> bayer_sample(const IrradianceImage<T>& img)
{
    require_even(img.height(), img.width(), "bayer_sample");
    RawImage<T> raw(img.height(), img.width());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) raw(y, x) = img.at(bayer_color(y, x), y, x);
    return raw;
}

template <typename T>
PackedRaw<T> pack_rggb(const RawImage<T>& raw)
{
    require_even(raw.height(), raw.width(), "pack_rggb");
    PackedRaw<T> out(raw.height() / 2, raw.width() / 2);
    for (int y = 0; y < raw.height(); ++y)
        for (int x = 0; x < raw.width(); ++x) out.at(bayer_plane(y, x), y / 2, x / 2) = raw(y, x);
    return out;
}

template <typename T>
RawImage<T> unpack_rggb(const PackedRaw<T>& packed)
{
    RawImage<T> raw(packed.height() * 2, packed.width() * 2);
    for (int y = 0; y < raw.height(); ++y)
        for (int x = 0; x < raw.width(); ++x) raw(y, x) = packed.at(bayer_plane(y, x), y / 2, x / 2);
    return raw;
}

template <typename T>
void clip_unit_inplace(Tensor<T>& t) noexcept
{
    for (auto& v : t.values()) v = std::min(std::max(v, T(0)), T(1));
}

template <typename T, ImageKind K>
Image<T, K> clip_unit(Image<T, K> img)
{
    clip_unit_inplace(img.tensor());
    return img;
}

namespace detail {

// Bilinear read of a plane with border replication; (fy, fx) in plane pixels.
template <typename T>
T sample_clamped(const T* plane, int h, int w, double fy, double fx)
{
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int x0 = static_cast<int>(std::floor(fx));
    const int y1 = std::min(y0 + 1, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const double ly = fy - y0, lx = fx - x0;
    const double top = (1 - lx) * plane[y0 * w + x0] + lx * plane[y0 * w + x1];
    const double bot = (1 - lx) * plane[y1 * w + x0] + lx * plane[y1 * w + x1];
    return static_cast<T>((1 - ly) * top + ly * bot);
}

} // namespace detail

/// Half-resolution 3-channel image from an RGGB mosaic, every channel phase-aligned
/// to the 2x2 cell centre. G is the mean of the two green samples (already centred);
/// R and B planes are shifted by a quarter of a half-resolution pixel toward the
/// centre with bilinear interpolation and border replication.
template <typename T>
IrradianceImage<T> align_downsample(const RawImage<T>& raw)
{
    require_even(raw.height(), raw.width(), "align_downsample");
    const PackedRaw<T> p = pack_rggb(raw);
    const int h = p.height(), w = p.width();
    IrradianceImage<T> out(h, w);
    const T* red = p.tensor().plane(0, 0);
    const T* blue = p.tensor().plane(0, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            out.at(0, y, x) = detail::sample_clamped(red, h, w, y + 0.25, x + 0.25);
            out.at(1, y, x) = (p.at(1, y, x) + p.at(2, y, x)) / T(2);
            out.at(2, y, x) = detail::sample_clamped(blue, h, w, y - 0.25, x - 0.25);
        }
    return out;
}

} // namespace lsf
