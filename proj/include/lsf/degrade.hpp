#pragma once

#include "lsf/raw.hpp"
#include "lsf/rng.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace lsf {

/// Pinhole intrinsics of the synthetic camera.
struct Intrinsics {
    int height = 0, width = 0;
    double focal = 0, cx = 0, cy = 0;

    /// Focal length 0.85 * width, principal point at the image centre.
    static Intrinsics default_for(int height, int width)
    {
        return {height, width, 0.85 * width, (width - 1) / 2.0, (height - 1) / 2.0};
    }
};

/// Camera shake during a long exposure. Frame 0 is the reference pose; rotation
/// sample t (t >= 1) rotates frame t-1 into frame t. Sample 0 is unused.
struct Trajectory {
    int frame_count = 1;
    std::vector<std::array<double, 3>> angular_velocity; // radians per frame about x, y, z
    int skip_k = 0;
};

/// Per-frame displacement maps, cumulative from frame 0. Flow t at pixel p is how far
/// the scene content at p has moved by frame t, so frame t reads the reference at p - flow.
struct FlowStack {
    int frame_count = 0, height = 0, width = 0;
    std::vector<std::vector<std::array<float, 2>>> flows; // [frame][y * width + x] = (dx, dy)

    [[nodiscard]] const std::array<float, 2>& at(int t, int y, int x) const { return flows[t][static_cast<std::size_t>(y) * width + x]; }
};

struct NoiseParams {
    double sigma_s = 0.0;
    double sigma_r = 0.0;
    double exposure_ratio = 30.0;
};

struct ColorDistortion {
    double c_red = 1.0;
    double c_blue = 1.0;

    static ColorDistortion sample(Rng& rng) { return {uniform(rng, 0.7, 0.9), uniform(rng, 0.7, 0.9)}; }
};

enum class ExposureBranch { long_exposure, short_exposure };

namespace detail {

using Mat3 = std::array<std::array<double, 3>, 3>;

inline Mat3 matmul(const Mat3& a, const Mat3& b)
{
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
    return r;
}

/// Rodrigues rotation for an axis-angle vector.
inline Mat3 rotation(const std::array<double, 3>& w)
{
    const double th = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
    Mat3 r{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    if (th == 0) return r;
    const double kx = w[0] / th, ky = w[1] / th, kz = w[2] / th;
    const double c = std::cos(th), s = std::sin(th), v = 1 - c;
    r = {{{c + kx * kx * v, kx * ky * v - kz * s, kx * kz * v + ky * s},
          {ky * kx * v + kz * s, c + ky * ky * v, ky * kz * v - kx * s},
          {kz * kx * v - ky * s, kz * ky * v + kx * s, c + kz * kz * v}}};
    return r;
}

inline std::vector<Mat3> cumulative_rotations(const Trajectory& traj)
{
    std::vector<Mat3> out(traj.frame_count);
    out[0] = rotation({0, 0, 0});
    for (int t = 1; t < traj.frame_count; ++t) out[t] = matmul(rotation(traj.angular_velocity[t]), out[t - 1]);
    return out;
}

// Displacement of pixel (x, y) under the rotation-only homography K R K^-1.
inline std::array<double, 2> rotate_pixel(const Mat3& r, const Intrinsics& k, double x, double y)
{
    const double u = (x - k.cx) / k.focal, v = (y - k.cy) / k.focal;
    const double px = r[0][0] * u + r[0][1] * v + r[0][2];
    const double py = r[1][0] * u + r[1][1] * v + r[1][2];
    const double pz = r[2][0] * u + r[2][1] * v + r[2][2];
    return {k.cx + k.focal * px / pz - x, k.cy + k.focal * py / pz - y};
}

} // namespace detail

inline FlowStack trajectory_to_flows(const Trajectory& traj, int height, int width, const Intrinsics& k)
{
    if (traj.frame_count < 1 || static_cast<int>(traj.angular_velocity.size()) != traj.frame_count)
        throw ValueError("trajectory_to_flows: malformed trajectory");
    const auto rots = detail::cumulative_rotations(traj);
    FlowStack fs{traj.frame_count, height, width, {}};
    fs.flows.resize(traj.frame_count);
    for (int t = 0; t < traj.frame_count; ++t) {
        auto& f = fs.flows[t];
        f.resize(static_cast<std::size_t>(height) * width);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const auto d = detail::rotate_pixel(rots[t], k, x, y);
                f[static_cast<std::size_t>(y) * width + x] = {static_cast<float>(d[0]), static_cast<float>(d[1])};
            }
    }
    return fs;
}

/// Largest Euclidean displacement between consecutive frames over every pixel.
inline double max_frame_step(const FlowStack& fs)
{
    double m = 0;
    for (int t = 1; t < fs.frame_count; ++t)
        for (std::size_t i = 0; i < fs.flows[t].size(); ++i) {
            const double dx = fs.flows[t][i][0] - fs.flows[t - 1][i][0];
            const double dy = fs.flows[t][i][1] - fs.flows[t - 1][i][1];
            m = std::max(m, std::hypot(dx, dy));
        }
    return m;
}

/// Smoothed Gaussian random-walk gyro trace, rescaled so the worst per-frame pixel
/// step over the whole image equals max_step_px. skip_k is uniform in [0, frame_count/4].
inline Trajectory gen_trajectory(std::uint64_t seed, int frame_count, const Intrinsics& k, double max_step_px = 1.0)
{
    if (frame_count < 1) throw ValueError("gen_trajectory: frame_count must be >= 1");
    if (!(max_step_px > 0) || max_step_px > 1.0) throw ValueError("gen_trajectory: max_step_px must be in (0, 1]");
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Trajectory traj{frame_count, std::vector<std::array<double, 3>>(frame_count, {0, 0, 0}), 0};
    // in-plane roll is weaker than pitch/yaw on handheld devices
    const std::array<double, 3> axis_weight{1.0, 1.0, 0.3};
    std::array<double, 3> vel{gauss(rng), gauss(rng), gauss(rng)};
    for (int t = 1; t < frame_count; ++t) {
        for (int a = 0; a < 3; ++a) {
            vel[a] = 0.85 * vel[a] + 0.5 * gauss(rng);
            traj.angular_velocity[t][a] = vel[a] * axis_weight[a] * 1e-3;
        }
    }
    traj.skip_k = std::uniform_int_distribution<int>(0, frame_count / 4)(rng);
    if (traj.skip_k >= frame_count) traj.skip_k = frame_count - 1;
    if (frame_count == 1) return traj;

    for (int iter = 0; iter < 50; ++iter) {
        const double step = max_frame_step(trajectory_to_flows(traj, k.height, k.width, k));
        if (step == 0) break;
        const double ratio = max_step_px / step;
        if (step <= max_step_px && ratio < 1.001) break;
        const double f = step > max_step_px ? ratio * 0.9999 : ratio;
        for (auto& w : traj.angular_velocity)
            for (auto& v : w) v *= f;
    }
    return traj;
}

/// Uniform translation at constant velocity: flow t = t * (vx, vy).
inline FlowStack constant_velocity_flows(int frame_count, int height, int width, double vx, double vy)
{
    FlowStack fs{frame_count, height, width, {}};
    fs.flows.resize(frame_count);
    for (int t = 0; t < frame_count; ++t)
        fs.flows[t].assign(static_cast<std::size_t>(height) * width, {static_cast<float>(t * vx), static_cast<float>(t * vy)});
    return fs;
}

/// Average of the scene moved by the flows of frames skip_k .. frame_count-1. Samples
/// use bilinear interpolation with border replication.
template <typename T>
IrradianceImage<T> synth_blur(const IrradianceImage<T>& scene, const FlowStack& flows, int skip_k)
{
    if (flows.height != scene.height() || flows.width != scene.width())
        throw DimensionError("synth_blur: flow stack does not cover the scene");
    if (skip_k < 0 || skip_k >= flows.frame_count) throw ValueError("synth_blur: skip_k must be in [0, frame_count)");
    const int h = scene.height(), w = scene.width();
    IrradianceImage<T> out(h, w);
    std::vector<double> acc(static_cast<std::size_t>(3) * h * w, 0.0);
    int count = 0;
    for (int t = skip_k; t < flows.frame_count; ++t, ++count)
        for (int c = 0; c < 3; ++c) {
            const T* plane = scene.tensor().plane(0, c);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const auto& d = flows.at(t, y, x);
                    const double v = detail::sample_clamped(plane, h, w, y - static_cast<double>(d[1]), x - static_cast<double>(d[0]));
                    // running mean keeps a static sequence bit-identical to its input
                    double& m = acc[(static_cast<std::size_t>(c) * h + y) * w + x];
                    m += (v - m) / (count + 1);
                }
        }
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = static_cast<T>(acc[(static_cast<std::size_t>(c) * h + y) * w + x]);
    return out;
}

/// Per-pixel noise variance for a clean level I in the branch's own (unscaled) domain.
/// Short-exposure variance is chosen so that after multiplying by the exposure ratio r
/// it equals r times the long-exposure variance at the matched brightness r*I.
inline double noise_variance(double level, const NoiseParams& np, ExposureBranch branch)
{
    const double i = std::max(level, 0.0);
    if (branch == ExposureBranch::long_exposure) return np.sigma_s * i + np.sigma_r * np.sigma_r;
    const double r = np.exposure_ratio;
    return (np.sigma_s * r * i + np.sigma_r * np.sigma_r) / r;
}

/// Adds zero-mean heteroscedastic Gaussian noise; no clipping.
template <typename T>
Tensor<T> add_noise(Tensor<T> img, const NoiseParams& np, ExposureBranch branch, std::uint64_t seed)
{
    if (np.sigma_s == 0 && np.sigma_r == 0) return img;
    if (np.sigma_s < 0 || np.sigma_r < 0) throw ValueError("add_noise: noise parameters must be non-negative");
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& v : img.values()) v = static_cast<T>(v + std::sqrt(noise_variance(v, np, branch)) * gauss(rng));
    return img;
}

template <typename T>
IrradianceImage<T> apply_color_distortion(IrradianceImage<T> img, const ColorDistortion& cd)
{
    if (!(cd.c_red > 0 && cd.c_red <= 1 && cd.c_blue > 0 && cd.c_blue <= 1))
        throw ValueError("apply_color_distortion: coefficients must lie in (0, 1]");
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            img.at(0, y, x) = static_cast<T>(img.at(0, y, x) * cd.c_red);
            img.at(2, y, x) = static_cast<T>(img.at(2, y, x) * cd.c_blue);
        }
    return img;
}

/// I_l = clip(bayer(blur(sI_r)) + n)
template <typename T>
RawImage<T> make_long_exposure(const IrradianceImage<T>& scaled_scene, const FlowStack& flows, int skip_k,
                               const NoiseParams& np, std::uint64_t seed)
{
    const auto blurred = synth_blur(scaled_scene, flows, skip_k);
    auto raw = bayer_sample(blurred);
    raw = RawImage<T>(add_noise(std::move(raw).tensor(), np, ExposureBranch::long_exposure, seed));
    return clip_unit(std::move(raw));
}

/// I_s = clip(bayer(color(sI_r / r)) + n). Samples already cut off in the scaled
/// scene (>= 1) keep their scaled brightness instead of being divided, so light
/// sources remain saturated in the short frame.
template <typename T>
RawImage<T> make_short_exposure(const IrradianceImage<T>& scaled_scene, double ratio, const ColorDistortion& cd,
                                const NoiseParams& np, std::uint64_t seed)
{
    if (!(ratio > 1)) throw ValueError("make_short_exposure: exposure ratio must exceed 1");
    IrradianceImage<T> dim = scaled_scene;
    for (auto& v : dim.tensor().values()) v = static_cast<T>(v / ratio);
    dim = apply_color_distortion(std::move(dim), cd);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < dim.height(); ++y)
            for (int x = 0; x < dim.width(); ++x)
                if (scaled_scene.at(c, y, x) >= T(1)) dim.at(c, y, x) = scaled_scene.at(c, y, x);
    NoiseParams branch = np;
    branch.exposure_ratio = ratio;
    auto raw = bayer_sample(dim);
    raw = RawImage<T>(add_noise(std::move(raw).tensor(), branch, ExposureBranch::short_exposure, seed));
    return clip_unit(std::move(raw));
}

/// Brightness matching for the network inputs. Gamma mode lifts the short frame to the
/// long frame's brightness (x r); mu-law mode brings both frames down to the unscaled
/// scene (long / s, short x r / s). No clipping: burned-out highlights read as r.
template <typename T>
Tensor<T> scale_short_for_input(Tensor<T> short_raw, double ratio, double scene_scale = 1.0)
{
    if (!(ratio > 0) || !(scene_scale > 0)) throw ValueError("scale_short_for_input: factors must be positive");
    const double f = ratio / scene_scale;
    for (auto& v : short_raw.values()) v = static_cast<T>(v * f);
    return short_raw;
}

template <typename T>
Tensor<T> scale_long_for_input(Tensor<T> long_raw, double scene_scale = 1.0)
{
    if (!(scene_scale > 0)) throw ValueError("scale_long_for_input: scale must be positive");
    if (scene_scale == 1.0) return long_raw;
    for (auto& v : long_raw.values()) v = static_cast<T>(v / scene_scale);
    return long_raw;
}

} // namespace lsf
