#include "lsf/scene.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <queue>

using namespace lsf;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name)
{
    const auto d = fs::temp_directory_path() / ("lsf_test_scene_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// 4-connected components of pixels where any channel is >= threshold.
int count_regions(const IrradianceImage<double>& img, double threshold)
{
    const int h = img.height(), w = img.width();
    std::vector<int> label(static_cast<std::size_t>(h) * w, 0);
    auto hot = [&](int y, int x) {
        for (int c = 0; c < 3; ++c)
            if (img.at(c, y, x) >= threshold) return true;
        return false;
    };
    int regions = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!hot(y, x) || label[y * w + x]) continue;
            ++regions;
            std::queue<std::pair<int, int>> q;
            q.push({y, x});
            label[y * w + x] = regions;
            while (!q.empty()) {
                const auto [cy, cx] = q.front();
                q.pop();
                const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const int ny = cy + dy[k], nx = cx + dx[k];
                    if (ny < 0 || nx < 0 || ny >= h || nx >= w || label[ny * w + nx] || !hot(ny, nx)) continue;
                    label[ny * w + nx] = regions;
                    q.push({ny, nx});
                }
            }
        }
    return regions;
}

} // namespace

TEST(LoadIrradiance, SixteenBitFullScaleAndZero)
{
    const auto dir = temp_dir("ppm");
    Tensor<double> checker(1, 3, 4, 6);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 6; ++x) checker(0, c, y, x) = (x + y) % 2 ? 1.0 : 0.0;
    save_ppm16(dir / "checker.ppm", checker);
    const auto img = load_irradiance<double>(dir / "checker.ppm");
    EXPECT_EQ(img.tensor(), checker);
}

TEST(LoadIrradiance, OddExtentsCroppedToEven)
{
    const auto dir = temp_dir("odd");
    Tensor<double> t(1, 3, 5, 7, 0.25);
    save_tensor(dir / "odd.lsft", t, TensorDtype::f64);
    const auto img = load_irradiance<double>(dir / "odd.lsft");
    EXPECT_EQ(img.height(), 4);
    EXPECT_EQ(img.width(), 6);
    for (double v : img.tensor().values()) EXPECT_EQ(v, 0.25);
}

TEST(LoadIrradiance, MosaicTensorIsAlignedDown)
{
    const auto dir = temp_dir("mosaic");
    save_tensor(dir / "raw.lsft", Tensor<double>(1, 1, 8, 8, 0.5), TensorDtype::f64);
    const auto img = load_irradiance<double>(dir / "raw.lsft");
    EXPECT_EQ(img.height(), 4);
    for (double v : img.tensor().values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(LoadIrradiance, Errors)
{
    const auto dir = temp_dir("err");
    EXPECT_THROW(load_irradiance<double>(dir / "missing.ppm"), IoError);
    std::ofstream(dir / "x.png") << "not an image";
    EXPECT_THROW(load_irradiance<double>(dir / "x.png"), IoError);
    std::ofstream(dir / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
    EXPECT_THROW(load_irradiance<double>(dir / "bad.ppm"), IoError);
}

TEST(ProceduralScene, NoLightsStaysWithinTextureBound)
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto img = procedural_scene<double>({2.0, seed, 0, 3.0}, 64, 48);
        for (double v : img.tensor().values()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 0.8);
        }
    }
}

TEST(ProceduralScene, Deterministic)
{
    const SceneParams p{1.5, 1234, 2, 3.0};
    EXPECT_EQ(procedural_scene<double>(p, 64, 64), procedural_scene<double>(p, 64, 64));
    const SceneParams q{1.5, 1235, 2, 3.0};
    EXPECT_FALSE(procedural_scene<double>(p, 64, 64) == procedural_scene<double>(q, 64, 64));
}

TEST(ProceduralScene, LightSourcesAreSeparateSaturatedRegions)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto scaled = apply_scale(procedural_scene<double>({1.3, seed, 3, 3.0}, 96, 96), 1.3);
        EXPECT_EQ(count_regions(scaled, 1.0), 3) << "seed " << seed;
    }
    const auto none = apply_scale(procedural_scene<double>({1.3, 5, 0, 3.0}, 96, 96), 1.3);
    EXPECT_EQ(count_regions(none, 1.0), 0);
}

TEST(ProceduralScene, RejectsOddSize) { EXPECT_THROW(procedural_scene<double>({}, 63, 64), DimensionError); }

TEST(ApplyScale, Definition)
{
    const IrradianceImage<double> half(2, 2, 0.5);
    EXPECT_EQ(apply_scale(half, 1.0), half);
    const auto doubled = apply_scale(half, 2.0);
    for (double v : doubled.tensor().values()) EXPECT_EQ(v, 1.0);
    EXPECT_THROW(apply_scale(half, 0.0), ValueError);
    EXPECT_THROW(apply_scale(half, -1.0), ValueError);
}

TEST(ApplyScale, LoopOracleAndLinearity)
{
    Rng rng(9);
    IrradianceImage<double> a(6, 4), b(6, 4);
    for (auto& v : a.tensor().values()) v = uniform(rng, 0, 1);
    for (auto& v : b.tensor().values()) v = uniform(rng, 0, 1);
    const auto sa = apply_scale(a, 1.7);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 4; ++x) EXPECT_EQ(sa.at(c, y, x), a.at(c, y, x) * 1.7);
    auto sum = a;
    sum.tensor() += b.tensor();
    auto sep = apply_scale(a, 1.7);
    sep.tensor() += apply_scale(b, 1.7).tensor();
    EXPECT_LE(max_abs_diff(apply_scale(sum, 1.7).tensor(), sep.tensor()), 1e-15);
}

TEST(GroundTruth, ClosedForms)
{
    IspConfig gamma;
    const auto zero = make_ground_truth(IrradianceImage<double>(4, 4, 0.0), gamma);
    for (double v : zero.tensor().values()) EXPECT_NEAR(v, 2.49e-4, 5e-7);
    for (ToneMode m : {ToneMode::gamma, ToneMode::mulaw}) {
        IspConfig cfg;
        cfg.mode = m;
        const auto one = make_ground_truth(IrradianceImage<double>(4, 4, 1.0), cfg);
        for (double v : one.tensor().values()) EXPECT_NEAR(v, 1.0, 1e-12);
        // clipping happens first: radiance above 1 renders as white
        const auto over = make_ground_truth(IrradianceImage<double>(4, 4, 3.0), cfg);
        for (double v : over.tensor().values()) EXPECT_NEAR(v, 1.0, 1e-12);
    }
    const auto half = make_ground_truth(IrradianceImage<double>(4, 4, 0.5), gamma);
    for (double v : half.tensor().values())
        EXPECT_NEAR(v, std::pow(0.5, 1 / 2.22), 1e-12);
    EXPECT_NEAR(std::pow(0.5, 1 / 2.22), 0.7318, 1e-4);
}

TEST(GroundTruth, GammaMonotoneInRadiance)
{
    Rng rng(10);
    IspConfig cfg;
    cfg.ccm = identity_ccm;
    for (int i = 0; i < 200; ++i) {
        const double a = uniform(rng, 0, 1.5), b = uniform(rng, 0, 1.5);
        const auto ga = make_ground_truth(IrradianceImage<double>(2, 2, std::min(a, b)), cfg);
        const auto gb = make_ground_truth(IrradianceImage<double>(2, 2, std::max(a, b)), cfg);
        EXPECT_LE(ga.at(0, 0, 0), gb.at(0, 0, 0));
    }
}
