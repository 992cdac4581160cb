// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "lsf/gradcheck.hpp"
#include "lsf/train.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

using namespace lsf;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double noise_rel_tol = 0.02;
constexpr double noise_ratio_rel_tol = 0.03;
constexpr std::size_t noise_samples = 1'000'000;
constexpr double blur_tol = 1e-3;
constexpr int blur_size = 128;
constexpr int trajectories = 100;
constexpr double closed_form_tol = 1e-12;
constexpr int monotone_pairs = 10'000;
constexpr int bijection_images = 1000;
constexpr double grad_tol = 1e-3;
constexpr double zero_offset_tol = 1e-6;
constexpr int overfit_pairs = 8;
constexpr int overfit_size = 64;
constexpr int overfit_steps = 200;
constexpr double overfit_lr = 3e-3;
constexpr double overfit_loss_ratio = 0.10;
constexpr double overfit_psnr_db = 30.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

std::string bytes(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

double variance_about(const Tensor<double>& t, double centre, double scale)
{
    double s = 0, s2 = 0;
    for (double v : t.values()) {
        const double d = (v - centre) * scale;
        s += d;
        s2 += d * d;
    }
    const double n = static_cast<double>(t.size());
    return s2 / n - (s / n) * (s / n);
}

Outcome noise_monte_carlo()
{
    const NoiseParams np{0.01, 0.05, 30.0};
    const double level = 0.25, expect = 0.01 * level + 0.05 * 0.05;
    const Tensor<double> clean(1, 1, 1000, noise_samples / 1000, level);
    const double v_long = variance_about(add_noise(clean, np, ExposureBranch::long_exposure, 101), level, 1.0);
    const Tensor<double> dim(1, 1, 1000, noise_samples / 1000, level / np.exposure_ratio);
    const double v_short = variance_about(add_noise(dim, np, ExposureBranch::short_exposure, 202), level / np.exposure_ratio,
                                          np.exposure_ratio);
    const double e1 = std::abs(v_long / expect - 1), e2 = std::abs(v_short / v_long / 30.0 - 1);
    return {e1 <= noise_rel_tol && e2 <= noise_ratio_rel_tol,
            fmt("var %.6f (rel err %.4f), short/long %.3f (rel err %.4f)", v_long, e1, v_short / v_long, e2)};
}

Outcome blur_oracle()
{
    const int n = blur_size, frames = 9;
    const auto scene = procedural_scene<double>({2.0, 5, 2, 3.0}, n, n);
    const auto out = synth_blur(scene, constant_velocity_flows(frames, n, n, 1.0, 0.0), 0);
    double worst = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < n; ++y)
            for (int x = frames; x < n - frames; ++x) {
                double box = 0;
                for (int t = 0; t < frames; ++t) box += scene.at(c, y, x - t);
                worst = std::max(worst, std::abs(out.at(c, y, x) - box / frames));
            }
    const auto k = Intrinsics::default_for(n, n);
    double worst_step = 0;
    for (int s = 0; s < trajectories; ++s) {
        const auto fs = trajectory_to_flows(gen_trajectory(1000 + s, 16, k, 1.0), n, n, k);
        for (int t = 1; t < fs.frame_count; ++t)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    const auto& a = fs.at(t, y, x);
                    const auto& b = fs.at(t - 1, y, x);
                    worst_step = std::max(worst_step, std::hypot(double(a[0]) - b[0], double(a[1]) - b[1]));
                }
    }
    return {worst <= blur_tol && worst_step <= 1.0 + 1e-6,
            fmt("box max diff %.2e, max per-frame step %.4f px over %.0f trajectories", worst, worst_step, trajectories)};
}

Outcome isp_closed_forms()
{
    const double g = std::abs(gamma_curve(0.5) - std::exp(std::log(0.5) / 2.22));
    const double m = std::abs(mu_law_curve(0.1, 100.0) - std::log(11.0) / std::log(101.0));
    const bool ends = std::abs(gamma_curve(1.0) - 1) <= closed_form_tol && std::abs(mu_law_curve(1.0) - 1) <= closed_form_tol &&
                      mu_law_curve(0.0) == 0.0 && gamma_curve(0.0) <= 1e-3;
    Rng rng(7);
    int violations = 0;
    for (int i = 0; i < monotone_pairs; ++i) {
        double a = uniform(rng, 0, 1), b = uniform(rng, 0, 1);
        if (a > b) std::swap(a, b);
        if (a == b) continue;
        if (!(gamma_curve(std::max(a, 1e-8)) <= gamma_curve(b)) || !(mu_law_curve(a) < mu_law_curve(b))) ++violations;
    }
    return {g <= closed_form_tol && m <= closed_form_tol && ends && violations == 0,
            fmt("|gamma err| %.1e, |mulaw err| %.1e, ", g, m) + (ends ? "endpoints ok" : "endpoints wrong") +
                fmt(", monotone violations %.0f", violations)};
}

Outcome bayer_bijection()
{
    Rng rng(8);
    int bad = 0;
    for (int i = 0; i < bijection_images; ++i) {
        const int h = 2 * std::uniform_int_distribution<int>(1, 32)(rng), w = 2 * std::uniform_int_distribution<int>(1, 32)(rng);
        RawImage<double> raw(h, w);
        for (auto& v : raw.tensor().values()) v = uniform(rng, 0, 1);
        const auto packed = pack_rggb(raw);
        if (!(unpack_rggb(packed) == raw) || !(pack_rggb(unpack_rggb(packed)) == packed)) ++bad;
    }
    return {bad == 0, fmt("%.0f images, %.0f mismatches", bijection_images, bad)};
}

Outcome gradient_suite()
{
    GradCheckOptions opt;
    opt.tolerance = grad_tol;
    bool ok = true;
    double worst = 0;
    std::string worst_name;
    const auto results = run_gradchecks(default_grad_cases(2024), opt);
    for (const auto& r : results) {
        ok = ok && r.passed;
        if (r.max_rel_error >= worst) {
            worst = r.max_rel_error;
            worst_name = r.name;
        }
    }
    return {ok, fmt("%.0f cases, worst max rel err %.2e (", static_cast<double>(results.size()), worst) + worst_name + ")"};
}

Outcome zero_offset()
{
    Rng rng(9);
    const auto net = LsfNet<double>::build(LsfConfig::full(), 9);
    double worst = 0;
    for (int t = 0; t < num_scales; ++t) {
        const int c = net.config.channels[t], s = 8;
        Tensor<double> fl(1, c, s, s), fsh(1, c, s, s);
        for (auto& v : fl.values()) v = uniform(rng, -1, 1);
        for (auto& v : fsh.values()) v = uniform(rng, -1, 1);
        const Tensor<double> coarser(1, nn::offset_channels, s / 2, s / 2);
        const auto r = net.align_block(t, fl, fsh, t == num_scales - 1 ? nullptr : &coarser);
        worst = std::max(worst, max_abs_diff(r.aligned, nn::conv2d_forward(net.align[t].dcn, fl)));
    }
    return {worst <= zero_offset_tol, fmt("max diff %.2e over 4 scales", worst)};
}

struct OverfitRun {
    double initial_loss = 0, final_loss = 0, psnr_db = 0;
};

RunConfig overfit_config()
{
    RunConfig c;
    c.height = c.width = c.patch_size = overfit_size;
    c.scene_count = overfit_pairs;
    c.net = LsfConfig::toy();
    c.seed = 7;
    return c;
}

OverfitRun overfit(InputKind kind)
{
    const auto cfg = overfit_config();
    std::vector<SamplePair<float>> data;
    for (int i = 0; i < overfit_pairs; ++i) data.push_back(make_pair<float>(cfg, sample_meta(cfg, i)));
    const auto isp = cfg.isp();
    const auto batch = full_batch(data, isp, kind);
    auto net = LsfNet<float>::build(net_config_for(cfg, kind), 1);
    auto st = nn::AdamState<LsfNet<float>>::for_model(net);
    OverfitRun r;
    r.initial_loss = training_loss(net, batch, isp);
    for (int s = 0; s < overfit_steps; ++s) train_step(net, st, batch, isp, overfit_lr);
    r.final_loss = training_loss(net, batch, isp);
    r.psnr_db = psnr(render(net, batch.long_in, batch.short_in, isp), batch.target);
    return r;
}

OverfitRun raw_run;

Outcome trainability()
{
    raw_run = overfit(InputKind::raw);
    const double ratio = raw_run.final_loss / raw_run.initial_loss;
    return {ratio <= overfit_loss_ratio && raw_run.psnr_db >= overfit_psnr_db,
            fmt("loss %.4f -> %.4f (ratio %.3f, need <= 0.10), PSNR %.2f dB (need >= 30)", raw_run.initial_loss,
                raw_run.final_loss, ratio, raw_run.psnr_db)};
}

Outcome raw_vs_srgb()
{
    if (raw_run.initial_loss == 0) raw_run = overfit(InputKind::raw);
    const auto srgb = overfit(InputKind::srgb);
    return {raw_run.psnr_db >= srgb.psnr_db, fmt("raw %.2f dB vs sRGB %.2f dB", raw_run.psnr_db, srgb.psnr_db)};
}

Outcome dataset_determinism()
{
    const auto root = fs::temp_directory_path() / "lsf_acceptance_gen";
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "gen.cfg") << "height = 64\nwidth = 64\npatch_size = 64\nscene_count = 4\nseed = 99\n";
    int files = 0, diff = 0;
    for (const char* run : {"a", "b"}) {
        const std::string cmd = std::string(LSF_CLI_PATH) + " gen-data --config " + (root / "gen.cfg").string() + " --out " +
                                (root / run).string() + " > /dev/null";
        if (std::system(cmd.c_str()) != 0) return {false, "gen-data failed"};
    }
    for (const auto& e : fs::directory_iterator(root / "a")) {
        ++files;
        if (bytes(e.path()) != bytes(root / "b" / e.path().filename())) ++diff;
    }
    return {files == 4 * 3 + 1 && diff == 0, fmt("%.0f files compared, %.0f differ", files, diff)};
}

} // namespace

int main()
{
    std::printf("[N/A ] full-scale fidelity: not reproducible at desk scale (needs the full corpus and long training); "
                "covered by the property criteria below\n");
    const std::vector<Criterion> criteria{
        {"noise-model Monte Carlo", 10, noise_monte_carlo},
        {"blur oracle and trajectory step bound", 30, blur_oracle},
        {"ISP closed forms", 5, isp_closed_forms},
        {"Bayer/packing bijection", 10, bayer_bijection},
        {"layer gradient suite", 120, gradient_suite},
        {"zero-offset equivalence", 10, zero_offset},
        {"trainability (toy overfit)", 900, trainability},
        {"raw input >= sRGB input (toy overfit)", 1800, raw_vs_srgb},
        {"dataset determinism", 60, dataset_determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_budget = secs <= c.budget_s;
        const bool pass = o.pass && in_budget;
        failed += !pass;
        std::printf("[%s] %s: %s; %.1f s (budget %.0f s%s)\n", pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), secs,
                    c.budget_s, in_budget ? "" : ", exceeded");
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failed, criteria.size());
    return failed ? 1 : 0;
}
