#include "lsf/train.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <sys/wait.h>

using namespace lsf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name)
{
    const auto d = fs::temp_directory_path() / ("lsf_test_harness_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string bytes(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

RunConfig tiny_config()
{
    RunConfig c;
    c.height = c.width = c.patch_size = 32;
    c.scene_count = 3;
    c.frames = 4;
    c.max_light_sources = 1;
    c.batch_size = 2;
    c.epochs = 2;
    c.lr = 1e-3;
    c.checkpoint_every = 1;
    c.net = LsfConfig::toy();
    c.seed = 17;
    return c;
}

const char* tiny_config_text = "height = 32\nwidth = 32\npatch_size = 32\nscene_count = 3\nframes = 4\n"
                               "max_light_sources = 1\nbatch_size = 2\nepochs = 1\nlr = 1e-3\n"
                               "channels = 4, 8, 12, 16\nseed = 17\n";

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(LSF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Reference SSIM: each window weighted with the explicit 2-D Gaussian.
double ssim_oracle(const Tensor<double>& a, const Tensor<double>& b)
{
    const int k = 11;
    double g[k][k], sum = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) sum += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0;
    int planes = 0;
    for (int c = 0; c < a.c(); ++c, ++planes) {
        double acc = 0;
        int windows = 0;
        for (int y = 0; y + k <= a.h(); ++y)
            for (int x = 0; x + k <= a.w(); ++x, ++windows) {
                double mx = 0, my = 0;
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) {
                        mx += g[i][j] / sum * a(0, c, y + i, x + j);
                        my += g[i][j] / sum * b(0, c, y + i, x + j);
                    }
                double vx = 0, vy = 0, cov = 0;
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) {
                        const double dx = a(0, c, y + i, x + j) - mx, dy = b(0, c, y + i, x + j) - my;
                        vx += g[i][j] / sum * dx * dx;
                        vy += g[i][j] / sum * dy * dy;
                        cov += g[i][j] / sum * dx * dy;
                    }
                acc += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        total += acc / windows;
    }
    return total / planes;
}

} // namespace

TEST(Config, ParsesKeysCommentsAndLists)
{
    const auto c = parse_config("# comment\nheight = 64  # trailing\nwidth=48\nsigma_s = 0.1, 0.2\nmode = mulaw\n"
                                "channels = 8,16,24,32\nwb_gains = 1.5, 1, 1.2\nseed = 12345678901234\n\n");
    EXPECT_EQ(c.height, 64);
    EXPECT_EQ(c.width, 48);
    EXPECT_EQ(c.sigma_s_grid, (std::vector<double>{0.1, 0.2}));
    EXPECT_EQ(c.mode, ToneMode::mulaw);
    EXPECT_EQ(c.net.channels, (std::array<int, 4>{8, 16, 24, 32}));
    EXPECT_EQ(c.wb_gains[0], 1.5);
    EXPECT_EQ(c.seed, 12345678901234ull);
    EXPECT_EQ(c.epochs, RunConfig{}.epochs);
}

TEST(Config, RejectsMalformedInput)
{
    EXPECT_THROW(parse_config("no_equals_sign\n"), ConfigError);
    EXPECT_THROW(parse_config("colour = red\n"), ConfigError);
    EXPECT_THROW(parse_config("height = tall\n"), ConfigError);
    EXPECT_THROW(parse_config("channels = 1,2,3\n"), ConfigError);
    EXPECT_THROW(parse_config("mode = hdr\n"), std::invalid_argument);
    EXPECT_THROW(parse_config("height = 40\n").validate(), ConfigError);
    EXPECT_THROW(parse_config("exposure_ratio = 1\n").validate(), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/lsf.cfg"), IoError);
}

TEST(Dataset, GenerationIsByteIdentical)
{
    const auto cfg = tiny_config();
    const auto a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
    const auto man = generate_dataset(cfg, a);
    generate_dataset(cfg, b);
    ASSERT_EQ(man.samples.size(), 3u);
    int files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        ++files;
        EXPECT_EQ(bytes(e.path()), bytes(b / e.path().filename())) << e.path().filename();
    }
    EXPECT_EQ(files, 3 * 3 + 1);
}

TEST(Dataset, ManifestRecordsEnoughToRegenerate)
{
    const auto cfg = tiny_config();
    const auto dir = fresh_dir("regen");
    generate_dataset(cfg, dir);
    const auto man = read_manifest(dir);
    ASSERT_EQ(man.samples.size(), 3u);
    EXPECT_EQ(man.config.height, 32);
    EXPECT_EQ(man.config.seed, 17u);
    for (const auto& m : man.samples) {
        EXPECT_EQ(parse_sample_record(sample_record(m)), m);
        const auto stored = load_sample<float>(dir, m);
        auto meta = m;
        const auto again = make_pair<float>(man.config, meta);
        EXPECT_EQ(again.long_in, stored.long_in);
        EXPECT_EQ(again.short_in, stored.short_in);
        EXPECT_EQ(again.target, stored.target);
        EXPECT_EQ(again.meta.skip_k, m.skip_k);
    }
}

TEST(Dataset, MuLawTargetsKeepHighlightDetail)
{
    auto cfg = tiny_config();
    cfg.height = cfg.width = 64;
    cfg.max_light_sources = 2;
    for (int i = 0; i < 8; ++i) {
        const auto meta = sample_meta(cfg, i);
        if (meta.light_sources == 0) continue;
        const auto scene = scene_for<double>(cfg, meta);
        const auto scaled = apply_scale(scene, meta.scale_s);
        cfg.mode = ToneMode::gamma;
        const auto g = make_pair<double>(cfg, meta).target;
        cfg.mode = ToneMode::mulaw;
        const auto m = make_pair<double>(cfg, meta).target;
        // pixels saturated after scaling: flat white in gamma targets, graded in mu-law targets
        std::vector<double> gv, mv;
        for (int y = 0; y < cfg.height; ++y)
            for (int x = 0; x < cfg.width; ++x)
                if (scaled.at(0, y, x) >= 1 && scaled.at(1, y, x) >= 1 && scaled.at(2, y, x) >= 1) {
                    gv.push_back(g(0, 1, y, x));
                    mv.push_back(m(0, 1, y, x));
                }
        ASSERT_FALSE(gv.empty());
        auto var = [](const std::vector<double>& v) {
            double s = 0, s2 = 0;
            for (double x : v) s += x, s2 += x * x;
            return s2 / v.size() - (s / v.size()) * (s / v.size());
        };
        EXPECT_LT(var(gv), 1e-12);
        EXPECT_GT(var(mv), 1e-5);
        return;
    }
    FAIL() << "no sample with a light source";
}

TEST(Checkpoint, RoundTripPreservesEverything)
{
    const auto dir = fresh_dir("ckpt");
    Checkpoint ck{LsfNet<float>::build(LsfConfig::toy(), 3), std::nullopt};
    ck.mode = ToneMode::mulaw;
    ck.epoch = 7;
    ck.lr = 2.5e-4;
    ck.lr_halve_epochs = 4;
    auto st = nn::AdamState<LsfNet<float>>::for_model(ck.model);
    st.step = 42;
    st.m.dec.tail.weight.fill(0.25f);
    st.v.enc_long.head.bias.fill(0.5f);
    ck.adam = st;
    save_checkpoint(dir / "a.bin", ck);
    const auto back = load_checkpoint(dir / "a.bin");
    EXPECT_EQ(back.model.config, ck.model.config);
    EXPECT_EQ(back.mode, ToneMode::mulaw);
    EXPECT_EQ(back.epoch, 7);
    EXPECT_EQ(back.lr, 2.5e-4);
    EXPECT_EQ(back.lr_halve_epochs, 4);
    ASSERT_TRUE(back.adam.has_value());
    EXPECT_EQ(back.adam->step, 42);
    EXPECT_EQ(back.adam->m.dec.tail.weight, st.m.dec.tail.weight);
    EXPECT_EQ(back.adam->v.enc_long.head.bias, st.v.enc_long.head.bias);
    std::vector<const Tensor<float>*> pa, pb;
    ck.model.visit([&](const std::string&, const Tensor<float>& t) { pa.push_back(&t); });
    back.model.visit([&](const std::string&, const Tensor<float>& t) { pb.push_back(&t); });
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i], *pb[i]);
    save_checkpoint(dir / "b.bin", back);
    EXPECT_EQ(bytes(dir / "a.bin"), bytes(dir / "b.bin"));
}

TEST(Checkpoint, RejectsCorruptFiles)
{
    const auto dir = fresh_dir("corrupt");
    std::ofstream(dir / "junk.bin") << "not a checkpoint";
    EXPECT_THROW(load_checkpoint(dir / "junk.bin"), IoError);
    save_checkpoint(dir / "ok.bin", Checkpoint{LsfNet<float>::build(LsfConfig::toy(), 1), std::nullopt});
    const auto full = bytes(dir / "ok.bin");
    std::ofstream(dir / "short.bin", std::ios::binary) << full.substr(0, full.size() / 2);
    EXPECT_THROW(load_checkpoint(dir / "short.bin"), IoError);
    EXPECT_THROW(load_checkpoint(dir / "missing.bin"), IoError);
}

TEST(Train, ResumeContinuesExactly)
{
    auto cfg = tiny_config();
    const auto data = fresh_dir("resume_data");
    generate_dataset(cfg, data);

    TrainOptions straight{data, fresh_dir("resume_straight"), InputKind::raw, std::nullopt, nullptr};
    cfg.epochs = 3;
    const auto full = train(cfg, straight);
    EXPECT_EQ(full.epochs_completed, 3);
    EXPECT_EQ(full.steps, 6); // 3 samples in batches of 2

    TrainOptions part = straight;
    part.out = fresh_dir("resume_part");
    cfg.epochs = 2;
    const auto first = train(cfg, part);
    EXPECT_EQ(first.steps, 4);
    EXPECT_TRUE(fs::exists(part.out / "checkpoint_0001.bin"));
    EXPECT_TRUE(fs::exists(part.out / "checkpoint_0002.bin"));
    part.resume = first.last_checkpoint;
    cfg.epochs = 1;
    const auto second = train(cfg, part);
    EXPECT_EQ(second.epochs_completed, 3);
    EXPECT_EQ(second.steps, 6);
    EXPECT_EQ(bytes(straight.out / "checkpoint_last.bin"), bytes(part.out / "checkpoint_last.bin"));

    std::ifstream csv(part.out / "loss.csv");
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(csv, line)) rows.push_back(line);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0], "epoch,step,lr,loss");
    EXPECT_EQ(rows[3].substr(0, 4), "3,6,");
    EXPECT_EQ(bytes(straight.out / "loss.csv"), bytes(part.out / "loss.csv"));
}

TEST(Eval, LeavesCheckpointUntouched)
{
    auto cfg = tiny_config();
    cfg.epochs = 1;
    const auto data = fresh_dir("eval_data");
    generate_dataset(cfg, data);
    const auto out = fresh_dir("eval_run");
    const auto sum = train(cfg, {data, out, InputKind::raw, std::nullopt, nullptr});
    const auto before = bytes(sum.last_checkpoint);
    const auto ck = load_checkpoint(sum.last_checkpoint);
    std::ostringstream csv;
    const auto ev = evaluate(ck.model, data, cfg.isp(), &csv);
    EXPECT_EQ(bytes(sum.last_checkpoint), before);
    ASSERT_EQ(ev.samples.size(), 3u);
    for (const auto& s : ev.samples) {
        EXPECT_GT(s.psnr, 0.0);
        EXPECT_LE(s.ssim, 1.0);
    }
    const std::string text = csv.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}

TEST(Metrics, PsnrClosedForms)
{
    Rng rng(1);
    Tensor<double> a(1, 3, 8, 8);
    for (auto& v : a.values()) v = uniform(rng, 0, 1);
    EXPECT_EQ(psnr(a, a), 99.0);
    auto b = a;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += (i % 2 ? 0.1 : -0.1);
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
    EXPECT_NEAR(psnr(Tensor<double>(1, 3, 4, 4, 0.0), Tensor<double>(1, 3, 4, 4, 1.0)), 0.0, 1e-12);
}

TEST(Metrics, SsimMatchesDirectWindowSums)
{
    Rng rng(2);
    Tensor<double> a(1, 3, 20, 24), b(1, 3, 20, 24);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = uniform(rng, 0, 1);
        b[i] = std::clamp(a[i] + uniform(rng, -0.2, 0.2), 0.0, 1.0);
    }
    EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-6);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    EXPECT_THROW(ssim(Tensor<double>(1, 3, 8, 8), Tensor<double>(1, 3, 8, 8)), DimensionError);
}

TEST(Metrics, SsimPenalisesMisalignedStructure)
{
    Tensor<double> a(1, 1, 32, 32), b(1, 1, 32, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            a(0, 0, y, x) = (x / 2) % 2 ? 0.9 : 0.1;
            b(0, 0, y, x) = ((x + 2) / 2) % 2 ? 0.9 : 0.1;
        }
    EXPECT_LT(ssim(a, b), 0.5);
}

TEST(Cli, EndToEndInferIsDeterministic)
{
    const auto dir = fresh_dir("cli");
    std::ofstream(dir / "tiny.cfg") << tiny_config_text;
    const std::string cfg = " --config " + (dir / "tiny.cfg").string();
    ASSERT_EQ(run_cli("gen-data" + cfg + " --out " + (dir / "data").string()), 0);
    ASSERT_EQ(run_cli("train" + cfg + " --dataset " + (dir / "data").string() + " --out " + (dir / "run").string()), 0);
    const auto ckpt = (dir / "run" / "checkpoint_last.bin").string();
    ASSERT_TRUE(fs::exists(ckpt));
    const std::string infer = "infer" + cfg + " --checkpoint " + ckpt + " --dataset " + (dir / "data").string() + " --index 1";
    ASSERT_EQ(run_cli(infer + " --out " + (dir / "a.ppm").string()), 0);
    ASSERT_EQ(run_cli(infer + " --out " + (dir / "b").string()), 0);
    EXPECT_EQ(bytes(dir / "a.ppm"), bytes(dir / "b.ppm"));
    const auto img = load_ppm<double>(dir / "a.ppm");
    EXPECT_EQ(img.shape(), (Shape{1, 3, 32, 32}));
    EXPECT_EQ(run_cli("eval" + cfg + " --checkpoint " + ckpt + " --dataset " + (dir / "data").string() + " --out " +
                      (dir / "eval").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "eval" / "eval.csv"));
}

TEST(Cli, ExitCodes)
{
    const auto dir = fresh_dir("cli_codes");
    std::ofstream(dir / "bad.cfg") << "height = 40\n";
    std::ofstream(dir / "unknown.cfg") << "flux = 3\n";
    EXPECT_NE(run_cli(""), 0);
    EXPECT_NE(run_cli("frobnicate"), 0);
    EXPECT_NE(run_cli("train"), 0); // --dataset is required
    EXPECT_EQ(run_cli("gen-data --config " + (dir / "bad.cfg").string()), 1);
    EXPECT_EQ(run_cli("gen-data --config " + (dir / "unknown.cfg").string()), 1);
    EXPECT_EQ(run_cli("infer --checkpoint " + (dir / "bad.cfg").string() + " --out " + (dir / "x").string()), 1);
    EXPECT_EQ(run_cli("gradcheck"), 0);
}
