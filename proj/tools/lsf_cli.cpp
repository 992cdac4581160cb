#include "lsf/gradcheck.hpp"
#include "lsf/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int exit_ok = 0;
constexpr int exit_usage = 1;
constexpr int exit_check_failed = 2;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string mode;
    std::string out;
};

void add_common(CLI::App* sub, CommonFlags& f)
{
    sub->add_option("--config", f.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "random seed");
    sub->add_option("--mode", f.mode, "tone mode")->check(CLI::IsMember({"gamma", "mulaw"}));
    sub->add_option("--out", f.out, "output path");
}

lsf::RunConfig resolve(const CommonFlags& f)
{
    lsf::RunConfig cfg = f.config.empty() ? lsf::RunConfig{} : lsf::load_config(f.config);
    if (f.seed) cfg.seed = *f.seed;
    if (!f.mode.empty()) cfg.mode = lsf::parse_tone_mode(f.mode);
    if (!f.out.empty()) cfg.out = f.out;
    cfg.validate();
    return cfg;
}

lsf::IspConfig isp_for(const lsf::RunConfig& cfg, const lsf::Checkpoint& ck)
{
    lsf::IspConfig isp = cfg.isp();
    isp.mode = ck.mode;
    return isp;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Long/short exposure fusion: data synthesis, training and evaluation"};
    app.require_subcommand(1);

    CommonFlags gen_f, train_f, infer_f, eval_f, grad_f, bench_f;

    auto* gen = app.add_subcommand("gen-data", "synthesise a dataset directory");
    add_common(gen, gen_f);

    auto* train = app.add_subcommand("train", "train a model on a dataset");
    add_common(train, train_f);
    std::string train_dataset, resume, train_input = "raw";
    train->add_option("--dataset", train_dataset, "dataset directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);
    train->add_option("--input", train_input, "network input")->check(CLI::IsMember({"raw", "srgb"}));

    auto* infer = app.add_subcommand("infer", "render one pair to a 16-bit PPM");
    add_common(infer, infer_f);
    std::string infer_ckpt, infer_dataset, long_path, short_path;
    int infer_index = 0;
    infer->add_option("--checkpoint", infer_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
    auto* ds_opt = infer->add_option("--dataset", infer_dataset, "dataset directory")->check(CLI::ExistingDirectory);
    infer->add_option("--index", infer_index, "sample index in the dataset")->needs(ds_opt);
    auto* long_opt = infer->add_option("--long", long_path, "packed long exposure tensor")->check(CLI::ExistingFile);
    auto* short_opt = infer->add_option("--short", short_path, "packed short exposure tensor")->check(CLI::ExistingFile);
    long_opt->needs(short_opt)->excludes(ds_opt);
    short_opt->needs(long_opt)->excludes(ds_opt);

    auto* eval = app.add_subcommand("eval", "PSNR / SSIM over a dataset");
    add_common(eval, eval_f);
    std::string eval_ckpt, eval_dataset;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_option("--dataset", eval_dataset, "dataset directory")->required()->check(CLI::ExistingDirectory);

    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
    add_common(grad, grad_f);

    auto* bench = app.add_subcommand("bench", "time the forward pass");
    add_common(bench, bench_f);
    std::string bench_ckpt;
    int bench_size = 128, bench_repeats = 3;
    bench->add_option("--checkpoint", bench_ckpt, "checkpoint (default: freshly built model)")->check(CLI::ExistingFile);
    bench->add_option("--size", bench_size, "packed input side length")->check(CLI::PositiveNumber);
    bench->add_option("--repeats", bench_repeats, "timed repetitions")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            const auto cfg = resolve(gen_f);
            const auto man = lsf::generate_dataset(cfg, cfg.out);
            std::cout << "wrote " << man.samples.size() << " samples to " << cfg.out.string() << '\n';
        } else if (*train) {
            const auto cfg = resolve(train_f);
            lsf::TrainOptions opt;
            opt.dataset = train_dataset;
            opt.out = cfg.out;
            opt.kind = train_input == "raw" ? lsf::InputKind::raw : lsf::InputKind::srgb;
            if (!resume.empty()) opt.resume = resume;
            opt.log = &std::cout;
            const auto sum = lsf::train(cfg, opt);
            std::cout << "epochs " << sum.epochs_completed << " steps " << sum.steps << " checkpoint "
                      << sum.last_checkpoint.string() << '\n';
        } else if (*infer) {
            const auto cfg = resolve(infer_f);
            const auto ck = lsf::load_checkpoint(infer_ckpt);
            const auto isp = isp_for(cfg, ck);
            const auto kind = lsf::input_kind_for(ck.model.config);
            lsf::Tensor<float> l, s;
            if (!infer_dataset.empty()) {
                const auto man = lsf::read_manifest(infer_dataset);
                if (infer_index < 0 || infer_index >= static_cast<int>(man.samples.size()))
                    throw lsf::ValueError("--index out of range");
                const auto pair = lsf::load_sample<float>(infer_dataset, man.samples[infer_index]);
                l = pair.long_in;
                s = pair.short_in;
            } else if (!long_path.empty()) {
                l = lsf::load_tensor<float>(long_path);
                s = lsf::load_tensor<float>(short_path);
            } else {
                throw lsf::ValueError("infer needs --dataset/--index or --long/--short");
            }
            const auto img = lsf::render(ck.model, lsf::network_input(l, isp, kind), lsf::network_input(s, isp, kind), isp);
            auto path = cfg.out;
            if (path.extension() != ".ppm") path += ".ppm";
            lsf::save_ppm16(path, img);
            std::cout << "wrote " << path.string() << " (" << img.w() << "x" << img.h() << ")\n";
        } else if (*eval) {
            const auto cfg = resolve(eval_f);
            const auto ck = lsf::load_checkpoint(eval_ckpt);
            std::filesystem::create_directories(cfg.out);
            std::ofstream csv(cfg.out / "eval.csv", std::ios::trunc);
            const auto sum = lsf::evaluate(ck.model, eval_dataset, isp_for(cfg, ck), &csv);
            std::printf("samples %zu mean_psnr %.4f mean_ssim %.6f\n", sum.samples.size(), sum.mean_psnr, sum.mean_ssim);
        } else if (*grad) {
            const auto cfg = resolve(grad_f);
            lsf::GradCheckOptions opt;
            opt.seed = cfg.seed;
            bool ok = true;
            for (const auto& r : lsf::run_gradchecks(lsf::default_grad_cases(cfg.seed), opt)) {
                std::printf("%-24s max_rel_err %.3e  probes %5zu  %s\n", r.name.c_str(), r.max_rel_error, r.probes,
                            r.passed ? "PASS" : "FAIL");
                ok = ok && r.passed;
            }
            return ok ? exit_ok : exit_check_failed;
        } else if (*bench) {
            const auto cfg = resolve(bench_f);
            const auto model = bench_ckpt.empty() ? lsf::LsfNet<float>::build(cfg.net, cfg.seed) : lsf::load_checkpoint(bench_ckpt).model;
            const double ms = lsf::bench_forward_ms(model, bench_size, bench_size, bench_repeats);
            std::printf("params %zu input %dx%dx%d forward_ms %.2f\n", model.parameter_count(), model.config.in_channels,
                        bench_size, bench_size, ms);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    }
    return exit_ok;
}
