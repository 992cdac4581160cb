#pragma once

// Training, evaluation and inference drivers built on LsfNet.

#include "lsf/checkpoint.hpp"
#include "lsf/config.hpp"
#include "lsf/dataset.hpp"
#include "lsf/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <vector>

namespace lsf {

template <typename T>
struct Batch {
    Tensor<T> long_in, short_in, target;
};

/// Copies a (c, size, size) window at (y0, x0) out of sample n.
template <typename T>
Tensor<T> crop(const Tensor<T>& t, int n, int y0, int x0, int h, int w)
{
    if (y0 < 0 || x0 < 0 || y0 + h > t.h() || x0 + w > t.w()) throw DimensionError("crop: window outside tensor " + t.shape().str());
    Tensor<T> out(1, t.c(), h, w);
    for (int c = 0; c < t.c(); ++c)
        for (int y = 0; y < h; ++y) std::copy_n(&t(n, c, y0 + y, x0), w, &out(0, c, y, 0));
    return out;
}

/// Random patches, `patch` raw pixels square, from the listed samples. Network inputs
/// are prepared for `kind`; targets are the aligned full-resolution windows.
template <typename T>
Batch<T> make_batch(const std::vector<SamplePair<T>>& data, const std::vector<std::size_t>& picks, int patch, Rng& rng,
                    const IspConfig& isp, InputKind kind)
{
    if (patch <= 0 || patch % 2) throw ValueError("make_batch: patch must be positive and even");
    const int half = patch / 2;
    std::vector<Tensor<T>> l, s, g;
    for (std::size_t i : picks) {
        const auto& p = data.at(i);
        const int ph = p.long_in.h(), pw = p.long_in.w();
        if (half > ph || half > pw) throw DimensionError("make_batch: patch larger than sample");
        const int py = std::uniform_int_distribution<int>(0, ph - half)(rng);
        const int px = std::uniform_int_distribution<int>(0, pw - half)(rng);
        l.push_back(network_input(crop(p.long_in, 0, py, px, half, half), isp, kind));
        s.push_back(network_input(crop(p.short_in, 0, py, px, half, half), isp, kind));
        g.push_back(crop(p.target, 0, 2 * py, 2 * px, patch, patch));
    }
    return {stack_samples<T>(l), stack_samples<T>(s), stack_samples<T>(g)};
}

/// Whole samples as one batch, no cropping.
template <typename T>
Batch<T> full_batch(const std::vector<SamplePair<T>>& data, const IspConfig& isp, InputKind kind)
{
    std::vector<Tensor<T>> l, s, g;
    for (const auto& p : data) {
        l.push_back(network_input(p.long_in, isp, kind));
        s.push_back(network_input(p.short_in, isp, kind));
        g.push_back(p.target);
    }
    return {stack_samples<T>(l), stack_samples<T>(s), stack_samples<T>(g)};
}

/// L1 between post_process(prediction) and the target. With `grads`, also
/// accumulates the parameter gradient.
template <typename T>
double training_loss(const LsfNet<T>& model, const Batch<T>& b, const IspConfig& isp, LsfNet<T>* grads = nullptr)
{
    LsfTape<T> tape;
    const Tensor<T> pred = model.forward(b.long_in, b.short_in, grads ? &tape : nullptr);
    const auto loss = nn::l1_loss(post_process(pred, isp), b.target);
    if (grads) model.backward(tape, post_process_backward(pred, loss.grad, isp), *grads);
    return loss.value;
}

/// Display-ready output: post-processed and clipped to [0, 1].
template <typename T>
Tensor<T> render(const LsfNet<T>& model, const Tensor<T>& long_in, const Tensor<T>& short_in, const IspConfig& isp)
{
    Tensor<T> out = post_process(model.forward(long_in, short_in), isp);
    clip_unit_inplace(out);
    return out;
}

/// One ADAM step on `b`; returns the loss before the update.
template <typename T>
double train_step(LsfNet<T>& model, nn::AdamState<LsfNet<T>>& state, const Batch<T>& b, const IspConfig& isp, double lr,
                  const nn::AdamConfig& acfg = {})
{
    LsfNet<T> grads = model.zeros_like();
    const double loss = training_loss(model, b, isp, &grads);
    nn::adam_step(model, grads, state, lr, acfg);
    return loss;
}

// ---- dataset-level drivers ------------------------------------------------------------

inline std::vector<SamplePair<float>> load_dataset(const std::filesystem::path& dir, const Manifest& man)
{
    std::vector<SamplePair<float>> data;
    data.reserve(man.samples.size());
    for (const auto& m : man.samples) data.push_back(load_sample<float>(dir, m));
    return data;
}

inline LsfConfig net_config_for(const RunConfig& cfg, InputKind kind)
{
    LsfConfig n = cfg.net;
    n.in_channels = kind == InputKind::raw ? 4 : 12;
    return n;
}

struct TrainOptions {
    std::filesystem::path dataset;
    std::filesystem::path out;
    InputKind kind = InputKind::raw;
    std::optional<std::filesystem::path> resume;
    std::ostream* log = nullptr;
};

struct TrainSummary {
    int epochs_completed = 0;
    std::int64_t steps = 0;
    std::vector<double> epoch_loss;
    std::filesystem::path last_checkpoint;
};

/// Epoch loop with step-decayed ADAM. Writes loss.csv and checkpoints into opt.out.
/// A resumed run continues the epoch count, optimiser step and moments.
inline TrainSummary train(const RunConfig& cfg, const TrainOptions& opt)
{
    cfg.validate();
    const Manifest man = read_manifest(opt.dataset);
    if (man.samples.empty()) throw ValueError("train: dataset has no samples");
    const auto data = load_dataset(opt.dataset, man);
    // Tone mode and sizes are properties of the data, not of the training config.
    IspConfig isp = cfg.isp();
    isp.mode = man.config.mode;
    const int patch = std::min({cfg.patch_size, data.front().target.h(), data.front().target.w()});

    Checkpoint ck{LsfNet<float>::build(net_config_for(cfg, opt.kind), split_seed(cfg.seed, 0x6e6574)), std::nullopt};
    ck.mode = isp.mode;
    ck.lr = cfg.lr;
    ck.lr_halve_epochs = cfg.lr_halve_epochs;
    if (opt.resume) {
        ck = load_checkpoint(*opt.resume);
        if (ck.mode != isp.mode) throw ValueError("train: checkpoint tone mode differs from the dataset");
    }
    if (!ck.adam) ck.adam = nn::AdamState<LsfNet<float>>::for_model(ck.model);
    const nn::AdamConfig acfg{ck.lr, 0.9, 0.999, 1e-8, ck.lr_halve_epochs};

    std::filesystem::create_directories(opt.out);
    std::ofstream csv(opt.out / "loss.csv", opt.resume ? std::ios::app : std::ios::trunc);
    if (!opt.resume) csv << "epoch,step,lr,loss\n";

    TrainSummary sum;
    const int first = ck.epoch;
    for (int epoch = first; epoch < first + cfg.epochs; ++epoch) {
        Rng rng(split_seed(cfg.seed, 0x10000 + static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = nn::scheduled_lr(acfg, epoch);
        double total = 0;
        int batches = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::vector<std::size_t> picks(order.begin() + at,
                                                 order.begin() + std::min(order.size(), at + cfg.batch_size));
            const auto b = make_batch(data, picks, patch, rng, isp, opt.kind);
            total += train_step(ck.model, *ck.adam, b, isp, lr, acfg);
            ++batches;
        }
        const double mean = total / batches;
        ck.epoch = epoch + 1;
        sum.epoch_loss.push_back(mean);
        csv << ck.epoch << ',' << ck.adam->step << ',' << lr << ',' << format_double(mean) << '\n' << std::flush;
        if (opt.log) *opt.log << "epoch " << ck.epoch << " loss " << mean << " lr " << lr << '\n';
        const bool last = epoch + 1 == first + cfg.epochs;
        if (last || (cfg.checkpoint_every > 0 && ck.epoch % cfg.checkpoint_every == 0)) {
            char name[48];
            std::snprintf(name, sizeof name, "checkpoint_%04d.bin", ck.epoch);
            save_checkpoint(opt.out / name, ck);
            save_checkpoint(opt.out / "checkpoint_last.bin", ck);
            sum.last_checkpoint = opt.out / "checkpoint_last.bin";
        }
    }
    if (cfg.epochs == 0) {
        save_checkpoint(opt.out / "checkpoint_last.bin", ck);
        sum.last_checkpoint = opt.out / "checkpoint_last.bin";
    }
    sum.epochs_completed = ck.epoch;
    sum.steps = ck.adam->step;
    return sum;
}

struct SampleScore {
    int index = 0;
    double psnr = 0;
    double ssim = 0;
};

struct EvalSummary {
    std::vector<SampleScore> samples;
    double mean_psnr = 0;
    double mean_ssim = 0;
};

inline InputKind input_kind_for(const LsfConfig& net) { return net.in_channels == 12 ? InputKind::srgb : InputKind::raw; }

/// PSNR and SSIM of the clipped rendering against every target in the dataset.
/// Appends per-sample rows to `csv` when given.
inline EvalSummary evaluate(const LsfNet<float>& model, const std::filesystem::path& dataset, const IspConfig& isp,
                            std::ostream* csv = nullptr)
{
    const Manifest man = read_manifest(dataset);
    const InputKind kind = input_kind_for(model.config);
    EvalSummary out;
    if (csv) *csv << "index,psnr,ssim\n";
    for (const auto& m : man.samples) {
        const auto s = load_sample<float>(dataset, m);
        const auto img = render(model, network_input(s.long_in, isp, kind), network_input(s.short_in, isp, kind), isp);
        const SampleScore sc{m.index, psnr(img, s.target), ssim(img, s.target)};
        out.samples.push_back(sc);
        if (csv) *csv << sc.index << ',' << format_double(sc.psnr) << ',' << format_double(sc.ssim) << '\n';
        out.mean_psnr += sc.psnr;
        out.mean_ssim += sc.ssim;
    }
    if (!out.samples.empty()) {
        out.mean_psnr /= static_cast<double>(out.samples.size());
        out.mean_ssim /= static_cast<double>(out.samples.size());
    }
    return out;
}

/// Mean forward-pass wall time in milliseconds at the given packed size.
inline double bench_forward_ms(const LsfNet<float>& model, int packed_h, int packed_w, int repeats)
{
    const Tensor<float> a(1, model.config.in_channels, packed_h, packed_w, 0.25f);
    const Tensor<float> b(1, model.config.in_channels, packed_h, packed_w, 0.3f);
    (void)model.forward(a, b);
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) (void)model.forward(a, b);
    const std::chrono::duration<double, std::milli> dt = std::chrono::steady_clock::now() - t0;
    return dt.count() / std::max(1, repeats);
}

} // namespace lsf
