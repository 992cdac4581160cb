#pragma once

// Finite-difference verification of every hand-written backward pass.
//
// Each case is a pure function of its input tensors. The scalar probed is
// L = <r, f(inputs)> for a fixed random r, so the analytic gradient is backward(r).

#include "lsf/isp.hpp"
#include "lsf/nn/conv.hpp"
#include "lsf/nn/deform_conv.hpp"
#include "lsf/nn/layers.hpp"
#include "lsf/nn/optim.hpp"
#include "lsf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace lsf {

using Tensors = std::vector<Tensor<double>>;

struct GradCase {
    std::string name;
    std::vector<std::string> input_names;
    Tensors inputs;
    std::function<Tensor<double>(const Tensors&)> forward;
    std::function<Tensors(const Tensors&, const Tensor<double>&)> backward;
};

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-3;
    /// Denominator floor so near-zero gradients are compared absolutely.
    double floor = 1e-6;
    /// Entries probed per input tensor; smaller tensors are probed exhaustively.
    std::size_t max_probes = 256;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0;
    std::string worst_input;
    std::size_t probes = 0;
    bool passed = false;
};

inline double relative_error(double analytic, double numeric, double floor)
{
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline GradCheckResult check_gradients(const GradCase& gc, const GradCheckOptions& opt = {})
{
    Rng rng(split_seed(opt.seed, std::hash<std::string>{}(gc.name)));
    std::normal_distribution<double> normal;
    const Tensor<double> y0 = gc.forward(gc.inputs);
    Tensor<double> r(y0.shape());
    for (auto& v : r.values()) v = normal(rng);
    const Tensors analytic = gc.backward(gc.inputs, r);
    if (analytic.size() != gc.inputs.size()) throw DimensionError("gradcheck '" + gc.name + "': backward arity mismatch");

    GradCheckResult res{gc.name, 0.0, {}, 0, false};
    Tensors probe = gc.inputs;
    for (std::size_t k = 0; k < probe.size(); ++k) {
        analytic[k].require_same(probe[k], "gradcheck");
        std::vector<std::size_t> idx(probe[k].size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        if (idx.size() > opt.max_probes) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(opt.max_probes);
        }
        for (std::size_t i : idx) {
            const double orig = probe[k][i];
            probe[k][i] = orig + opt.step;
            const double up = dot(r, gc.forward(probe));
            probe[k][i] = orig - opt.step;
            const double down = dot(r, gc.forward(probe));
            probe[k][i] = orig;
            const double e = relative_error(analytic[k][i], (up - down) / (2 * opt.step), opt.floor);
            if (e > res.max_rel_error) {
                res.max_rel_error = e;
                res.worst_input = k < gc.input_names.size() ? gc.input_names[k] : std::to_string(k);
            }
            ++res.probes;
        }
    }
    res.passed = res.max_rel_error < opt.tolerance;
    return res;
}

namespace gradcheck_detail {

inline Tensor<double> random_tensor(Rng& rng, Shape s, double lo = -1, double hi = 1)
{
    Tensor<double> t(s);
    for (auto& v : t.values()) v = uniform(rng, lo, hi);
    return t;
}

// Values in [lo, hi] with random sign, keeping |v| away from kinks at 0.
inline Tensor<double> away_from_zero(Rng& rng, Shape s, double lo = 0.1, double hi = 1)
{
    Tensor<double> t(s);
    for (auto& v : t.values()) v = (rng() & 1 ? 1 : -1) * uniform(rng, lo, hi);
    return t;
}

inline GradCase conv_case(Rng& rng, const std::string& name, int cin, int cout, int k, int size)
{
    auto proto = nn::make_conv<double>(cin, cout, k);
    const int stride = proto.stride, pad = proto.pad;
    return {name,
            {"x", "weight", "bias"},
            {random_tensor(rng, {2, cin, size, size}), random_tensor(rng, proto.weight.shape()), random_tensor(rng, proto.bias.shape())},
            [=](const Tensors& in) { return nn::conv2d_forward(nn::ConvLayer<double>{in[1], in[2], stride, pad}, in[0]); },
            [=](const Tensors& in, const Tensor<double>& gy) {
                const nn::ConvLayer<double> l{in[1], in[2], stride, pad};
                auto g = l.zeros_like();
                auto gx = nn::conv2d_backward(l, in[0], gy, g);
                return Tensors{gx, g.weight, g.bias};
            }};
}

} // namespace gradcheck_detail

/// Every differentiable operation used by the network, at small random sizes.
inline std::vector<GradCase> default_grad_cases(std::uint64_t seed = 0)
{
    using namespace gradcheck_detail;
    Rng rng(seed);
    std::vector<GradCase> cases;
    cases.push_back(conv_case(rng, "conv3x3", 3, 4, 3, 6));
    cases.push_back(conv_case(rng, "conv2x2_stride2", 3, 5, 2, 6));
    cases.push_back(conv_case(rng, "conv1x1", 4, 3, 1, 5));

    {
        auto proto = nn::make_conv_transpose<double>(4, 3);
        cases.push_back({"conv_transpose2x2",
                         {"x", "weight", "bias"},
                         {random_tensor(rng, {2, 4, 3, 4}), random_tensor(rng, proto.weight.shape()), random_tensor(rng, proto.bias.shape())},
                         [](const Tensors& in) { return nn::conv_transpose2d_forward(nn::ConvLayer<double>{in[1], in[2], 2, 0}, in[0]); },
                         [](const Tensors& in, const Tensor<double>& gy) {
                             const nn::ConvLayer<double> l{in[1], in[2], 2, 0};
                             auto g = l.zeros_like();
                             auto gx = nn::conv_transpose2d_backward(l, in[0], gy, g);
                             return Tensors{gx, g.weight, g.bias};
                         }});
    }
    {
        // Offsets keep a fractional part in [0.2, 0.8] so no probe crosses a bilinear kink;
        // magnitudes up to 2.8 push some taps outside the 5x5 image.
        auto proto = nn::make_conv<double>(3, 2, 3);
        Tensor<double> off(1, nn::offset_channels, 5, 5);
        for (auto& v : off.values()) v = std::uniform_int_distribution<int>(-3, 2)(rng) + uniform(rng, 0.2, 0.8);
        Tensors in{random_tensor(rng, {1, 3, 5, 5}), random_tensor(rng, proto.weight.shape()), random_tensor(rng, proto.bias.shape()), off};
        cases.push_back({"deform_conv3x3",
                         {"x", "weight", "bias", "offsets"},
                         std::move(in),
                         [](const Tensors& in) { return nn::deform_conv2d_forward(nn::ConvLayer<double>{in[1], in[2], 1, 1}, in[0], in[3]); },
                         [](const Tensors& in, const Tensor<double>& gy) {
                             const nn::ConvLayer<double> l{in[1], in[2], 1, 1};
                             auto g = l.zeros_like();
                             Tensor<double> goff;
                             auto gx = nn::deform_conv2d_backward(l, in[0], in[3], gy, g, goff);
                             return Tensors{gx, g.weight, g.bias, goff};
                         }});
    }
    cases.push_back({"leaky_relu",
                     {"x"},
                     {away_from_zero(rng, {2, 3, 4, 4})},
                     [](const Tensors& in) { return nn::leaky_relu_forward(in[0]); },
                     [](const Tensors& in, const Tensor<double>& gy) { return Tensors{nn::leaky_relu_backward(in[0], gy)}; }});
    cases.push_back({"sigmoid",
                     {"x"},
                     {random_tensor(rng, {2, 3, 4, 4}, -4, 4)},
                     [](const Tensors& in) { return nn::sigmoid_forward(in[0]); },
                     [](const Tensors& in, const Tensor<double>& gy) {
                         return Tensors{nn::sigmoid_backward(nn::sigmoid_forward(in[0]), gy)};
                     }});
    cases.push_back({"pixel_shuffle",
                     {"x"},
                     {random_tensor(rng, {2, 12, 3, 4})},
                     [](const Tensors& in) { return nn::pixel_shuffle_forward(in[0], 2); },
                     [](const Tensors&, const Tensor<double>& gy) { return Tensors{nn::pixel_shuffle_backward(gy, 2)}; }});
    cases.push_back({"upsample2x",
                     {"x"},
                     {random_tensor(rng, {2, 3, 3, 5})},
                     [](const Tensors& in) { return nn::upsample2x_forward(in[0], 2.0); },
                     [](const Tensors& in, const Tensor<double>& gy) { return Tensors{nn::upsample2x_backward(gy, in[0].shape(), 2.0)}; }});
    {
        auto c1 = nn::make_conv<double>(3, 3, 3), c2 = nn::make_conv<double>(3, 3, 3);
        cases.push_back({"resblock",
                         {"x", "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias"},
                         {random_tensor(rng, {2, 3, 5, 5}), random_tensor(rng, c1.weight.shape()), random_tensor(rng, c1.bias.shape()),
                          random_tensor(rng, c2.weight.shape()), random_tensor(rng, c2.bias.shape())},
                         [](const Tensors& in) {
                             const nn::ResBlock<double> b{{in[1], in[2], 1, 1}, {in[3], in[4], 1, 1}};
                             return nn::resblock_forward(b, in[0]);
                         },
                         [](const Tensors& in, const Tensor<double>& gy) {
                             const nn::ResBlock<double> b{{in[1], in[2], 1, 1}, {in[3], in[4], 1, 1}};
                             nn::ResBlockCache<double> cache;
                             nn::resblock_forward(b, in[0], &cache);
                             auto g = b.zeros_like();
                             auto gx = nn::resblock_backward(b, cache, gy, g);
                             return Tensors{gx, g.conv1.weight, g.conv1.bias, g.conv2.weight, g.conv2.bias};
                         }});
    }
    for (ToneMode mode : {ToneMode::gamma, ToneMode::mulaw}) {
        // Prediction in (0.05, 1) keeps every CCM output positive and away from the
        // gamma floor; the target is shifted so no residual sits at an L1 tie.
        IspConfig isp;
        isp.mode = mode;
        const Tensor<double> pred = random_tensor(rng, {1, 3, 4, 4}, 0.3, 0.9);
        Tensor<double> target = post_process(pred, isp);
        for (auto& v : target.values()) v += (rng() & 1 ? 1 : -1) * uniform(rng, 0.05, 0.2);
        cases.push_back({"l1_through_isp_" + to_string(mode),
                         {"prediction"},
                         {pred},
                         [isp, target](const Tensors& in) {
                             return Tensor<double>(1, 1, 1, 1, nn::l1_loss(post_process(in[0], isp), target).value);
                         },
                         [isp, target](const Tensors& in, const Tensor<double>& gy) {
                             auto loss = nn::l1_loss(post_process(in[0], isp), target);
                             loss.grad *= gy[0];
                             return Tensors{post_process_backward(in[0], loss.grad, isp)};
                         }});
    }
    return cases;
}

inline std::vector<GradCheckResult> run_gradchecks(const std::vector<GradCase>& cases, const GradCheckOptions& opt = {})
{
    std::vector<GradCheckResult> out;
    out.reserve(cases.size());
    for (const auto& c : cases) out.push_back(check_gradients(c, opt));
    return out;
}

} // namespace lsf
