#pragma once

// Long/short exposure fusion network: two raw encoders, per-scale deformable
// alignment and sigmoid deghosting of the long branch, and a coarse-to-fine decoder
// ending in a pixel shuffle to full-resolution camera RGB.

#include "lsf/isp.hpp"
#include "lsf/nn/conv.hpp"
#include "lsf/nn/deform_conv.hpp"
#include "lsf/nn/layers.hpp"
#include "lsf/nn/optim.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace lsf {

inline constexpr int num_scales = 4;
inline constexpr double tail_init_gain = 0.1;

struct LsfConfig {
    std::array<int, num_scales> channels{32, 64, 128, 256};
    /// 4 for packed RGGB input; 12 for the pixel-unshuffled sRGB ablation.
    int in_channels = 4;

    static LsfConfig full() { return {}; }
    static LsfConfig toy() { return {{4, 8, 12, 16}, 4}; }

    void validate() const
    {
        for (int c : channels)
            if (c <= 0) throw ValueError("LsfConfig: channel counts must be positive");
        if (in_channels <= 0) throw ValueError("LsfConfig: in_channels must be positive");
    }
    friend bool operator==(const LsfConfig&, const LsfConfig&) = default;
};

template <typename T>
struct Encoder {
    nn::ConvLayer<T> head;
    std::array<nn::ResBlock<T>, num_scales> res;
    std::array<nn::ConvLayer<T>, num_scales - 1> down;

    template <typename F>
    void visit(const std::string& name, F&& f)
    {
        head.visit(name + ".head", f);
        for (int t = 0; t < num_scales; ++t) res[t].visit(name + ".res" + std::to_string(t), f);
        for (int t = 0; t < num_scales - 1; ++t) down[t].visit(name + ".down" + std::to_string(t), f);
    }
};

/// Offsets from concatenated features plus upsampled coarser offsets, then a
/// deformable convolution of the long features.
template <typename T>
struct AlignBlock {
    nn::ConvLayer<T> feat;   // (long, short) -> C
    nn::ConvLayer<T> offset; // (upsampled offsets, feat) -> 18, zero-initialised
    nn::ConvLayer<T> dcn;    // deformable C -> C

    template <typename F>
    void visit(const std::string& name, F&& f)
    {
        feat.visit(name + ".feat", f);
        offset.visit(name + ".offset", f);
        dcn.visit(name + ".dcn", f);
    }
};

template <typename T>
struct DeghostBlock {
    nn::ConvLayer<T> attention; // (long, short) -> C, followed by sigmoid

    template <typename F>
    void visit(const std::string& name, F&& f)
    {
        attention.visit(name + ".attention", f);
    }
};

template <typename T>
struct Decoder {
    std::array<nn::ConvLayer<T>, num_scales> fuse;
    std::array<nn::ResBlock<T>, num_scales> res;
    std::array<nn::ConvLayer<T>, num_scales - 1> up; // up[t] maps scale t+1 -> t
    nn::ConvLayer<T> tail;                           // 1x1 to 12 channels before the pixel shuffle

    template <typename F>
    void visit(const std::string& name, F&& f)
    {
        for (int t = 0; t < num_scales; ++t) fuse[t].visit(name + ".fuse" + std::to_string(t), f);
        for (int t = 0; t < num_scales; ++t) res[t].visit(name + ".res" + std::to_string(t), f);
        for (int t = 0; t < num_scales - 1; ++t) up[t].visit(name + ".up" + std::to_string(t), f);
        tail.visit(name + ".tail", f);
    }
};

template <typename T>
struct EncoderTape {
    Tensor<T> input, head_pre;
    std::array<nn::ResBlockCache<T>, num_scales> res;
    std::array<Tensor<T>, num_scales> features;
    std::array<Tensor<T>, num_scales - 1> down_pre;
};

template <typename T>
struct AlignTape {
    Tensor<T> cat_features, feat_pre, cat_offsets, offsets, aligned;
};

template <typename T>
struct DeghostTape {
    Tensor<T> cat, weights, output;
};

template <typename T>
struct DecoderTape {
    std::array<Tensor<T>, num_scales> input, fuse_pre;
    std::array<nn::ResBlockCache<T>, num_scales> res;
    std::array<Tensor<T>, num_scales> res_out;
    std::array<Tensor<T>, num_scales - 1> up_pre;
    Tensor<T> tail_out;
};

/// Everything backward() needs from a forward pass.
template <typename T>
struct LsfTape {
    EncoderTape<T> enc_long, enc_short;
    std::array<AlignTape<T>, num_scales> align;
    std::array<DeghostTape<T>, num_scales> deghost;
    DecoderTape<T> dec;
};

template <typename T>
struct AlignResult {
    Tensor<T> aligned;
    Tensor<T> offsets;
};

template <typename T>
class LsfNet {
public:
    using value_type = T;

    LsfConfig config;
    Encoder<T> enc_long, enc_short;
    std::array<AlignBlock<T>, num_scales> align;
    std::array<DeghostBlock<T>, num_scales> deghost;
    Decoder<T> dec;

    /// Deterministic initialisation: He fan-in weights (the output conv scaled by
    /// tail_init_gain), zero biases, and zero offset predictors so every deformable
    /// convolution starts as a plain convolution.
    static LsfNet build(const LsfConfig& cfg, std::uint64_t seed)
    {
        cfg.validate();
        LsfNet net = shaped(cfg);
        Rng rng(seed);
        net.visit_layers([&](nn::ConvLayer<T>& l, bool transposed) { nn::he_init(l, rng, transposed); });
        for (auto& a : net.align) {
            a.offset.weight.fill(T(0));
            a.offset.bias.fill(T(0));
        }
        // Early predictions stay near the target range instead of far up the tone curve.
        net.dec.tail.weight *= T(tail_init_gain);
        return net;
    }

    /// All-zero parameters with the architecture of `cfg`.
    static LsfNet shaped(const LsfConfig& cfg)
    {
        using namespace nn;
        const auto& ch = cfg.channels;
        LsfNet net;
        net.config = cfg;
        for (Encoder<T>* e : {&net.enc_long, &net.enc_short}) {
            e->head = make_conv<T>(cfg.in_channels, ch[0], 3);
            for (int t = 0; t < num_scales; ++t) e->res[t] = {make_conv<T>(ch[t], ch[t], 3), make_conv<T>(ch[t], ch[t], 3)};
            for (int t = 0; t < num_scales - 1; ++t) e->down[t] = make_conv<T>(ch[t], ch[t + 1], 2);
        }
        for (int t = 0; t < num_scales; ++t) {
            net.align[t].feat = make_conv<T>(2 * ch[t], ch[t], 3);
            net.align[t].offset = make_conv<T>(offset_channels + ch[t], offset_channels, 3);
            net.align[t].dcn = make_conv<T>(ch[t], ch[t], 3);
            net.deghost[t].attention = make_conv<T>(2 * ch[t], ch[t], 3);
            const int fuse_in = t == num_scales - 1 ? 2 * ch[t] : 3 * ch[t];
            net.dec.fuse[t] = make_conv<T>(fuse_in, ch[t], 3);
            net.dec.res[t] = {make_conv<T>(ch[t], ch[t], 3), make_conv<T>(ch[t], ch[t], 3)};
        }
        for (int t = 0; t < num_scales - 1; ++t) net.dec.up[t] = make_conv_transpose<T>(ch[t + 1], ch[t]);
        net.dec.tail = make_conv<T>(ch[0], 12, 1);
        return net;
    }

    [[nodiscard]] LsfNet zeros_like() const { return shaped(config); }

    template <typename U>
    [[nodiscard]] LsfNet<U> cast() const
    {
        LsfNet<U> out = LsfNet<U>::shaped(config);
        std::vector<const Tensor<T>*> src;
        visit([&](const std::string&, const Tensor<T>& t) { src.push_back(&t); });
        std::size_t i = 0;
        out.visit([&](const std::string&, Tensor<U>& t) { t = src[i++]->template cast<U>(); });
        return out;
    }

    /// Enumerates (name, tensor) for every parameter in a fixed order.
    template <typename F>
    void visit(F&& f)
    {
        enc_long.visit("enc_long", f);
        enc_short.visit("enc_short", f);
        for (int t = 0; t < num_scales; ++t) align[t].visit("align" + std::to_string(t), f);
        for (int t = 0; t < num_scales; ++t) deghost[t].visit("deghost" + std::to_string(t), f);
        dec.visit("dec", f);
    }

    /// Read-only enumeration; the visitor receives const tensors.
    template <typename F>
    void visit(F&& f) const
    {
        const_cast<LsfNet&>(*this).visit([&](const std::string& name, Tensor<T>& t) { f(name, std::as_const(t)); });
    }

    [[nodiscard]] std::size_t parameter_count() const
    {
        std::size_t n = 0;
        visit([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
        return n;
    }

    // ---- forward pieces ---------------------------------------------------------

    /// Head conv, then per scale a ResBlock followed (except at the coarsest scale)
    /// by a 2x2 stride-2 downsampling conv. Returns one feature map per scale.
    std::array<Tensor<T>, num_scales> encode(const Encoder<T>& e, const Tensor<T>& x, EncoderTape<T>* tape = nullptr) const
    {
        using namespace nn;
        if (x.c() != config.in_channels) throw DimensionError("encode: expected " + std::to_string(config.in_channels) + " input channels");
        const int div = 1 << (num_scales - 1);
        if (x.h() % div || x.w() % div)
            throw DimensionError("encode: spatial extents must be divisible by " + std::to_string(div) + ", got " + x.shape().str());
        EncoderTape<T> local;
        EncoderTape<T>& tp = tape ? *tape : local;
        if (tape) tp.input = x;
        tp.head_pre = conv2d_forward(e.head, x);
        Tensor<T> a = leaky_relu_forward(tp.head_pre);
        for (int t = 0; t < num_scales; ++t) {
            tp.features[t] = resblock_forward(e.res[t], a, tape ? &tp.res[t] : nullptr);
            if (t < num_scales - 1) {
                tp.down_pre[t] = conv2d_forward(e.down[t], tp.features[t]);
                a = leaky_relu_forward(tp.down_pre[t]);
            }
        }
        return tp.features;
    }

    /// Offsets from both feature maps and the coarser scale's offsets (absent at the
    /// coarsest scale), then deformable convolution of the long features.
    AlignResult<T> align_block(int t, const Tensor<T>& f_long, const Tensor<T>& f_short, const Tensor<T>* coarser_offsets,
                               AlignTape<T>* tape = nullptr) const
    {
        using namespace nn;
        f_long.require_same(f_short, "align_block");
        const auto& a = align[t];
        AlignTape<T> local;
        AlignTape<T>& tp = tape ? *tape : local;
        tp.cat_features = concat_channels({&f_long, &f_short});
        tp.feat_pre = conv2d_forward(a.feat, tp.cat_features);
        const Tensor<T> feat = leaky_relu_forward(tp.feat_pre);
        const Tensor<T> up = coarser_offsets ? upsample2x_forward(*coarser_offsets, 2.0)
                                             : Tensor<T>(f_long.n(), offset_channels, f_long.h(), f_long.w());
        if (up.h() != f_long.h() || up.w() != f_long.w()) throw DimensionError("align_block: coarser offsets do not match scale");
        tp.cat_offsets = concat_channels({&up, &feat});
        tp.offsets = conv2d_forward(a.offset, tp.cat_offsets);
        tp.aligned = deform_conv2d_forward(a.dcn, f_long, tp.offsets);
        return {tp.aligned, tp.offsets};
    }

    /// F_long * sigmoid(conv(F_long, F_short)).
    Tensor<T> deghost_block(int t, const Tensor<T>& f_long, const Tensor<T>& f_short, DeghostTape<T>* tape = nullptr) const
    {
        using namespace nn;
        f_long.require_same(f_short, "deghost_block");
        DeghostTape<T> local;
        DeghostTape<T>& tp = tape ? *tape : local;
        tp.cat = concat_channels({&f_long, &f_short});
        tp.weights = sigmoid_forward(conv2d_forward(deghost[t].attention, tp.cat));
        tp.output = f_long;
        for (std::size_t i = 0; i < tp.output.size(); ++i) tp.output[i] *= tp.weights[i];
        return tp.output;
    }

    /// Coarse to fine: concat(decoder state, short, long) -> fuse conv -> ResBlock ->
    /// transposed-conv upsample; the finest scale ends with a 1x1 conv and pixel shuffle.
    Tensor<T> decode(const std::array<Tensor<T>, num_scales>& f_short, const std::array<Tensor<T>, num_scales>& f_long,
                     DecoderTape<T>* tape = nullptr) const
    {
        using namespace nn;
        DecoderTape<T> local;
        DecoderTape<T>& tp = tape ? *tape : local;
        Tensor<T> state;
        for (int t = num_scales - 1; t >= 0; --t) {
            tp.input[t] = t == num_scales - 1 ? concat_channels({&f_short[t], &f_long[t]})
                                              : concat_channels({&state, &f_short[t], &f_long[t]});
            tp.fuse_pre[t] = conv2d_forward(dec.fuse[t], tp.input[t]);
            tp.res_out[t] = resblock_forward(dec.res[t], leaky_relu_forward(tp.fuse_pre[t]), tape ? &tp.res[t] : nullptr);
            if (t > 0) {
                tp.up_pre[t - 1] = conv_transpose2d_forward(dec.up[t - 1], tp.res_out[t]);
                state = leaky_relu_forward(tp.up_pre[t - 1]);
            }
        }
        tp.tail_out = conv2d_forward(dec.tail, tp.res_out[0]);
        return pixel_shuffle_forward(tp.tail_out, 2);
    }

    /// (N, in, h, w) x 2 -> (N, 3, 2h, 2w) camera RGB.
    Tensor<T> forward(const Tensor<T>& long_in, const Tensor<T>& short_in, LsfTape<T>* tape = nullptr) const
    {
        long_in.require_same(short_in, "LsfNet::forward");
        LsfTape<T> local;
        LsfTape<T>& tp = tape ? *tape : local;
        const auto fl = encode(enc_long, long_in, &tp.enc_long);
        const auto fs = encode(enc_short, short_in, &tp.enc_short);
        std::array<Tensor<T>, num_scales> fused;
        const Tensor<T>* coarser = nullptr;
        for (int t = num_scales - 1; t >= 0; --t) {
            align_block(t, fl[t], fs[t], coarser, &tp.align[t]);
            coarser = &tp.align[t].offsets;
            fused[t] = deghost_block(t, tp.align[t].aligned, fs[t], &tp.deghost[t]);
        }
        return decode(fs, fused, &tp.dec);
    }

    /// Accumulates every parameter gradient into `grads` given d loss / d output.
    void backward(const LsfTape<T>& tp, const Tensor<T>& grad_out, LsfNet& grads) const
    {
        using namespace nn;
        const auto& ch = config.channels;
        std::array<Tensor<T>, num_scales> g_short, g_fused;

        // decoder
        Tensor<T> g_res = conv2d_backward(dec.tail, tp.dec.res_out[0], pixel_shuffle_backward(grad_out, 2), grads.dec.tail);
        for (int t = 0; t < num_scales; ++t) {
            if (t > 0) {
                // g_res currently holds d/d(state at scale t-1); push it through the upsampler
                Tensor<T> g_up = leaky_relu_backward(tp.dec.up_pre[t - 1], std::move(g_res));
                g_res = conv_transpose2d_backward(dec.up[t - 1], tp.dec.res_out[t], g_up, grads.dec.up[t - 1]);
            }
            Tensor<T> g_act = resblock_backward(dec.res[t], tp.dec.res[t], g_res, grads.dec.res[t]);
            Tensor<T> g_pre = leaky_relu_backward(tp.dec.fuse_pre[t], std::move(g_act));
            Tensor<T> g_in = conv2d_backward(dec.fuse[t], tp.dec.input[t], g_pre, grads.dec.fuse[t]);
            if (t == num_scales - 1) {
                g_short[t] = slice_channels(g_in, 0, ch[t]);
                g_fused[t] = slice_channels(g_in, ch[t], ch[t]);
            } else {
                g_res = slice_channels(g_in, 0, ch[t]);
                g_short[t] = slice_channels(g_in, ch[t], ch[t]);
                g_fused[t] = slice_channels(g_in, 2 * ch[t], ch[t]);
            }
        }

        // deghost and align, fine to coarse so offset gradients flow to coarser scales
        std::array<Tensor<T>, num_scales> g_long;
        Tensor<T> g_offsets_from_finer;
        for (int t = 0; t < num_scales; ++t) {
            const auto& dt = tp.deghost[t];
            const auto& at = tp.align[t];
            Tensor<T> g_aligned = g_fused[t];
            Tensor<T> g_w = g_fused[t];
            for (std::size_t i = 0; i < g_aligned.size(); ++i) {
                g_aligned[i] *= dt.weights[i];
                g_w[i] *= at.aligned[i];
            }
            Tensor<T> g_cat = conv2d_backward(deghost[t].attention, dt.cat, sigmoid_backward(dt.weights, std::move(g_w)),
                                              grads.deghost[t].attention);
            g_aligned += slice_channels(g_cat, 0, ch[t]);
            g_short[t] += slice_channels(g_cat, ch[t], ch[t]);

            const Tensor<T> f_long = slice_channels(at.cat_features, 0, ch[t]);
            Tensor<T> g_offsets;
            g_long[t] = deform_conv2d_backward(align[t].dcn, f_long, at.offsets, g_aligned, grads.align[t].dcn, g_offsets);
            if (t > 0) g_offsets += g_offsets_from_finer;
            Tensor<T> g_cat_off = conv2d_backward(align[t].offset, at.cat_offsets, g_offsets, grads.align[t].offset);
            if (t < num_scales - 1)
                g_offsets_from_finer = upsample2x_backward(slice_channels(g_cat_off, 0, offset_channels), tp.align[t + 1].offsets.shape(), 2.0);
            Tensor<T> g_feat = leaky_relu_backward(at.feat_pre, slice_channels(g_cat_off, offset_channels, ch[t]));
            Tensor<T> g_cat_feat = conv2d_backward(align[t].feat, at.cat_features, g_feat, grads.align[t].feat);
            g_long[t] += slice_channels(g_cat_feat, 0, ch[t]);
            g_short[t] += slice_channels(g_cat_feat, ch[t], ch[t]);
        }

        encoder_backward(enc_long, tp.enc_long, g_long, grads.enc_long);
        encoder_backward(enc_short, tp.enc_short, g_short, grads.enc_short);
    }

private:
    template <typename F>
    void visit_layers(F&& f)
    {
        for (Encoder<T>* e : {&enc_long, &enc_short}) {
            f(e->head, false);
            for (auto& r : e->res) {
                f(r.conv1, false);
                f(r.conv2, false);
            }
            for (auto& d : e->down) f(d, false);
        }
        for (int t = 0; t < num_scales; ++t) {
            f(align[t].feat, false);
            f(align[t].offset, false);
            f(align[t].dcn, false);
            f(deghost[t].attention, false);
        }
        for (int t = 0; t < num_scales; ++t) {
            f(dec.fuse[t], false);
            f(dec.res[t].conv1, false);
            f(dec.res[t].conv2, false);
        }
        for (auto& u : dec.up) f(u, true);
        f(dec.tail, false);
    }

    void encoder_backward(const Encoder<T>& e, const EncoderTape<T>& tp, std::array<Tensor<T>, num_scales> g_features,
                          Encoder<T>& grads) const
    {
        using namespace nn;
        Tensor<T> g_act;
        for (int t = num_scales - 1; t >= 0; --t) {
            if (t < num_scales - 1) {
                // gradient arriving from the next-coarser scale through the downsampler
                Tensor<T> g_pre = leaky_relu_backward(tp.down_pre[t], std::move(g_act));
                g_features[t] += conv2d_backward(e.down[t], tp.features[t], g_pre, grads.down[t]);
            }
            g_act = resblock_backward(e.res[t], tp.res[t], g_features[t], grads.res[t]);
        }
        // the input gradient of the head conv is not needed
        conv2d_backward(e.head, tp.input, leaky_relu_backward(tp.head_pre, std::move(g_act)), grads.head);
    }
};

} // namespace lsf
