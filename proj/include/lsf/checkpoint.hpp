#pragma once

// Checkpoint file, little-endian:
//   char[8]   magic "LSFCKPT\0"
//   uint32    version (1)
//   uint32    in_channels
//   uint32[4] scale channels
//   uint8     tone mode (0 gamma, 1 mulaw)
//   uint8[3]  reserved
//   int64     optimiser step
//   int32     epochs completed
//   float64   base learning rate
//   int32     learning-rate halving interval in epochs
//   uint32    parameter count P
//   P times:  uint16 name length, name bytes, uint32[4] NCHW extents, float32 values
//   uint8     1 if ADAM moments follow, else 0
//   if 1:     first moments then second moments, float32, same order and shapes

#include "lsf/io.hpp"
#include "lsf/lsfnet.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

namespace lsf {

struct Checkpoint {
    LsfNet<float> model;
    std::optional<nn::AdamState<LsfNet<float>>> adam;
    ToneMode mode = ToneMode::gamma;
    int epoch = 0;
    double lr = 1e-4;
    int lr_halve_epochs = 100;
};

inline constexpr std::uint32_t checkpoint_version = 1;

namespace ckpt_detail {

inline void write_values(std::ostream& os, const LsfNet<float>& net)
{
    net.visit([&](const std::string&, const Tensor<float>& t) {
        os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    });
}

inline void read_values(std::istream& is, LsfNet<float>& net)
{
    net.visit([&](const std::string&, Tensor<float>& t) {
        if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float))))
            throw IoError("checkpoint: truncated values");
    });
}

} // namespace ckpt_detail

inline void save_checkpoint(const std::filesystem::path& p, const Checkpoint& ck)
{
    using namespace io_detail;
    auto f = open_out(p);
    f.write("LSFCKPT\0", 8);
    put<std::uint32_t>(f, checkpoint_version);
    const auto& cfg = ck.model.config;
    put<std::uint32_t>(f, static_cast<std::uint32_t>(cfg.in_channels));
    for (int c : cfg.channels) put<std::uint32_t>(f, static_cast<std::uint32_t>(c));
    put<std::uint8_t>(f, ck.mode == ToneMode::gamma ? 0 : 1);
    for (int i = 0; i < 3; ++i) put<std::uint8_t>(f, 0);
    put<std::int64_t>(f, ck.adam ? ck.adam->step : 0);
    put<std::int32_t>(f, ck.epoch);
    put<double>(f, ck.lr);
    put<std::int32_t>(f, ck.lr_halve_epochs);

    std::uint32_t count = 0;
    ck.model.visit([&](const std::string&, const Tensor<float>&) { ++count; });
    put<std::uint32_t>(f, count);
    ck.model.visit([&](const std::string& name, const Tensor<float>& t) {
        put<std::uint16_t>(f, static_cast<std::uint16_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        for (int e : {t.n(), t.c(), t.h(), t.w()}) put<std::uint32_t>(f, static_cast<std::uint32_t>(e));
        f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    });
    put<std::uint8_t>(f, ck.adam ? 1 : 0);
    if (ck.adam) {
        ckpt_detail::write_values(f, ck.adam->m);
        ckpt_detail::write_values(f, ck.adam->v);
    }
    if (!f) throw IoError("checkpoint write failed: '" + p.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& p)
{
    using namespace io_detail;
    auto f = open_in(p);
    char magic[8];
    if (!f.read(magic, 8) || std::memcmp(magic, "LSFCKPT\0", 8) != 0) throw IoError("not a checkpoint: '" + p.string() + "'");
    if (const auto v = get<std::uint32_t>(f); v != checkpoint_version)
        throw IoError("unsupported checkpoint version " + std::to_string(v));
    LsfConfig cfg;
    cfg.in_channels = static_cast<int>(get<std::uint32_t>(f));
    for (int& c : cfg.channels) c = static_cast<int>(get<std::uint32_t>(f));
    cfg.validate();
    Checkpoint ck{LsfNet<float>::shaped(cfg), std::nullopt};
    ck.mode = get<std::uint8_t>(f) == 0 ? ToneMode::gamma : ToneMode::mulaw;
    for (int i = 0; i < 3; ++i) get<std::uint8_t>(f);
    const auto step = get<std::int64_t>(f);
    ck.epoch = get<std::int32_t>(f);
    ck.lr = get<double>(f);
    ck.lr_halve_epochs = get<std::int32_t>(f);

    std::uint32_t expected = 0;
    ck.model.visit([&](const std::string&, Tensor<float>&) { ++expected; });
    if (get<std::uint32_t>(f) != expected) throw IoError("checkpoint: parameter count does not match its architecture");
    ck.model.visit([&](const std::string& name, Tensor<float>& t) {
        const auto len = get<std::uint16_t>(f);
        std::string stored(len, '\0');
        if (!f.read(stored.data(), len)) throw IoError("checkpoint: truncated name");
        if (stored != name) throw IoError("checkpoint: expected parameter '" + name + "', found '" + stored + "'");
        Shape s;
        s.n = static_cast<int>(get<std::uint32_t>(f));
        s.c = static_cast<int>(get<std::uint32_t>(f));
        s.h = static_cast<int>(get<std::uint32_t>(f));
        s.w = static_cast<int>(get<std::uint32_t>(f));
        if (!(s == t.shape())) throw IoError("checkpoint: shape mismatch for '" + name + "'");
        if (!f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float))))
            throw IoError("checkpoint: truncated values");
    });
    if (get<std::uint8_t>(f)) {
        auto st = nn::AdamState<LsfNet<float>>::for_model(ck.model);
        st.step = step;
        ckpt_detail::read_values(f, st.m);
        ckpt_detail::read_values(f, st.v);
        ck.adam = std::move(st);
    }
    return ck;
}

} // namespace lsf
