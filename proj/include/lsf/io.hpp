#pragma once

// File formats:
//
// Tensor file (.lsft), little-endian throughout:
//   bytes 0..3   magic "LSFT"
//   byte  4      dtype: 0 = float32, 1 = float64, 2 = uint16 (full scale 65535)
//   bytes 5..7   reserved, zero
//   uint32       ndim (1..4)
//   uint32[ndim] extents, outermost first; padded on the left to NCHW
//   body         prod(extents) values, row-major
//
// Images: binary netpbm P6 with maxval 65535 (big-endian samples per netpbm).

#include "lsf/raw.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsf {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class TensorDtype : std::uint8_t { f32 = 0, f64 = 1, u16 = 2 };

namespace io_detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename U>
void put(std::ostream& os, U v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::istream& is)
{
    U v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("unexpected end of file");
    return v;
}

inline std::ifstream open_in(const std::filesystem::path& p)
{
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open '" + p.string() + "' for reading");
    return f;
}

inline std::ofstream open_out(const std::filesystem::path& p)
{
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + p.string() + "' for writing");
    return f;
}

} // namespace io_detail

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t, TensorDtype dtype = TensorDtype::f32)
{
    using namespace io_detail;
    os.write("LSFT", 4);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(dtype));
    put<std::uint8_t>(os, 0);
    put<std::uint16_t>(os, 0);
    put<std::uint32_t>(os, 4);
    for (int e : {t.n(), t.c(), t.h(), t.w()}) put<std::uint32_t>(os, static_cast<std::uint32_t>(e));
    for (T v : t.values()) {
        switch (dtype) {
        case TensorDtype::f32: put<float>(os, static_cast<float>(v)); break;
        case TensorDtype::f64: put<double>(os, static_cast<double>(v)); break;
        case TensorDtype::u16: {
            const double s = std::clamp(static_cast<double>(v), 0.0, 1.0) * 65535.0;
            put<std::uint16_t>(os, static_cast<std::uint16_t>(std::lround(s)));
            break;
        }
        }
    }
    if (!os) throw IoError("tensor write failed");
}

template <typename T>
Tensor<T> read_tensor(std::istream& is)
{
    using namespace io_detail;
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "LSFT", 4) != 0) throw IoError("not a tensor file (bad magic)");
    const auto dtype = get<std::uint8_t>(is);
    get<std::uint8_t>(is);
    get<std::uint16_t>(is);
    const auto ndim = get<std::uint32_t>(is);
    if (ndim < 1 || ndim > 4) throw IoError("tensor file: ndim must be 1..4");
    int ext[4] = {1, 1, 1, 1};
    for (std::uint32_t i = 0; i < ndim; ++i) {
        const auto e = get<std::uint32_t>(is);
        if (e > (1u << 28)) throw IoError("tensor file: extent too large");
        ext[4 - ndim + i] = static_cast<int>(e);
    }
    Tensor<T> t(ext[0], ext[1], ext[2], ext[3]);
    for (auto& v : t.values()) {
        switch (dtype) {
        case 0: v = static_cast<T>(get<float>(is)); break;
        case 1: v = static_cast<T>(get<double>(is)); break;
        case 2: v = static_cast<T>(get<std::uint16_t>(is) / 65535.0); break;
        default: throw IoError("tensor file: unsupported dtype " + std::to_string(dtype));
        }
    }
    return t;
}

template <typename T>
void save_tensor(const std::filesystem::path& p, const Tensor<T>& t, TensorDtype dtype = TensorDtype::f32)
{
    auto f = io_detail::open_out(p);
    write_tensor(f, t, dtype);
}

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& p)
{
    auto f = io_detail::open_in(p);
    return read_tensor<T>(f);
}

/// Write a (1,3,H,W) tensor as a 16-bit binary PPM; values are clipped to [0,1].
template <typename T>
void save_ppm16(const std::filesystem::path& p, const Tensor<T>& rgb)
{
    if (rgb.n() != 1 || rgb.c() != 3) throw DimensionError("save_ppm16: expected (1,3,H,W), got " + rgb.shape().str());
    auto f = io_detail::open_out(p);
    f << "P6\n" << rgb.w() << ' ' << rgb.h() << "\n65535\n";
    for (int y = 0; y < rgb.h(); ++y)
        for (int x = 0; x < rgb.w(); ++x)
            for (int c = 0; c < 3; ++c) {
                const double s = std::clamp(static_cast<double>(rgb(0, c, y, x)), 0.0, 1.0) * 65535.0;
                const auto v = static_cast<std::uint16_t>(std::lround(s));
                const char be[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xff)};
                f.write(be, 2);
            }
    if (!f) throw IoError("ppm write failed");
}

/// Read a binary P6 PPM (8- or 16-bit) into a (1,3,H,W) tensor scaled to [0,1].
template <typename T>
Tensor<T> load_ppm(const std::filesystem::path& p)
{
    auto f = io_detail::open_in(p);
    auto token = [&f]() {
        std::string tok;
        while (tok.empty()) {
            const int ch = f.peek();
            if (ch == EOF) throw IoError("ppm: truncated header");
            if (ch == '#') {
                std::string skip;
                std::getline(f, skip);
            } else if (std::isspace(ch)) {
                f.get();
            } else {
                f >> tok;
            }
        }
        return tok;
    };
    if (token() != "P6") throw IoError("ppm: only binary P6 is supported");
    const int w = std::stoi(token()), h = std::stoi(token()), maxval = std::stoi(token());
    f.get();
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw IoError("ppm: bad header");
    Tensor<T> t(1, 3, h, w);
    const bool wide = maxval > 255;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                unsigned v;
                if (wide) {
                    unsigned char b[2];
                    if (!f.read(reinterpret_cast<char*>(b), 2)) throw IoError("ppm: truncated body");
                    v = (static_cast<unsigned>(b[0]) << 8) | b[1];
                } else {
                    unsigned char b;
                    if (!f.read(reinterpret_cast<char*>(&b), 1)) throw IoError("ppm: truncated body");
                    v = b;
                }
                t(0, c, y, x) = static_cast<T>(static_cast<double>(v) / maxval);
            }
    return t;
}

inline std::string read_text_file(const std::filesystem::path& p)
{
    auto f = io_detail::open_in(p);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace lsf
