#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsf {

/// Thrown when image or tensor extents violate an operation's shape contract.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown for invalid scalar arguments (non-positive gains, scales, ratios).
class ValueError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Shape {
    int n = 1, c = 1, h = 1, w = 1;

    [[nodiscard]] std::size_t size() const noexcept
    {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    friend bool operator==(const Shape&, const Shape&) = default;

    [[nodiscard]] std::string str() const
    {
        std::ostringstream os;
        os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
        return os.str();
    }
};

/// Dense NCHW tensor. Every tensor in the library is four-dimensional; lower
/// rank data uses leading extents of one.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape_(s), data_(s.size(), fill)
    {
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
            throw DimensionError("negative tensor extent " + s.str());
    }
    Tensor(int n, int c, int h, int w, T fill = T(0)) : Tensor(Shape{n, c, h, w}, fill) {}

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] int n() const noexcept { return shape_.n; }
    [[nodiscard]] int c() const noexcept { return shape_.c; }
    [[nodiscard]] int h() const noexcept { return shape_.h; }
    [[nodiscard]] int w() const noexcept { return shape_.w; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] std::size_t index(int n, int c, int y, int x) const noexcept
    {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& operator()(int n, int c, int y, int x) noexcept { return data_[index(n, c, y, x)]; }
    const T& operator()(int n, int c, int y, int x) const noexcept { return data_[index(n, c, y, x)]; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Contiguous H*W plane of sample n, channel c.
    T* plane(int n, int c) noexcept { return data_.data() + index(n, c, 0, 0); }
    const T* plane(int n, int c) const noexcept { return data_.data() + index(n, c, 0, 0); }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    [[nodiscard]] Tensor zeros_like() const { return Tensor(shape_); }

    template <typename U>
    [[nodiscard]] Tensor<U> cast() const
    {
        Tensor<U> out(shape_);
        std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
        return out;
    }

    Tensor& operator+=(const Tensor& o)
    {
        require_same(o, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator*=(T s)
    {
        for (auto& v : data_) v *= s;
        return *this;
    }

    void require_same(const Tensor& o, const char* what) const
    {
        if (!(shape_ == o.shape_))
            throw DimensionError(std::string(what) + ": shape mismatch " + shape_.str() + " vs " + o.shape_.str());
    }

    [[nodiscard]] bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    Shape shape_{0, 0, 0, 0};
    std::vector<T> data_;
};

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b)
{
    a.require_same(b, "dot");
    T acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b)
{
    a.require_same(b, "max_abs_diff");
    T m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Concatenate along channels. All parts share N, H and W.
template <typename T>
Tensor<T> concat_channels(std::initializer_list<const Tensor<T>*> parts)
{
    const Tensor<T>& first = **parts.begin();
    int channels = 0;
    for (const auto* p : parts) {
        if (p->n() != first.n() || p->h() != first.h() || p->w() != first.w())
            throw DimensionError("concat_channels: mismatched " + p->shape().str() + " vs " + first.shape().str());
        channels += p->c();
    }
    Tensor<T> out(first.n(), channels, first.h(), first.w());
    const std::size_t hw = static_cast<std::size_t>(first.h()) * first.w();
    for (int n = 0; n < first.n(); ++n) {
        int off = 0;
        for (const auto* p : parts) {
            std::copy_n(p->plane(n, 0), hw * p->c(), out.plane(n, off));
            off += p->c();
        }
    }
    return out;
}

/// Inverse of concat_channels: slice channels [begin, begin + count).
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& t, int begin, int count)
{
    if (begin < 0 || begin + count > t.c()) throw DimensionError("slice_channels: range out of bounds");
    Tensor<T> out(t.n(), count, t.h(), t.w());
    const std::size_t hw = static_cast<std::size_t>(t.h()) * t.w();
    for (int n = 0; n < t.n(); ++n) std::copy_n(t.plane(n, begin), hw * count, out.plane(n, 0));
    return out;
}

/// Sample n of a batch as a batch of one.
template <typename T>
Tensor<T> take_sample(const Tensor<T>& t, int n)
{
    Tensor<T> out(1, t.c(), t.h(), t.w());
    std::copy_n(t.plane(n, 0), out.size(), out.data());
    return out;
}

/// Stack single-sample tensors of identical shape into one batch.
template <typename T>
Tensor<T> stack_samples(std::span<const Tensor<T>> samples)
{
    if (samples.empty()) throw DimensionError("stack_samples: empty batch");
    const Shape s = samples.front().shape();
    Tensor<T> out(static_cast<int>(samples.size()) * s.n, s.c, s.h, s.w);
    std::size_t off = 0;
    for (const auto& t : samples) {
        if (!(t.shape() == s)) throw DimensionError("stack_samples: mixed shapes");
        std::copy_n(t.data(), t.size(), out.data() + off);
        off += t.size();
    }
    return out;
}

} // namespace lsf
