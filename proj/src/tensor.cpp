#include "dadet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dadet/errors.hpp"

namespace dadet {

std::string Shape::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(Shape s) {
    if (s.size() != data_.size()) {
        throw DimensionError("reshape " + shape_.str() + " -> " + s.str() + " changes element count");
    }
    shape_ = s;
}

Tensor Tensor::slice_batch(int begin, int end) const {
    if (begin < 0 || end > shape_.n || begin > end) {
        throw DimensionError("batch slice [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") out of range for " + shape_.str());
    }
    Tensor out(Shape{end - begin, shape_.c, shape_.h, shape_.w});
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(begin * shape_.image()), out.size(),
                out.data_.begin());
    return out;
}

void Tensor::assign_batch(int begin, const Tensor& part) {
    const Shape& p = part.shape();
    if (p.c != shape_.c || p.h != shape_.h || p.w != shape_.w || begin < 0 || begin + p.n > shape_.n) {
        throw DimensionError("cannot assign " + p.str() + " into " + shape_.str());
    }
    std::copy(part.data_.begin(), part.data_.end(),
              data_.begin() + static_cast<std::ptrdiff_t>(begin * shape_.image()));
}

Tensor& Tensor::operator+=(const Tensor& other) {
    if (other.shape_ != shape_) {
        throw DimensionError("add " + other.shape_.str() + " to " + shape_.str());
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Tensor::all_zero() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v == 0.0; });
}

Tensor concat_channels(std::span<const Tensor* const> parts) {
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    const Shape& first = parts.front()->shape();
    int channels = 0;
    for (const Tensor* t : parts) {
        const Shape& s = t->shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w) {
            throw DimensionError("concat mismatch " + s.str() + " vs " + first.str());
        }
        channels += s.c;
    }
    Tensor out(first.n, channels, first.h, first.w);
    const std::size_t plane = first.plane();
    for (int n = 0; n < first.n; ++n) {
        double* dst = out.image(n).data();
        for (const Tensor* t : parts) {
            auto src = t->image(n);
            std::copy(src.begin(), src.end(), dst);
            dst += t->c() * plane;
        }
    }
    return out;
}

std::vector<Tensor> split_channels(const Tensor& t, std::span<const int> channel_counts) {
    int total = 0;
    for (int c : channel_counts) total += c;
    if (total != t.c()) throw DimensionError("split channel counts do not sum to " + std::to_string(t.c()));
    std::vector<Tensor> out;
    out.reserve(channel_counts.size());
    for (int c : channel_counts) out.emplace_back(t.n(), c, t.h(), t.w());
    const std::size_t plane = t.shape().plane();
    for (int n = 0; n < t.n(); ++n) {
        const double* src = t.image(n).data();
        for (Tensor& part : out) {
            auto dst = part.image(n);
            std::copy_n(src, dst.size(), dst.begin());
            src += part.c() * plane;
        }
    }
    return out;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace dadet
