#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dadet {

// NCHW extent of a 4-D tensor.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
    std::size_t image() const noexcept { return plane() * c; }
    std::size_t size() const noexcept { return image() * n; }

    friend bool operator==(const Shape&, const Shape&) = default;

    std::string str() const;
};

// Dense NCHW tensor of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
    Tensor(int n, int c, int h, int w, double fill = 0.0) : Tensor(Shape{n, c, h, w}, fill) {}

    const Shape& shape() const noexcept { return shape_; }
    int n() const noexcept { return shape_.n; }
    int c() const noexcept { return shape_.c; }
    int h() const noexcept { return shape_.h; }
    int w() const noexcept { return shape_.w; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> span() noexcept { return data_; }
    std::span<const double> span() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(int n, int c, int h, int w) noexcept { return data_[index(n, c, h, w)]; }
    double at(int n, int c, int h, int w) const noexcept { return data_[index(n, c, h, w)]; }

    std::span<double> image(int n) noexcept { return {data_.data() + n * shape_.image(), shape_.image()}; }
    std::span<const double> image(int n) const noexcept {
        return {data_.data() + n * shape_.image(), shape_.image()};
    }

    void fill(double v);
    void reshape(Shape s);  // size must match

    // Images [begin, end) as a new tensor.
    Tensor slice_batch(int begin, int end) const;
    // Writes `part` into images starting at `begin`.
    void assign_batch(int begin, const Tensor& part);

    Tensor& operator+=(const Tensor& other);
    Tensor& operator*=(double s);

    bool all_finite() const noexcept;
    bool all_zero() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t index(int n, int c, int h, int w) const noexcept {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    Shape shape_{};
    std::vector<double> data_;
};

// Concatenates along channels; all inputs share n, h, w.
Tensor concat_channels(std::span<const Tensor* const> parts);
// Inverse of concat_channels for gradients.
std::vector<Tensor> split_channels(const Tensor& t, std::span<const int> channel_counts);

// Bitwise equality of the underlying storage (distinguishes -0.0 from 0.0).
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace dadet
