#include "dadet/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <vector>

#include "dadet/errors.hpp"

namespace dadet::kernels {
namespace {

void check_conv_shapes(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvGeometry& g) {
    if (weight.c() != input.c() || weight.h() != g.kernel || weight.w() != g.kernel) {
        throw DimensionError("conv weight " + weight.shape().str() + " incompatible with input " +
                             input.shape().str());
    }
    if (bias.size() != static_cast<std::size_t>(weight.n())) {
        throw DimensionError("conv bias size does not match output channels");
    }
    if (g.out_extent(input.h()) <= 0 || g.out_extent(input.w()) <= 0) {
        throw DimensionError("conv output would be empty for input " + input.shape().str());
    }
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

// col: (in_c * k * k) rows by (out_h * out_w) columns.
void im2col(const double* img, int channels, int height, int width, const ConvGeometry& g, int out_h, int out_w,
            double* col) {
    const int k = g.kernel;
    const int cols = out_h * out_w;
    for (int c = 0; c < channels; ++c) {
        const double* plane = img + static_cast<std::size_t>(c) * height * width;
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                double* row = col + static_cast<std::size_t>((c * k + kh) * k + kw) * cols;
                for (int oh = 0; oh < out_h; ++oh) {
                    const int ih = oh * g.stride + kh - g.pad;
                    double* dst = row + oh * out_w;
                    if (ih < 0 || ih >= height) {
                        std::fill_n(dst, out_w, 0.0);
                        continue;
                    }
                    const double* src = plane + static_cast<std::size_t>(ih) * width;
                    for (int ow = 0; ow < out_w; ++ow) {
                        const int iw = ow * g.stride + kw - g.pad;
                        dst[ow] = (iw >= 0 && iw < width) ? src[iw] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const double* col, int channels, int height, int width, const ConvGeometry& g, int out_h, int out_w,
            double* img) {
    const int k = g.kernel;
    const int cols = out_h * out_w;
    std::fill_n(img, static_cast<std::size_t>(channels) * height * width, 0.0);
    for (int c = 0; c < channels; ++c) {
        double* plane = img + static_cast<std::size_t>(c) * height * width;
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                const double* row = col + static_cast<std::size_t>((c * k + kh) * k + kw) * cols;
                for (int oh = 0; oh < out_h; ++oh) {
                    const int ih = oh * g.stride + kh - g.pad;
                    if (ih < 0 || ih >= height) continue;
                    double* dst = plane + static_cast<std::size_t>(ih) * width;
                    const double* src = row + oh * out_w;
                    for (int ow = 0; ow < out_w; ++ow) {
                        const int iw = ow * g.stride + kw - g.pad;
                        if (iw >= 0 && iw < width) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvGeometry& g) {
    check_conv_shapes(input, weight, bias, g);
    const int out_c = weight.n();
    const int in_c = input.c();
    const int out_h = g.out_extent(input.h());
    const int out_w = g.out_extent(input.w());
    const int cols = out_h * out_w;
    const int depth = in_c * g.kernel * g.kernel;
    Tensor out(input.n(), out_c, out_h, out_w);
    const bool pointwise = is_pointwise(g);

#pragma omp parallel
    {
        std::vector<double> col(pointwise ? 0 : static_cast<std::size_t>(depth) * cols);
#pragma omp for schedule(static)
        for (int n = 0; n < input.n(); ++n) {
            const double* src = input.image(n).data();
            if (!pointwise) {
                im2col(src, in_c, input.h(), input.w(), g, out_h, out_w, col.data());
                src = col.data();
            }
            double* dst = out.image(n).data();
            for (int oc = 0; oc < out_c; ++oc) std::fill_n(dst + static_cast<std::size_t>(oc) * cols, cols, bias[oc]);
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, out_c, cols, depth, 1.0, weight.data(), depth, src,
                        cols, 1.0, dst, cols);
        }
    }
    return out;
}

Tensor conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output, const ConvGeometry& g,
                       Tensor& weight_grad, Tensor& bias_grad) {
    const int out_c = weight.n();
    const int in_c = input.c();
    const int out_h = g.out_extent(input.h());
    const int out_w = g.out_extent(input.w());
    const int cols = out_h * out_w;
    const int depth = in_c * g.kernel * g.kernel;
    if (grad_output.shape() != Shape{input.n(), out_c, out_h, out_w}) {
        throw DimensionError("conv grad_output " + grad_output.shape().str() + " does not match forward output");
    }
    const bool pointwise = is_pointwise(g);

    std::vector<char> active(input.n());
    for (int n = 0; n < input.n(); ++n) {
        auto gy = grad_output.image(n);
        active[n] = std::any_of(gy.begin(), gy.end(), [](double v) { return v != 0.0; });
    }

    Tensor grad_input(input.shape());
#pragma omp parallel
    {
        std::vector<double> dcol(pointwise ? 0 : static_cast<std::size_t>(depth) * cols);
#pragma omp for schedule(static)
        for (int n = 0; n < input.n(); ++n) {
            if (!active[n]) continue;
            double* dst = pointwise ? grad_input.image(n).data() : dcol.data();
            cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, depth, cols, out_c, 1.0, weight.data(), depth,
                        grad_output.image(n).data(), cols, 0.0, dst, cols);
            if (!pointwise) col2im(dcol.data(), in_c, input.h(), input.w(), g, out_h, out_w, grad_input.image(n).data());
        }
    }

    // Serial over images: fixed accumulation order.
    std::vector<double> col(pointwise ? 0 : static_cast<std::size_t>(depth) * cols);
    for (int n = 0; n < input.n(); ++n) {
        if (!active[n]) continue;
        const double* src = input.image(n).data();
        if (!pointwise) {
            im2col(src, in_c, input.h(), input.w(), g, out_h, out_w, col.data());
            src = col.data();
        }
        const double* gy = grad_output.image(n).data();
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, out_c, depth, cols, 1.0, gy, cols, src, cols, 1.0,
                    weight_grad.data(), depth);
        for (int oc = 0; oc < out_c; ++oc) {
            const double* row = gy + static_cast<std::size_t>(oc) * cols;
            double s = 0.0;
            for (int i = 0; i < cols; ++i) s += row[i];
            bias_grad[oc] += s;
        }
    }
    return grad_input;
}

void leaky_relu_inplace(Tensor& x) {
    double* d = x.data();
    const std::ptrdiff_t size = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < size; ++i) {
        if (d[i] < 0.0) d[i] *= kLeakySlope;
    }
}

void leaky_relu_backward_inplace(const Tensor& activated, Tensor& grad) {
    const double* a = activated.data();
    double* g = grad.data();
    const std::ptrdiff_t size = static_cast<std::ptrdiff_t>(grad.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < size; ++i) {
        if (a[i] < 0.0) g[i] *= kLeakySlope;
    }
}

Tensor upsample2x(const Tensor& x) {
    Tensor out(x.n(), x.c(), x.h() * 2, x.w() * 2);
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int h = 0; h < out.h(); ++h)
                for (int w = 0; w < out.w(); ++w) out.at(n, c, h, w) = x.at(n, c, h / 2, w / 2);
    return out;
}

Tensor upsample2x_backward(const Tensor& grad_output) {
    Tensor out(grad_output.n(), grad_output.c(), grad_output.h() / 2, grad_output.w() / 2);
    for (int n = 0; n < out.n(); ++n)
        for (int c = 0; c < out.c(); ++c)
            for (int h = 0; h < out.h(); ++h)
                for (int w = 0; w < out.w(); ++w) {
                    out.at(n, c, h, w) = grad_output.at(n, c, 2 * h, 2 * w) + grad_output.at(n, c, 2 * h, 2 * w + 1) +
                                         grad_output.at(n, c, 2 * h + 1, 2 * w) +
                                         grad_output.at(n, c, 2 * h + 1, 2 * w + 1);
                }
    return out;
}

}  // namespace dadet::kernels
