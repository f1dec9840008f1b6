#include "dadet/errors.hpp"
#include "dadet/kernels.hpp"

namespace dadet::reference {

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvGeometry& g) {
    if (weight.c() != input.c()) throw DimensionError("reference conv: channel mismatch");
    const int out_h = g.out_extent(input.h());
    const int out_w = g.out_extent(input.w());
    Tensor out(input.n(), weight.n(), out_h, out_w);
    for (int n = 0; n < input.n(); ++n)
        for (int oc = 0; oc < weight.n(); ++oc)
            for (int oh = 0; oh < out_h; ++oh)
                for (int ow = 0; ow < out_w; ++ow) {
                    double acc = bias[oc];
                    for (int ic = 0; ic < input.c(); ++ic)
                        for (int kh = 0; kh < g.kernel; ++kh)
                            for (int kw = 0; kw < g.kernel; ++kw) {
                                const int ih = oh * g.stride + kh - g.pad;
                                const int iw = ow * g.stride + kw - g.pad;
                                if (ih < 0 || ih >= input.h() || iw < 0 || iw >= input.w()) continue;
                                acc += weight.at(oc, ic, kh, kw) * input.at(n, ic, ih, iw);
                            }
                    out.at(n, oc, oh, ow) = acc;
                }
    return out;
}

Tensor conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output, const ConvGeometry& g,
                       Tensor& weight_grad, Tensor& bias_grad) {
    Tensor grad_input(input.shape());
    for (int n = 0; n < input.n(); ++n)
        for (int oc = 0; oc < weight.n(); ++oc)
            for (int oh = 0; oh < grad_output.h(); ++oh)
                for (int ow = 0; ow < grad_output.w(); ++ow) {
                    const double gy = grad_output.at(n, oc, oh, ow);
                    bias_grad[oc] += gy;
                    for (int ic = 0; ic < input.c(); ++ic)
                        for (int kh = 0; kh < g.kernel; ++kh)
                            for (int kw = 0; kw < g.kernel; ++kw) {
                                const int ih = oh * g.stride + kh - g.pad;
                                const int iw = ow * g.stride + kw - g.pad;
                                if (ih < 0 || ih >= input.h() || iw < 0 || iw >= input.w()) continue;
                                weight_grad.at(oc, ic, kh, kw) += gy * input.at(n, ic, ih, iw);
                                grad_input.at(n, ic, ih, iw) += gy * weight.at(oc, ic, kh, kw);
                            }
                }
    return grad_input;
}

}  // namespace dadet::reference
