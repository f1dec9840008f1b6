#pragma once

// Compute kernels for the network layers.
//
// `dadet::kernels` is the production path: im2col + BLAS GEMM, with OpenMP
// across images where each image's work is independent. Weight-gradient
// accumulation always runs over images in ascending order, so results do not
// depend on the thread count.
//
// `dadet::reference` holds direct-loop serial versions of the same kernels.
// They are slow and exist so tests and the benchmark can check the fast path.

#include "dadet/tensor.hpp"

namespace dadet {

struct ConvGeometry {
    int kernel = 3;
    int stride = 1;
    int pad = 1;

    int out_extent(int in) const noexcept { return (in + 2 * pad - kernel) / stride + 1; }
};

inline constexpr double kLeakySlope = 0.1;

namespace kernels {

// weight: (out_c, in_c, k, k); bias: (1, out_c, 1, 1).
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvGeometry& g);

// Accumulates into weight_grad / bias_grad and returns the input gradient.
// Images whose output gradient is entirely zero contribute nothing and are skipped.
Tensor conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output,
                       const ConvGeometry& g, Tensor& weight_grad, Tensor& bias_grad);

void leaky_relu_inplace(Tensor& x);
// Multiplies grad by the leaky slope wherever the activation output is negative.
void leaky_relu_backward_inplace(const Tensor& activated, Tensor& grad);

Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& grad_output);

}  // namespace kernels

namespace reference {

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvGeometry& g);
Tensor conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output,
                       const ConvGeometry& g, Tensor& weight_grad, Tensor& bias_grad);

}  // namespace reference

}  // namespace dadet
