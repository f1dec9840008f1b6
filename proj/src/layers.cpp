#include "dadet/layers.hpp"

#include <cmath>

#include "dadet/errors.hpp"

namespace dadet {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 over (seed, stream) so nearby seeds give unrelated states.
    std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + (stream + 1) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return Rng(z);
}

void zero_grads(const ParameterRefs& params) {
    for (Parameter* p : params) p->grad.fill(0.0);
}

std::size_t count_parameters(const ParameterRefs& params) {
    std::size_t total = 0;
    for (const Parameter* p : params) total += p->value.size();
    return total;
}

ConvLayer::ConvLayer(std::string name, int in_channels, int out_channels, ConvGeometry geometry, bool activate)
    : in_channels_(in_channels), out_channels_(out_channels), geometry_(geometry), activate_(activate) {
    if (in_channels <= 0 || out_channels <= 0) {
        throw ConfigError("layer " + name + " needs positive channel counts (got " + std::to_string(in_channels) +
                          " -> " + std::to_string(out_channels) + ")");
    }
    const Shape ws{out_channels, in_channels, geometry.kernel, geometry.kernel};
    const Shape bs{1, out_channels, 1, 1};
    weight_ = Parameter{name + ".weight", Tensor(ws), Tensor(ws)};
    bias_ = Parameter{name + ".bias", Tensor(bs), Tensor(bs)};
}

void ConvLayer::init_he(Rng& rng, double gain, double bias) {
    const double fan_in = static_cast<double>(in_channels_) * geometry_.kernel * geometry_.kernel;
    const double slope = activate_ ? kLeakySlope : 1.0;
    init_normal(rng, gain * std::sqrt(2.0 / ((1.0 + slope * slope) * fan_in)), bias);
}

void ConvLayer::init_normal(Rng& rng, double stddev, double bias) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : weight_.value.span()) v = dist(rng);
    bias_.value.fill(bias);
}

Tensor ConvLayer::forward(const Tensor& x) {
    input_ = x;
    output_ = infer(x);
    return output_;
}

Tensor ConvLayer::backward(const Tensor& grad_output) {
    if (output_.empty()) throw DimensionError(weight_.name + ": backward without forward");
    Tensor grad = grad_output;
    if (activate_) kernels::leaky_relu_backward_inplace(output_, grad);
    return kernels::conv2d_backward(input_, weight_.value, grad, geometry_, weight_.grad, bias_.grad);
}

Tensor ConvLayer::infer(const Tensor& x) const {
    if (x.c() != in_channels_) {
        throw DimensionError(weight_.name + ": expected " + std::to_string(in_channels_) + " channels, got " +
                             x.shape().str());
    }
    Tensor y = kernels::conv2d_forward(x, weight_.value, bias_.value, geometry_);
    if (activate_) kernels::leaky_relu_inplace(y);
    return y;
}

Tensor ConvStack::forward(const Tensor& x) {
    Tensor y = x;
    for (ConvLayer& layer : layers_) y = layer.forward(y);
    return y;
}

Tensor ConvStack::backward(const Tensor& grad_output) {
    Tensor g = grad_output;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->backward(g);
    return g;
}

Tensor ConvStack::infer(const Tensor& x) const {
    Tensor y = x;
    for (const ConvLayer& layer : layers_) y = layer.infer(y);
    return y;
}

ParameterRefs ConvStack::parameters() {
    ParameterRefs out;
    for (ConvLayer& layer : layers_) {
        for (Parameter* p : layer.parameters()) out.push_back(p);
    }
    return out;
}

std::vector<int> ConvStack::channel_schedule() const {
    std::vector<int> out;
    out.reserve(layers_.size());
    for (const ConvLayer& layer : layers_) out.push_back(layer.out_channels());
    return out;
}

}  // namespace dadet
