#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dadet/kernels.hpp"
#include "dadet/tensor.hpp"

namespace dadet {

using Rng = std::mt19937_64;

// Independent generator for (seed, stream); streams never share state.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

using ParameterRefs = std::vector<Parameter*>;

void zero_grads(const ParameterRefs& params);
std::size_t count_parameters(const ParameterRefs& params);

// Convolution with optional leaky-ReLU.
//
// forward() caches what backward() needs; infer() is the cache-free path used
// at evaluation time. Both compute the same arithmetic.
class ConvLayer {
public:
    ConvLayer(std::string name, int in_channels, int out_channels, ConvGeometry geometry, bool activate);

    // He-normal weights; `bias` fills the bias vector.
    void init_he(Rng& rng, double gain = 1.0, double bias = 0.0);
    void init_normal(Rng& rng, double stddev, double bias);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_output);
    Tensor infer(const Tensor& x) const;

    ParameterRefs parameters() { return {&weight_, &bias_}; }
    Parameter& weight() noexcept { return weight_; }
    Parameter& bias() noexcept { return bias_; }

    int in_channels() const noexcept { return in_channels_; }
    int out_channels() const noexcept { return out_channels_; }
    const ConvGeometry& geometry() const noexcept { return geometry_; }
    bool activated() const noexcept { return activate_; }

private:
    int in_channels_;
    int out_channels_;
    ConvGeometry geometry_;
    bool activate_;
    Parameter weight_;
    Parameter bias_;
    Tensor input_;
    Tensor output_;
};

// Layers applied in order.
class ConvStack {
public:
    ConvStack() = default;

    void add(ConvLayer layer) { layers_.push_back(std::move(layer)); }

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_output);
    Tensor infer(const Tensor& x) const;

    ParameterRefs parameters();

    std::size_t depth() const noexcept { return layers_.size(); }
    bool empty() const noexcept { return layers_.empty(); }
    std::vector<ConvLayer>& layers() noexcept { return layers_; }
    const std::vector<ConvLayer>& layers() const noexcept { return layers_; }
    // Output channel count after each layer.
    std::vector<int> channel_schedule() const;

private:
    std::vector<ConvLayer> layers_;
};

inline constexpr ConvGeometry kConv3x3{3, 1, 1};
inline constexpr ConvGeometry kConv3x3Stride2{3, 2, 1};
inline constexpr ConvGeometry kConv1x1{1, 1, 0};

}  // namespace dadet
