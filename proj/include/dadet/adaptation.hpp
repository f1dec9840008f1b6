#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dadet/detector.hpp"
#include "dadet/layers.hpp"
#include "dadet/tensor.hpp"

namespace dadet {

// Gradient reversal: identity forward, -lambda * gradient backward.
struct GrlConfig {
    double lambda = 0.1;  // stored positive; the reversal supplies the sign

    void validate() const;
};

Tensor grl_forward(const Tensor& x, const GrlConfig& cfg);
Tensor grl_backward(const Tensor& upstream_grad, const GrlConfig& cfg);

enum class DanKind { Baseline, Pfr, Uc, Integrated };

const char* dan_kind_name(DanKind k) noexcept;
std::optional<DanKind> parse_dan_kind(const std::string& s);

// Subset of {F1, F2, F3}.
class ScaleSet {
public:
    ScaleSet() = default;
    ScaleSet(std::initializer_list<Scale> scales);
    static ScaleSet all() { return {Scale::F1, Scale::F2, Scale::F3}; }
    static ScaleSet from_mask(unsigned mask);

    bool contains(Scale s) const noexcept { return (mask_ >> static_cast<int>(s)) & 1U; }
    void insert(Scale s) noexcept { mask_ |= 1U << static_cast<int>(s); }
    bool empty() const noexcept { return mask_ == 0; }
    int size() const noexcept { return __builtin_popcount(mask_); }
    unsigned mask() const noexcept { return mask_; }
    std::vector<Scale> scales() const;
    std::string str() const;  // e.g. "F1+F3", "none"
    // Inverse of str(); also accepts "," as separator. nullopt on bad input.
    static std::optional<ScaleSet> parse(const std::string& s);

    friend bool operator==(const ScaleSet&, const ScaleSet&) = default;

private:
    unsigned mask_ = 0;
};

struct DanVariant {
    DanKind kind = DanKind::Integrated;
    ScaleSet active_scales = ScaleSet::all();

    // Throws ConfigError: empty scale set, or UC/INTEGRATED without all scales.
    void validate() const;
};

enum class DomainMapScale { F1, F2, F3, Unified };

const char* domain_map_scale_name(DomainMapScale s) noexcept;

// Per-location domain probabilities, shape (batch, 1, h, w), values in (0, 1).
struct DomainProbMap {
    Tensor probs;
    DomainMapScale scale = DomainMapScale::Unified;
};

// t_i = 1 for source images, 0 for target images.
struct DomainLabelVector {
    std::vector<int> t;

    static DomainLabelVector half_split(int batch);  // first half source
    void validate(int batch) const;
};

inline constexpr double kProbEpsilon = 1e-7;

// Binary cross-entropy of one map averaged over batch x locations.
double domain_map_loss(const DomainProbMap& map, const DomainLabelVector& labels);

// Mean of the per-map losses.
double domain_classification_loss(const std::vector<DomainProbMap>& maps, const DomainLabelVector& labels);

// d L_dc / d logit for each map (same shapes as the prob maps). Zero where
// the probability is clamped.
std::vector<Tensor> domain_classification_logit_grads(const std::vector<DomainProbMap>& maps,
                                                      const DomainLabelVector& labels);

// Reported joint objective L_det + lambda * L_dc. Gradients follow the
// reversal: DAN parameters descend L_dc, the backbone receives -lambda times it.
double total_backbone_objective(double detection_loss, double domain_loss, const GrlConfig& cfg);

// Domain classifier attached to the three backbone taps.
//
// BASELINE / PFR: one classifier per active scale (1x1 convolutions).
// UC / INTEGRATED: per-scale branches reduced to equal width at F3's grid,
// concatenated, then a shared classifier emitting one UNIFIED map.
class DomainAdaptationNetwork {
public:
    DomainAdaptationNetwork(DanVariant variant, int base_channels);

    void init(Rng& rng);

    const DanVariant& variant() const noexcept { return variant_; }
    bool unified() const noexcept { return variant_.kind == DanKind::Uc || variant_.kind == DanKind::Integrated; }

    // Training forward (GRL applied at each tap); caches activations.
    std::vector<DomainProbMap> forward(const FeaturePyramid& taps);

    // Backward from logit gradients. Returns d L_dc / d taps without reversal
    // and accumulates DAN parameter gradients. Inactive taps get zeros.
    FeaturePyramid backward_unreversed(const std::vector<Tensor>& logit_grads);
    // Same, with each tap gradient passed through grl_backward.
    FeaturePyramid backward(const std::vector<Tensor>& logit_grads, const GrlConfig& grl);

    std::vector<DomainProbMap> infer(const FeaturePyramid& taps) const;

    ParameterRefs parameters();
    // Parameters of one scale's branch (per-scale classifier or pre-fusion branch).
    ParameterRefs branch_parameters(Scale s);
    ParameterRefs fusion_parameters();

    // Output channel count after each layer of a scale's path, ending with the
    // 1-channel map (fusion layers included for UC / INTEGRATED).
    std::vector<int> path_schedule(Scale s) const;
    // Channels each branch contributes to the fused concatenation (UC / INTEGRATED).
    std::vector<int> branch_output_channels() const;
    int stage_count(Scale s) const { return static_cast<int>(path_schedule(s).size()); }

private:
    template <typename Self>
    static std::vector<DomainProbMap> run(Self& self, const FeaturePyramid& taps);

    DanVariant variant_;
    int base_channels_;
    std::array<ConvStack, kNumScales> branches_;
    ConvStack fusion_;
    std::vector<Scale> forward_scales_;  // scales used in the last training forward
    FeaturePyramid tap_shapes_;          // zero tensors shaped like the last training input
};

}  // namespace dadet
