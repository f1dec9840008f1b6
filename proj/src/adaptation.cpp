#include "dadet/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "dadet/errors.hpp"

namespace dadet {
namespace {

double sigmoid(double z) noexcept { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

Tensor sigmoid_map(const Tensor& logits) {
    Tensor p(logits.shape());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(logits[i]);
    return p;
}

DomainMapScale map_scale(Scale s) { return static_cast<DomainMapScale>(static_cast<int>(s)); }

struct LayerSpec {
    int out;
    ConvGeometry geometry;
};

void build(ConvStack& stack, const std::string& prefix, int in, const std::vector<LayerSpec>& specs,
           bool last_is_logit) {
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const bool activate = !(last_is_logit && i + 1 == specs.size());
        stack.add(ConvLayer(prefix + ".conv" + std::to_string(i), in, specs[i].out, specs[i].geometry, activate));
        in = specs[i].out;
    }
}

}  // namespace

void GrlConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ConfigError("GRL lambda must be finite and >= 0, got " + std::to_string(lambda));
    }
}

Tensor grl_forward(const Tensor& x, const GrlConfig&) { return x; }

Tensor grl_backward(const Tensor& upstream_grad, const GrlConfig& cfg) {
    Tensor out = upstream_grad;
    out *= -cfg.lambda;
    return out;
}

const char* dan_kind_name(DanKind k) noexcept {
    switch (k) {
        case DanKind::Baseline: return "baseline";
        case DanKind::Pfr: return "pfr";
        case DanKind::Uc: return "uc";
        case DanKind::Integrated: return "integrated";
    }
    return "?";
}

std::optional<DanKind> parse_dan_kind(const std::string& s) {
    for (DanKind k : {DanKind::Baseline, DanKind::Pfr, DanKind::Uc, DanKind::Integrated}) {
        if (s == dan_kind_name(k)) return k;
    }
    return std::nullopt;
}

ScaleSet::ScaleSet(std::initializer_list<Scale> scales) {
    for (Scale s : scales) insert(s);
}

ScaleSet ScaleSet::from_mask(unsigned mask) {
    ScaleSet s;
    for (int i = 0; i < kNumScales; ++i)
        if ((mask >> i) & 1U) s.insert(static_cast<Scale>(i));
    return s;
}

std::vector<Scale> ScaleSet::scales() const {
    std::vector<Scale> out;
    for (int i = 0; i < kNumScales; ++i)
        if (contains(static_cast<Scale>(i))) out.push_back(static_cast<Scale>(i));
    return out;
}

std::string ScaleSet::str() const {
    if (empty()) return "none";
    std::string out;
    for (Scale s : scales()) {
        if (!out.empty()) out += "+";
        out += scale_name(s);
    }
    return out;
}

std::optional<ScaleSet> ScaleSet::parse(const std::string& s) {
    ScaleSet out;
    if (s == "none" || s.empty()) return out;
    std::size_t begin = 0;
    while (begin <= s.size()) {
        const std::size_t end = std::min(s.find_first_of("+,", begin), s.size());
        const std::string token = s.substr(begin, end - begin);
        bool found = false;
        for (Scale sc : {Scale::F1, Scale::F2, Scale::F3}) {
            if (token == scale_name(sc)) {
                out.insert(sc);
                found = true;
            }
        }
        if (!found) return std::nullopt;
        begin = end + 1;
    }
    return out;
}

void DanVariant::validate() const {
    if (active_scales.empty()) throw ConfigError("DAN needs at least one active scale");
    if ((kind == DanKind::Uc || kind == DanKind::Integrated) && active_scales != ScaleSet::all()) {
        throw ConfigError(std::string(dan_kind_name(kind)) + " DAN requires all three scales, got " +
                          active_scales.str());
    }
}

const char* domain_map_scale_name(DomainMapScale s) noexcept {
    switch (s) {
        case DomainMapScale::F1: return "F1";
        case DomainMapScale::F2: return "F2";
        case DomainMapScale::F3: return "F3";
        case DomainMapScale::Unified: return "UNIFIED";
    }
    return "?";
}

DomainLabelVector DomainLabelVector::half_split(int batch) {
    DomainLabelVector v;
    v.t.assign(batch, 0);
    std::fill_n(v.t.begin(), batch / 2, 1);
    return v;
}

void DomainLabelVector::validate(int batch) const {
    if (static_cast<int>(t.size()) != batch) {
        throw DimensionError("domain label vector has " + std::to_string(t.size()) + " entries for batch of " +
                             std::to_string(batch));
    }
    for (int v : t) {
        if (v != 0 && v != 1) throw ValidationError("domain label must be 0 or 1, got " + std::to_string(v));
    }
}

double domain_map_loss(const DomainProbMap& map, const DomainLabelVector& labels) {
    const Tensor& p = map.probs;
    labels.validate(p.n());
    const std::size_t per_image = p.shape().image();
    double sum = 0.0;
    for (int n = 0; n < p.n(); ++n) {
        const double t = labels.t[n];
        for (double v : p.image(n)) {
            const double q = std::clamp(v, kProbEpsilon, 1.0 - kProbEpsilon);
            sum += t * std::log(q) + (1.0 - t) * std::log(1.0 - q);
        }
    }
    return -sum / (static_cast<double>(p.n()) * per_image);
}

double domain_classification_loss(const std::vector<DomainProbMap>& maps, const DomainLabelVector& labels) {
    if (maps.empty()) throw ConfigError("domain loss over zero maps");
    double sum = 0.0;
    for (const DomainProbMap& m : maps) sum += domain_map_loss(m, labels);
    return sum / static_cast<double>(maps.size());
}

std::vector<Tensor> domain_classification_logit_grads(const std::vector<DomainProbMap>& maps,
                                                      const DomainLabelVector& labels) {
    std::vector<Tensor> out;
    out.reserve(maps.size());
    for (const DomainProbMap& m : maps) {
        const Tensor& p = m.probs;
        labels.validate(p.n());
        const double scale = 1.0 / (static_cast<double>(p.size()) * static_cast<double>(maps.size()));
        Tensor g(p.shape());
        const std::size_t per_image = p.shape().image();
        for (int n = 0; n < p.n(); ++n) {
            const double t = labels.t[n];
            for (std::size_t i = 0; i < per_image; ++i) {
                const std::size_t idx = n * per_image + i;
                const double v = p[idx];
                if (v >= kProbEpsilon && v <= 1.0 - kProbEpsilon) g[idx] = (v - t) * scale;
            }
        }
        out.push_back(std::move(g));
    }
    return out;
}

double total_backbone_objective(double detection_loss, double domain_loss, const GrlConfig& cfg) {
    return detection_loss + cfg.lambda * domain_loss;
}

// ---------------------------------------------------------------------------

DomainAdaptationNetwork::DomainAdaptationNetwork(DanVariant variant, int base_channels)
    : variant_(variant), base_channels_(base_channels) {
    variant_.validate();
    const int c = base_channels;
    const std::array<std::string, kNumScales> prefix{"dan.f1", "dan.f2", "dan.f3"};
    switch (variant_.kind) {
        case DanKind::Baseline:
            if (c < 2 || c % 2 != 0) throw ConfigError("baseline DAN needs an even base width");
            for (int s = 0; s < kNumScales; ++s) {
                const int in = c << s;
                build(branches_[s], prefix[s], in, {{in / 2, kConv1x1}, {1, kConv1x1}}, true);
            }
            break;
        case DanKind::Pfr:
            if (c < 32 || c % 16 != 0) {
                throw ConfigError("PFR DAN needs a base width that is a multiple of 16 and >= 32, got " +
                                  std::to_string(c));
            }
            build(branches_[0], prefix[0], c, {{c / 2, kConv1x1}, {c / 4, kConv1x1}, {c / 16, kConv1x1}, {1, kConv1x1}},
                  true);
            build(branches_[1], prefix[1], 2 * c, {{c, kConv1x1}, {c / 4, kConv1x1}, {c / 16, kConv1x1}, {1, kConv1x1}},
                  true);
            build(branches_[2], prefix[2], 4 * c,
                  {{2 * c, kConv1x1}, {c, kConv1x1}, {c / 2, kConv1x1}, {c / 8, kConv1x1}, {1, kConv1x1}}, true);
            break;
        case DanKind::Uc:
            if (c < 2 || c % 2 != 0) throw ConfigError("UC DAN needs an even base width");
            build(branches_[0], prefix[0], c, {{c / 2, kConv3x3Stride2}, {c / 2, kConv3x3Stride2}}, false);
            build(branches_[1], prefix[1], 2 * c, {{c / 2, kConv3x3Stride2}}, false);
            build(branches_[2], prefix[2], 4 * c, {{c / 2, kConv1x1}}, false);
            build(fusion_, "dan.fusion", 3 * (c / 2), {{c / 2, kConv1x1}, {1, kConv1x1}}, true);
            break;
        case DanKind::Integrated:
            if (c < 32 || c % 16 != 0) {
                throw ConfigError("integrated DAN needs a base width that is a multiple of 16 and >= 32, got " +
                                  std::to_string(c));
            }
            build(branches_[0], prefix[0], c, {{c / 2, kConv3x3Stride2}, {c / 4, kConv3x3Stride2}}, false);
            build(branches_[1], prefix[1], 2 * c, {{c, kConv1x1}, {c / 4, kConv3x3Stride2}}, false);
            build(branches_[2], prefix[2], 4 * c, {{2 * c, kConv1x1}, {c, kConv1x1}, {c / 4, kConv1x1}}, false);
            build(fusion_, "dan.fusion", 3 * (c / 4), {{c / 8, kConv1x1}, {1, kConv1x1}}, true);
            break;
    }
}

void DomainAdaptationNetwork::init(Rng& rng) {
    auto init_stack = [&rng](ConvStack& st) {
        for (ConvLayer& l : st.layers()) {
            if (l.activated()) {
                l.init_he(rng);
            } else {
                l.init_normal(rng, 0.01, 0.0);
            }
        }
    };
    for (ConvStack& b : branches_) init_stack(b);
    init_stack(fusion_);
}

template <typename Self>
std::vector<DomainProbMap> DomainAdaptationNetwork::run(Self& self, const FeaturePyramid& taps) {
    constexpr bool training = !std::is_const_v<Self>;
    taps.validate();
    if (taps.base_channels() != self.base_channels_) {
        throw DimensionError("DAN built for base width " + std::to_string(self.base_channels_) + ", pyramid has " +
                             std::to_string(taps.base_channels()));
    }
    auto apply = [](auto& stack, const Tensor& x) {
        if constexpr (training) {
            return stack.forward(x);
        } else {
            return stack.infer(x);
        }
    };
    const GrlConfig identity{};
    std::vector<DomainProbMap> maps;
    if constexpr (training) {
        self.forward_scales_ = self.variant_.active_scales.scales();
        self.tap_shapes_ = FeaturePyramid::zeros_like(taps);
    }
    if (!self.unified()) {
        for (Scale s : self.variant_.active_scales.scales()) {
            const Tensor logits = apply(self.branches_[static_cast<int>(s)], grl_forward(taps[s], identity));
            maps.push_back(DomainProbMap{sigmoid_map(logits), map_scale(s)});
        }
        return maps;
    }
    std::array<Tensor, kNumScales> branch_out;
    for (int i = 0; i < kNumScales; ++i) {
        branch_out[i] = apply(self.branches_[i], grl_forward(taps[static_cast<Scale>(i)], identity));
    }
    const Tensor* parts[] = {&branch_out[0], &branch_out[1], &branch_out[2]};
    const Tensor logits = apply(self.fusion_, concat_channels(parts));
    maps.push_back(DomainProbMap{sigmoid_map(logits), DomainMapScale::Unified});
    return maps;
}

std::vector<DomainProbMap> DomainAdaptationNetwork::forward(const FeaturePyramid& taps) { return run(*this, taps); }

std::vector<DomainProbMap> DomainAdaptationNetwork::infer(const FeaturePyramid& taps) const { return run(*this, taps); }

FeaturePyramid DomainAdaptationNetwork::backward_unreversed(const std::vector<Tensor>& logit_grads) {
    if (tap_shapes_.f1.empty()) throw DimensionError("DAN backward without forward");
    FeaturePyramid out = tap_shapes_;
    if (!unified()) {
        if (logit_grads.size() != forward_scales_.size()) {
            throw DimensionError("DAN backward: expected " + std::to_string(forward_scales_.size()) + " map grads");
        }
        for (std::size_t k = 0; k < forward_scales_.size(); ++k) {
            const Scale s = forward_scales_[k];
            out[s] = branches_[static_cast<int>(s)].backward(logit_grads[k]);
        }
        return out;
    }
    if (logit_grads.size() != 1) throw DimensionError("unified DAN backward expects one map gradient");
    const std::vector<int> widths = branch_output_channels();
    auto parts = split_channels(fusion_.backward(logit_grads[0]), widths);
    for (int i = 0; i < kNumScales; ++i) out[static_cast<Scale>(i)] = branches_[i].backward(parts[i]);
    return out;
}

FeaturePyramid DomainAdaptationNetwork::backward(const std::vector<Tensor>& logit_grads, const GrlConfig& grl) {
    FeaturePyramid g = backward_unreversed(logit_grads);
    return FeaturePyramid{grl_backward(g.f1, grl), grl_backward(g.f2, grl), grl_backward(g.f3, grl)};
}

ParameterRefs DomainAdaptationNetwork::parameters() {
    ParameterRefs out;
    for (ConvStack& b : branches_)
        for (Parameter* p : b.parameters()) out.push_back(p);
    for (Parameter* p : fusion_.parameters()) out.push_back(p);
    return out;
}

ParameterRefs DomainAdaptationNetwork::branch_parameters(Scale s) { return branches_[static_cast<int>(s)].parameters(); }

ParameterRefs DomainAdaptationNetwork::fusion_parameters() { return fusion_.parameters(); }

std::vector<int> DomainAdaptationNetwork::path_schedule(Scale s) const {
    std::vector<int> out = branches_[static_cast<int>(s)].channel_schedule();
    if (unified()) {
        for (int c : fusion_.channel_schedule()) out.push_back(c);
    }
    return out;
}

std::vector<int> DomainAdaptationNetwork::branch_output_channels() const {
    std::vector<int> out;
    for (const ConvStack& b : branches_) out.push_back(b.layers().back().out_channels());
    return out;
}

}  // namespace dadet
