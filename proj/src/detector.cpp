#include "dadet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dadet/errors.hpp"

namespace dadet {
namespace {

double sigmoid(double z) noexcept { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// Numerically stable BCE on a logit; d/dz = sigmoid(z) - t.
double bce_with_logit(double z, double t) noexcept {
    return std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
}

double shape_iou(double w1, double h1, double w2, double h2) noexcept {
    const double inter = std::min(w1, w2) * std::min(h1, h2);
    return inter / (w1 * h1 + w2 * h2 - inter);
}

struct GiouGrad {
    double loss = 0.0;  // 1 - GIoU
    double d_x1 = 0.0, d_y1 = 0.0, d_x2 = 0.0, d_y2 = 0.0;
};

// 1 - GIoU of predicted corners p against ground truth g, with gradient w.r.t. p.
GiouGrad giou_loss(const BoxCorners& p, const BoxCorners& g) {
    const double pw = p.x2 - p.x1;
    const double ph = p.y2 - p.y1;
    const double area_p = pw * ph;
    const double area_g = (g.x2 - g.x1) * (g.y2 - g.y1);

    const double ix = std::min(p.x2, g.x2) - std::max(p.x1, g.x1);
    const double iy = std::min(p.y2, g.y2) - std::max(p.y1, g.y1);
    const double iw = std::max(ix, 0.0);
    const double ih = std::max(iy, 0.0);
    const double inter = iw * ih;
    const double uni = area_p + area_g - inter;

    const double cw = std::max(p.x2, g.x2) - std::min(p.x1, g.x1);
    const double ch = std::max(p.y2, g.y2) - std::min(p.y1, g.y1);
    const double enclose = cw * ch;

    GiouGrad out;
    out.loss = 2.0 - inter / uni - uni / enclose;

    const double dl_dinter = -(uni + inter) / (uni * uni) + 1.0 / enclose;
    const double dl_darea = inter / (uni * uni) - 1.0 / enclose;
    const double dl_denclose = uni / (enclose * enclose);

    // area_p
    out.d_x1 += dl_darea * -ph;
    out.d_x2 += dl_darea * ph;
    out.d_y1 += dl_darea * -pw;
    out.d_y2 += dl_darea * pw;
    // intersection
    if (ix > 0.0 && iy > 0.0) {
        if (p.x2 < g.x2) out.d_x2 += dl_dinter * ih;
        if (p.x1 > g.x1) out.d_x1 -= dl_dinter * ih;
        if (p.y2 < g.y2) out.d_y2 += dl_dinter * iw;
        if (p.y1 > g.y1) out.d_y1 -= dl_dinter * iw;
    }
    // enclosing box
    if (p.x2 > g.x2) out.d_x2 += dl_denclose * ch;
    if (p.x1 < g.x1) out.d_x1 -= dl_denclose * ch;
    if (p.y2 > g.y2) out.d_y2 += dl_denclose * cw;
    if (p.y1 < g.y1) out.d_y1 -= dl_denclose * cw;
    return out;
}

std::size_t head_index(const Tensor& t, int n, int channel, int gy, int gx) {
    return ((static_cast<std::size_t>(n) * t.c() + channel) * t.h() + gy) * t.w() + gx;
}

}  // namespace

const char* scale_name(Scale s) noexcept {
    switch (s) {
        case Scale::F1: return "F1";
        case Scale::F2: return "F2";
        case Scale::F3: return "F3";
    }
    return "?";
}

AnchorSet default_anchors() {
    // derive_anchors() over 2000 default source scenes (seed 1).
    return AnchorSet{Anchor{0.1354, 0.1245}, Anchor{0.1639, 0.1604}, Anchor{0.2086, 0.1859},
                     Anchor{0.2123, 0.2347}, Anchor{0.2642, 0.2346}, Anchor{0.3036, 0.2742},
                     Anchor{0.3062, 0.3355}, Anchor{0.3700, 0.3253}, Anchor{0.3909, 0.3887}};
}

AnchorSet derive_anchors(std::span<const GroundTruthBox> boxes, int iterations) {
    constexpr int k = kNumScales * kAnchorsPerScale;
    if (boxes.size() < static_cast<std::size_t>(k)) {
        throw ValidationError("need at least " + std::to_string(k) + " boxes to derive anchors");
    }
    std::vector<GroundTruthBox> sorted(boxes.begin(), boxes.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const GroundTruthBox& a, const GroundTruthBox& b) { return a.w * a.h < b.w * b.h; });
    AnchorSet centers;
    for (int i = 0; i < k; ++i) {
        const auto& b = sorted[static_cast<std::size_t>((i + 0.5) / k * static_cast<double>(sorted.size()))];
        centers[i] = Anchor{b.w, b.h};
    }
    std::vector<int> owner(sorted.size(), -1);
    for (int it = 0; it < iterations; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            int best = 0;
            double best_iou = -1.0;
            for (int c = 0; c < k; ++c) {
                const double v = shape_iou(sorted[i].w, sorted[i].h, centers[c].w, centers[c].h);
                if (v > best_iou) {
                    best_iou = v;
                    best = c;
                }
            }
            changed |= owner[i] != best;
            owner[i] = best;
        }
        std::array<double, k> sw{}, sh{};
        std::array<int, k> count{};
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            sw[owner[i]] += sorted[i].w;
            sh[owner[i]] += sorted[i].h;
            ++count[owner[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (count[c] > 0) centers[c] = Anchor{sw[c] / count[c], sh[c] / count[c]};
        }
        if (!changed) break;
    }
    std::stable_sort(centers.begin(), centers.end(),
                     [](const Anchor& a, const Anchor& b) { return a.w * a.h < b.w * b.h; });
    return centers;
}

int DetectorConfig::base_channels() const { return static_cast<int>(std::lround(256.0 * channel_multiplier)); }

void DetectorConfig::validate() const {
    if (image_size <= 0 || image_size % kTotalStride != 0) {
        throw ConfigError("image_size must be a positive multiple of " + std::to_string(kTotalStride) + ", got " +
                          std::to_string(image_size));
    }
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    const int c = base_channels();
    if (c < 4 || c % 4 != 0) {
        throw ConfigError("channel_multiplier gives base width " + std::to_string(c) +
                          "; need a positive multiple of 4");
    }
    if (stage_depth < 0) throw ConfigError("stage_depth must be >= 0");
    for (const Anchor& a : anchors) {
        if (!(a.w > 0.0 && a.h > 0.0)) throw ConfigError("anchors must have positive size");
    }
}

void FeaturePyramid::validate() const {
    const Shape& s1 = f1.shape();
    const Shape& s2 = f2.shape();
    const Shape& s3 = f3.shape();
    const bool ok = s1.n > 0 && s1.h == s1.w && s2.n == s1.n && s3.n == s1.n && s1.h % 4 == 0 &&
                    s2.h * 2 == s1.h && s2.w * 2 == s1.w && s3.h * 2 == s2.h && s3.w * 2 == s2.w &&
                    s2.c == 2 * s1.c && s3.c == 2 * s2.c;
    if (!ok) {
        throw DimensionError("feature pyramid violates 1:2:4 geometry: " + s1.str() + " " + s2.str() + " " +
                             s3.str());
    }
}

FeaturePyramid FeaturePyramid::slice_batch(int begin, int end) const {
    return FeaturePyramid{f1.slice_batch(begin, end), f2.slice_batch(begin, end), f3.slice_batch(begin, end)};
}

FeaturePyramid FeaturePyramid::zeros_like(const FeaturePyramid& p) {
    return FeaturePyramid{Tensor(p.f1.shape()), Tensor(p.f2.shape()), Tensor(p.f3.shape())};
}

// ---------------------------------------------------------------------------

Backbone::Backbone(const DetectorConfig& config) : image_size_(config.image_size) {
    config.validate();
    const int c = config.base_channels();
    stem_.add(ConvLayer("backbone.stem0", 3, c / 4, kConv3x3Stride2, true));
    stem_.add(ConvLayer("backbone.stem1", c / 4, c / 2, kConv3x3Stride2, true));
    int in = c / 2;
    for (int s = 0; s < kNumScales; ++s) {
        const int out = c << s;
        const std::string prefix = "backbone.stage" + std::to_string(s + 1);
        stages_[s].add(ConvLayer(prefix + ".down", in, out, kConv3x3Stride2, true));
        for (int d = 0; d < config.stage_depth; ++d) {
            stages_[s].add(ConvLayer(prefix + ".conv" + std::to_string(d), out, out, kConv3x3, true));
        }
        in = out;
    }
}

void Backbone::init(Rng& rng) {
    for (ConvLayer& l : stem_.layers()) l.init_he(rng);
    for (ConvStack& st : stages_)
        for (ConvLayer& l : st.layers()) l.init_he(rng);
}

void Backbone::check_input(const Tensor& images) const {
    if (images.n() <= 0) throw DimensionError("empty image batch");
    if (images.c() != 3) throw DimensionError("expected 3-channel images, got " + images.shape().str());
    if (images.h() != image_size_ || images.w() != image_size_) {
        throw DimensionError("expected " + std::to_string(image_size_) + "x" + std::to_string(image_size_) +
                             " images, got " + images.shape().str());
    }
}

FeaturePyramid Backbone::forward(const Tensor& images) {
    check_input(images);
    Tensor x = stem_.forward(images);
    FeaturePyramid p;
    p.f1 = stages_[0].forward(x);
    p.f2 = stages_[1].forward(p.f1);
    p.f3 = stages_[2].forward(p.f2);
    return p;
}

Tensor Backbone::backward(const FeaturePyramid& tap_grads) {
    Tensor g3 = stages_[2].backward(tap_grads.f3);
    g3 += tap_grads.f2;
    Tensor g2 = stages_[1].backward(g3);
    g2 += tap_grads.f1;
    Tensor g1 = stages_[0].backward(g2);
    return stem_.backward(g1);
}

FeaturePyramid Backbone::infer(const Tensor& images) const {
    check_input(images);
    Tensor x = stem_.infer(images);
    FeaturePyramid p;
    p.f1 = stages_[0].infer(x);
    p.f2 = stages_[1].infer(p.f1);
    p.f3 = stages_[2].infer(p.f2);
    return p;
}

ParameterRefs Backbone::parameters() {
    ParameterRefs out = stem_.parameters();
    for (ConvStack& st : stages_)
        for (Parameter* p : st.parameters()) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------------------

Neck::Neck(const DetectorConfig& config)
    : lateral3_("neck.lateral3", 4 * config.base_channels(), config.base_channels(), kConv1x1, true),
      merge2_("neck.merge2", 3 * config.base_channels(), config.base_channels(), kConv1x1, true),
      merge1_("neck.merge1", 2 * config.base_channels(), config.base_channels(), kConv1x1, true),
      width_(config.base_channels()) {}

void Neck::init(Rng& rng) {
    lateral3_.init_he(rng);
    merge2_.init_he(rng);
    merge1_.init_he(rng);
}

std::array<Tensor, kNumScales> Neck::forward(const FeaturePyramid& taps) {
    Tensor p3 = lateral3_.forward(taps.f3);
    const Tensor u3 = kernels::upsample2x(p3);
    const Tensor* parts2[] = {&u3, &taps.f2};
    Tensor p2 = merge2_.forward(concat_channels(parts2));
    const Tensor u2 = kernels::upsample2x(p2);
    const Tensor* parts1[] = {&u2, &taps.f1};
    Tensor p1 = merge1_.forward(concat_channels(parts1));
    return {std::move(p1), std::move(p2), std::move(p3)};
}

FeaturePyramid Neck::backward(const std::array<Tensor, kNumScales>& level_grads) {
    FeaturePyramid out;
    const int split1[] = {width_, width_};
    auto g1 = split_channels(merge1_.backward(level_grads[0]), split1);
    out.f1 = std::move(g1[1]);
    Tensor gp2 = level_grads[1];
    gp2 += kernels::upsample2x_backward(g1[0]);

    const int split2[] = {width_, 2 * width_};
    auto g2 = split_channels(merge2_.backward(gp2), split2);
    out.f2 = std::move(g2[1]);
    Tensor gp3 = level_grads[2];
    gp3 += kernels::upsample2x_backward(g2[0]);
    out.f3 = lateral3_.backward(gp3);
    return out;
}

std::array<Tensor, kNumScales> Neck::infer(const FeaturePyramid& taps) const {
    Tensor p3 = lateral3_.infer(taps.f3);
    const Tensor u3 = kernels::upsample2x(p3);
    const Tensor* parts2[] = {&u3, &taps.f2};
    Tensor p2 = merge2_.infer(concat_channels(parts2));
    const Tensor u2 = kernels::upsample2x(p2);
    const Tensor* parts1[] = {&u2, &taps.f1};
    Tensor p1 = merge1_.infer(concat_channels(parts1));
    return {std::move(p1), std::move(p2), std::move(p3)};
}

ParameterRefs Neck::parameters() {
    ParameterRefs out;
    for (ConvLayer* l : {&lateral3_, &merge2_, &merge1_})
        for (Parameter* p : l->parameters()) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------------------

Head::Head(const DetectorConfig& config) : num_classes_(config.num_classes) {
    const int c = config.base_channels();
    for (int s = 0; s < kNumScales; ++s) {
        const std::string prefix = "head.level" + std::to_string(s + 1);
        branches_[s].add(ConvLayer(prefix + ".conv", c, c, kConv3x3, true));
        branches_[s].add(ConvLayer(prefix + ".pred", c, config.head_channels(), kConv1x1, false));
    }
}

void Head::init(Rng& rng) {
    const int per_anchor = 5 + num_classes_;
    for (ConvStack& b : branches_) {
        b.layers()[0].init_he(rng);
        ConvLayer& pred = b.layers()[1];
        pred.init_normal(rng, 0.01, 0.0);
        // Objectness prior of about 0.02 keeps the initial background loss small.
        for (int a = 0; a < kAnchorsPerScale; ++a) pred.bias().value[a * per_anchor + 4] = -4.0;
    }
}

HeadOutputs Head::forward(const std::array<Tensor, kNumScales>& levels) {
    HeadOutputs out;
    for (int s = 0; s < kNumScales; ++s) out[s] = branches_[s].forward(levels[s]);
    return out;
}

std::array<Tensor, kNumScales> Head::backward(const HeadOutputs& grads) {
    std::array<Tensor, kNumScales> out;
    for (int s = 0; s < kNumScales; ++s) out[s] = branches_[s].backward(grads[s]);
    return out;
}

HeadOutputs Head::infer(const std::array<Tensor, kNumScales>& levels) const {
    HeadOutputs out;
    for (int s = 0; s < kNumScales; ++s) out[s] = branches_[s].infer(levels[s]);
    return out;
}

ParameterRefs Head::parameters() {
    ParameterRefs out;
    for (ConvStack& b : branches_)
        for (Parameter* p : b.parameters()) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------------------

std::vector<TargetAssignment> assign_targets(std::span<const std::vector<GroundTruthBox>> targets,
                                             const DetectorConfig& config) {
    std::vector<TargetAssignment> out;
    for (std::size_t n = 0; n < targets.size(); ++n) {
        for (const GroundTruthBox& box : targets[n]) {
            validate_box(box, config.num_classes);
            int best = 0;
            double best_iou = -1.0;
            for (int i = 0; i < kNumScales * kAnchorsPerScale; ++i) {
                const double v = shape_iou(box.w, box.h, config.anchors[i].w, config.anchors[i].h);
                if (v > best_iou) {
                    best_iou = v;
                    best = i;
                }
            }
            TargetAssignment t;
            t.image = static_cast<int>(n);
            t.scale = best / kAnchorsPerScale;
            t.anchor = best % kAnchorsPerScale;
            const int grid = config.grid(static_cast<Scale>(t.scale));
            t.gx = std::clamp(static_cast<int>(std::floor(box.cx * grid)), 0, grid - 1);
            t.gy = std::clamp(static_cast<int>(std::floor(box.cy * grid)), 0, grid - 1);
            t.box = box;
            const bool taken = std::any_of(out.begin(), out.end(), [&](const TargetAssignment& o) {
                return o.image == t.image && o.scale == t.scale && o.anchor == t.anchor && o.gx == t.gx &&
                       o.gy == t.gy;
            });
            if (!taken) out.push_back(t);
        }
    }
    return out;
}

BoxCorners decode_box(double tx, double ty, double tw, double th, int gx, int gy, int grid, const Anchor& anchor) {
    const double cx = (gx + sigmoid(tx)) / grid;
    const double cy = (gy + sigmoid(ty)) / grid;
    const double w = anchor.w * std::exp(std::clamp(tw, -kBoxLogClamp, kBoxLogClamp));
    const double h = anchor.h * std::exp(std::clamp(th, -kBoxLogClamp, kBoxLogClamp));
    return BoxCorners{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
}

DetectionLossResult detection_loss(const HeadOutputs& outputs, std::span<const std::vector<GroundTruthBox>> targets,
                                   const DetectorConfig& config) {
    const int batch = outputs[0].n();
    if (static_cast<int>(targets.size()) != batch) {
        throw DimensionError("detection_loss: " + std::to_string(targets.size()) + " target lists for batch of " +
                             std::to_string(batch));
    }
    const int per_anchor = 5 + config.num_classes;
    const LossWeights& lw = config.loss_weights;

    DetectionLossResult result;
    std::array<Tensor, kNumScales> obj_target;
    for (int s = 0; s < kNumScales; ++s) {
        const Tensor& out = outputs[s];
        const int grid = config.grid(static_cast<Scale>(s));
        if (out.shape() != Shape{batch, config.head_channels(), grid, grid}) {
            throw DimensionError("head output " + out.shape().str() + " does not match config");
        }
        result.grad[s] = Tensor(out.shape());
        obj_target[s] = Tensor(batch, kAnchorsPerScale, grid, grid);
    }

    const auto assignments = assign_targets(targets, config);
    const double inv_norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, assignments.size()));
    double obj_sum = 0.0, cls_sum = 0.0, box_sum = 0.0;

    for (const TargetAssignment& t : assignments) {
        const Tensor& out = outputs[t.scale];
        Tensor& grad = result.grad[t.scale];
        const int grid = out.h();
        const int base = t.anchor * per_anchor;
        obj_target[t.scale].at(t.image, t.anchor, t.gy, t.gx) = 1.0;

        for (int k = 0; k < config.num_classes; ++k) {
            const std::size_t idx = head_index(out, t.image, base + 5 + k, t.gy, t.gx);
            const double target = k == t.box.class_id ? 1.0 : 0.0;
            cls_sum += bce_with_logit(out[idx], target);
            grad[idx] += lw.classification * inv_norm * (sigmoid(out[idx]) - target);
        }

        const std::size_t ix = head_index(out, t.image, base + 0, t.gy, t.gx);
        const std::size_t iy = head_index(out, t.image, base + 1, t.gy, t.gx);
        const std::size_t iw = head_index(out, t.image, base + 2, t.gy, t.gx);
        const std::size_t ih = head_index(out, t.image, base + 3, t.gy, t.gx);
        const Anchor& anchor = config.anchors[t.scale * kAnchorsPerScale + t.anchor];
        const BoxCorners pred = decode_box(out[ix], out[iy], out[iw], out[ih], t.gx, t.gy, grid, anchor);
        const BoxCorners gt{t.box.cx - t.box.w / 2.0, t.box.cy - t.box.h / 2.0, t.box.cx + t.box.w / 2.0,
                            t.box.cy + t.box.h / 2.0};
        const GiouGrad gi = giou_loss(pred, gt);
        box_sum += gi.loss;

        const double scale = lw.box * inv_norm;
        const double sx = sigmoid(out[ix]);
        const double sy = sigmoid(out[iy]);
        const double d_cx = gi.d_x1 + gi.d_x2;
        const double d_cy = gi.d_y1 + gi.d_y2;
        const double d_w = (gi.d_x2 - gi.d_x1) / 2.0;
        const double d_h = (gi.d_y2 - gi.d_y1) / 2.0;
        grad[ix] += scale * d_cx * sx * (1.0 - sx) / grid;
        grad[iy] += scale * d_cy * sy * (1.0 - sy) / grid;
        if (std::abs(out[iw]) < kBoxLogClamp) grad[iw] += scale * d_w * (pred.x2 - pred.x1);
        if (std::abs(out[ih]) < kBoxLogClamp) grad[ih] += scale * d_h * (pred.y2 - pred.y1);
    }

    for (int s = 0; s < kNumScales; ++s) {
        const Tensor& out = outputs[s];
        Tensor& grad = result.grad[s];
        const Tensor& tgt = obj_target[s];
        for (int n = 0; n < batch; ++n)
            for (int a = 0; a < kAnchorsPerScale; ++a)
                for (int gy = 0; gy < out.h(); ++gy)
                    for (int gx = 0; gx < out.w(); ++gx) {
                        const std::size_t idx = head_index(out, n, a * per_anchor + 4, gy, gx);
                        const double target = tgt.at(n, a, gy, gx);
                        obj_sum += bce_with_logit(out[idx], target);
                        grad[idx] += lw.objectness * inv_norm * (sigmoid(out[idx]) - target);
                    }
    }

    result.terms.objectness = obj_sum * inv_norm;
    result.terms.classification = cls_sum * inv_norm;
    result.terms.box = box_sum * inv_norm;
    result.terms.total = lw.objectness * result.terms.objectness + lw.classification * result.terms.classification +
                         lw.box * result.terms.box;
    return result;
}

std::vector<Detection> non_max_suppression(std::vector<Detection> candidates, double iou_threshold) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    std::vector<Detection> kept;
    for (const Detection& d : candidates) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
            return k.class_id == d.class_id && iou(k.box, d.box) > iou_threshold;
        });
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

std::vector<Detection> decode_and_nms(const HeadOutputs& outputs, int image, const DetectorConfig& config,
                                      double confidence_threshold, double iou_threshold) {
    if (!(confidence_threshold > 0.0 && confidence_threshold < 1.0) || !(iou_threshold > 0.0 && iou_threshold < 1.0)) {
        throw ConfigError("decode thresholds must lie in (0, 1)");
    }
    const int per_anchor = 5 + config.num_classes;
    const double side = config.image_size;
    std::vector<Detection> candidates;
    for (int s = 0; s < kNumScales; ++s) {
        const Tensor& out = outputs[s];
        const int grid = out.h();
        for (int a = 0; a < kAnchorsPerScale; ++a) {
            const int base = a * per_anchor;
            const Anchor& anchor = config.anchors[s * kAnchorsPerScale + a];
            for (int gy = 0; gy < grid; ++gy)
                for (int gx = 0; gx < grid; ++gx) {
                    const double obj = sigmoid(out.at(image, base + 4, gy, gx));
                    if (obj < confidence_threshold) continue;
                    int best_class = 0;
                    double best_prob = -1.0;
                    for (int k = 0; k < config.num_classes; ++k) {
                        const double p = sigmoid(out.at(image, base + 5 + k, gy, gx));
                        if (p > best_prob) {
                            best_prob = p;
                            best_class = k;
                        }
                    }
                    const double conf = obj * best_prob;
                    if (conf < confidence_threshold) continue;
                    const BoxCorners b = decode_box(out.at(image, base, gy, gx), out.at(image, base + 1, gy, gx),
                                                    out.at(image, base + 2, gy, gx), out.at(image, base + 3, gy, gx),
                                                    gx, gy, grid, anchor);
                    Detection d;
                    d.class_id = best_class;
                    d.confidence = conf;
                    d.box = BoxCorners{std::clamp(b.x1, 0.0, 1.0) * side, std::clamp(b.y1, 0.0, 1.0) * side,
                                       std::clamp(b.x2, 0.0, 1.0) * side, std::clamp(b.y2, 0.0, 1.0) * side};
                    if (d.box.x2 > d.box.x1 && d.box.y2 > d.box.y1) candidates.push_back(d);
                }
        }
    }
    return non_max_suppression(std::move(candidates), iou_threshold);
}

// ---------------------------------------------------------------------------

Detector::Detector(DetectorConfig config)
    : config_((config.validate(), config)), backbone_(config_), neck_(config_), head_(config_) {}

void Detector::init(Rng& rng) {
    backbone_.init(rng);
    neck_.init(rng);
    head_.init(rng);
}

DetectionLossTerms Detector::detection_loss_and_backward(const FeaturePyramid& pyramid,
                                                         std::span<const std::vector<GroundTruthBox>> targets,
                                                         FeaturePyramid& tap_grads) {
    const auto levels = neck_.forward(pyramid);
    const HeadOutputs outputs = head_.forward(levels);
    DetectionLossResult loss = detection_loss(outputs, targets, config_);
    tap_grads = neck_.backward(head_.backward(loss.grad));
    return loss.terms;
}

HeadOutputs Detector::infer(const Tensor& images) const { return head_.infer(neck_.infer(backbone_.infer(images))); }

std::vector<std::vector<Detection>> Detector::detect(const Tensor& images, double confidence_threshold,
                                                     double iou_threshold) const {
    const HeadOutputs outputs = infer(images);
    std::vector<std::vector<Detection>> out;
    out.reserve(images.n());
    for (int n = 0; n < images.n(); ++n) {
        out.push_back(decode_and_nms(outputs, n, config_, confidence_threshold, iou_threshold));
    }
    return out;
}

ParameterRefs Detector::parameters() {
    ParameterRefs out = backbone_.parameters();
    for (Parameter* p : neck_.parameters()) out.push_back(p);
    for (Parameter* p : head_.parameters()) out.push_back(p);
    return out;
}

}  // namespace dadet
