#pragma once

#include <array>
#include <span>
#include <vector>

#include "dadet/boxes.hpp"
#include "dadet/layers.hpp"
#include "dadet/tensor.hpp"

namespace dadet {

inline constexpr int kNumScales = 3;
inline constexpr int kAnchorsPerScale = 3;
inline constexpr int kTotalStride = 32;                      // five stride-2 layers
inline constexpr std::array<int, kNumScales> kScaleStrides{8, 16, 32};

// Backbone taps, finest first.
enum class Scale { F1 = 0, F2 = 1, F3 = 2 };

const char* scale_name(Scale s) noexcept;

// Width and height normalized to the image side.
struct Anchor {
    double w = 0.0;
    double h = 0.0;

    friend bool operator==(const Anchor&, const Anchor&) = default;
};

using AnchorSet = std::array<Anchor, kNumScales * kAnchorsPerScale>;

// k-means (1 - IoU distance) anchors for the default synthetic scene generator,
// sorted by area; anchors [3s, 3s+3) belong to scale s.
AnchorSet default_anchors();

// Deterministic k-means over box sizes with 1 - IoU distance. Result sorted by area.
AnchorSet derive_anchors(std::span<const GroundTruthBox> boxes, int iterations = 50);

struct LossWeights {
    double objectness = 1.0;
    double classification = 1.0;
    double box = 2.0;
};

struct DetectorConfig {
    int image_size = 64;
    int num_classes = 3;
    // 1.0 gives the reference 256/512/1024 tap widths.
    double channel_multiplier = 0.125;
    // Extra stride-1 3x3 convolutions after each tap's downsampling layer.
    int stage_depth = 1;
    AnchorSet anchors = default_anchors();
    LossWeights loss_weights{};

    int base_channels() const;
    int grid(Scale s) const { return image_size / kScaleStrides[static_cast<int>(s)]; }
    int head_channels() const { return kAnchorsPerScale * (5 + num_classes); }
    void validate() const;  // throws ConfigError
};

// The three backbone taps. f2 and f3 halve the spatial side and double the channels.
struct FeaturePyramid {
    Tensor f1;
    Tensor f2;
    Tensor f3;

    Tensor& operator[](Scale s) noexcept { return s == Scale::F1 ? f1 : (s == Scale::F2 ? f2 : f3); }
    const Tensor& operator[](Scale s) const noexcept {
        return s == Scale::F1 ? f1 : (s == Scale::F2 ? f2 : f3);
    }

    int batch() const noexcept { return f1.n(); }
    int base_width() const noexcept { return f1.h(); }
    int base_channels() const noexcept { return f1.c(); }

    // Throws DimensionError if the 1:2:4 geometry does not hold.
    void validate() const;

    FeaturePyramid slice_batch(int begin, int end) const;
    static FeaturePyramid zeros_like(const FeaturePyramid& p);
};

// Plain strided convolutions: two stem layers then one stride-2 layer (plus
// `stage_depth` stride-1 layers) per tap.
class Backbone {
public:
    explicit Backbone(const DetectorConfig& config);

    void init(Rng& rng);
    FeaturePyramid forward(const Tensor& images);
    // Gradients arriving at each tap; returns the gradient w.r.t. the images.
    Tensor backward(const FeaturePyramid& tap_grads);
    FeaturePyramid infer(const Tensor& images) const;

    ParameterRefs parameters();

private:
    void check_input(const Tensor& images) const;

    int image_size_;
    ConvStack stem_;
    std::array<ConvStack, kNumScales> stages_;
};

// Top-down merge of the taps into three prediction levels of width C.
class Neck {
public:
    explicit Neck(const DetectorConfig& config);

    void init(Rng& rng);
    std::array<Tensor, kNumScales> forward(const FeaturePyramid& taps);
    FeaturePyramid backward(const std::array<Tensor, kNumScales>& level_grads);
    std::array<Tensor, kNumScales> infer(const FeaturePyramid& taps) const;

    ParameterRefs parameters();

private:
    ConvLayer lateral3_;
    ConvLayer merge2_;
    ConvLayer merge1_;
    int width_;
};

// Raw head maps, finest first: (N, A*(5+K), G, G) with per-anchor channel
// layout [tx, ty, tw, th, objectness, class_0 .. class_{K-1}].
using HeadOutputs = std::array<Tensor, kNumScales>;

class Head {
public:
    explicit Head(const DetectorConfig& config);

    void init(Rng& rng);
    HeadOutputs forward(const std::array<Tensor, kNumScales>& levels);
    std::array<Tensor, kNumScales> backward(const HeadOutputs& grads);
    HeadOutputs infer(const std::array<Tensor, kNumScales>& levels) const;

    ParameterRefs parameters();

private:
    std::array<ConvStack, kNumScales> branches_;
    int num_classes_;
};

// Ground truth placed on one (scale, anchor, cell) slot.
struct TargetAssignment {
    int image = 0;
    int scale = 0;
    int anchor = 0;  // 0..2 within the scale
    int gy = 0;
    int gx = 0;
    GroundTruthBox box;
};

// Best-shape anchor over all nine; a slot already taken keeps its first box.
std::vector<TargetAssignment> assign_targets(std::span<const std::vector<GroundTruthBox>> targets,
                                             const DetectorConfig& config);

struct DetectionLossTerms {
    double objectness = 0.0;
    double classification = 0.0;
    double box = 0.0;  // (1 - GIoU) summed over assigned slots
    double total = 0.0;
};

struct DetectionLossResult {
    DetectionLossTerms terms;
    HeadOutputs grad;  // d total / d head outputs
};

inline constexpr double kBoxLogClamp = 4.0;

// L_det = (1/P) * sum over images of
//   w_obj * sum_slots BCE(obj) + w_cls * sum_assigned sum_k BCE(cls_k) + w_box * sum_assigned (1 - GIoU)
// with P the number of assigned slots in the batch (at least 1).
// Throws ValidationError for an invalid class id.
DetectionLossResult detection_loss(const HeadOutputs& outputs, std::span<const std::vector<GroundTruthBox>> targets,
                                   const DetectorConfig& config);

// Predicted box (normalized corners) for a raw (tx, ty, tw, th) at a slot.
BoxCorners decode_box(double tx, double ty, double tw, double th, int gx, int gy, int grid, const Anchor& anchor);

// Greedy per-class suppression. Output sorted by descending confidence.
std::vector<Detection> non_max_suppression(std::vector<Detection> candidates, double iou_threshold);

// Decodes one image of head output. Thresholds must lie in (0, 1).
std::vector<Detection> decode_and_nms(const HeadOutputs& outputs, int image, const DetectorConfig& config,
                                      double confidence_threshold, double iou_threshold);

// Backbone, neck and head. Training forward caches activations; infer() does not.
class Detector {
public:
    explicit Detector(DetectorConfig config);

    void init(Rng& rng);

    const DetectorConfig& config() const noexcept { return config_; }
    Backbone& backbone() noexcept { return backbone_; }
    const Backbone& backbone() const noexcept { return backbone_; }
    Neck& neck() noexcept { return neck_; }
    Head& head() noexcept { return head_; }

    FeaturePyramid extract_features(const Tensor& images) { return backbone_.forward(images); }

    // Neck + head + loss + backward through head and neck. Returns the tap
    // gradients for the (sub-)batch the pyramid covers.
    DetectionLossTerms detection_loss_and_backward(const FeaturePyramid& pyramid,
                                                   std::span<const std::vector<GroundTruthBox>> targets,
                                                   FeaturePyramid& tap_grads);

    HeadOutputs infer(const Tensor& images) const;
    std::vector<std::vector<Detection>> detect(const Tensor& images, double confidence_threshold,
                                               double iou_threshold) const;

    ParameterRefs parameters();

private:
    DetectorConfig config_;
    Backbone backbone_;
    Neck neck_;
    Head head_;
};

}  // namespace dadet
