#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dadet/boxes.hpp"

namespace dadet {

inline constexpr double kDefaultMatchIou = 0.5;

struct LabeledBox {
    int class_id = 0;
    BoxCorners box;
};

std::vector<LabeledBox> to_labeled_boxes(std::span<const GroundTruthBox> boxes, double image_size);

// VOC-style greedy matching for one image. Detections of each class are
// visited in descending confidence (ties keep input order); each visits the
// unmatched same-class ground truth with the highest IoU and is a true
// positive iff that IoU >= iou_threshold. Returns one flag per detection, in
// input order.
std::vector<bool> match_detections(std::span<const Detection> detections, std::span<const LabeledBox> ground_truth,
                                   double iou_threshold = kDefaultMatchIou);

struct ScoredFlag {
    double confidence = 0.0;
    bool true_positive = false;
};

// Area under the precision-recall curve with all-point interpolation.
// nullopt when num_gt == 0 (class excluded rather than scored).
std::optional<double> average_precision(std::span<const ScoredFlag> flags, int num_gt);

struct ClassResult {
    int class_id = 0;
    int num_gt = 0;
    int num_detections = 0;
    std::optional<double> ap;  // absent when excluded
    bool excluded = false;
};

struct EvalResult {
    std::vector<ClassResult> classes;
    double map_score = 0.0;  // mean AP over classes that are not excluded
    int evaluated_classes = 0;

    std::optional<double> ap(int class_id) const;
};

struct EvalOptions {
    double iou_threshold = kDefaultMatchIou;
    // Classes with fewer ground-truth boxes are flagged excluded.
    int min_ground_truth = 1;
};

EvalResult evaluate_detections(const std::vector<std::vector<Detection>>& detections,
                               const std::vector<std::vector<GroundTruthBox>>& ground_truth, int num_classes,
                               double image_size, const EvalOptions& options = {});

const char* class_name(int class_id) noexcept;

nlohmann::json eval_to_json(const EvalResult& result);

struct TableRow {
    std::string label;
    EvalResult result;
};

// Aligned text: one row per result, AP per class and mAP in percent.
std::string format_eval_table(const std::vector<TableRow>& rows, int num_classes);

}  // namespace dadet
