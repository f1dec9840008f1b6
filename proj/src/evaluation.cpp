#include "dadet/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "dadet/errors.hpp"

namespace dadet {

std::vector<LabeledBox> to_labeled_boxes(std::span<const GroundTruthBox> boxes, double image_size) {
    std::vector<LabeledBox> out;
    out.reserve(boxes.size());
    for (const GroundTruthBox& b : boxes) out.push_back({b.class_id, to_corners(b, image_size, image_size)});
    return out;
}

std::vector<bool> match_detections(std::span<const Detection> detections, std::span<const LabeledBox> ground_truth,
                                   double iou_threshold) {
    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return detections[a].confidence > detections[b].confidence;
    });
    std::vector<bool> matched(ground_truth.size(), false);
    std::vector<bool> flags(detections.size(), false);
    for (std::size_t di : order) {
        const Detection& d = detections[di];
        double best = -1.0;
        std::size_t best_gt = ground_truth.size();
        for (std::size_t g = 0; g < ground_truth.size(); ++g) {
            if (matched[g] || ground_truth[g].class_id != d.class_id) continue;
            const double v = iou(d.box, ground_truth[g].box);
            if (v > best) {
                best = v;
                best_gt = g;
            }
        }
        if (best_gt < ground_truth.size() && best >= iou_threshold) {
            matched[best_gt] = true;
            flags[di] = true;
        }
    }
    return flags;
}

std::optional<double> average_precision(std::span<const ScoredFlag> flags, int num_gt) {
    if (num_gt <= 0) return std::nullopt;
    std::vector<ScoredFlag> sorted(flags.begin(), flags.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const ScoredFlag& a, const ScoredFlag& b) { return a.confidence > b.confidence; });
    std::vector<double> precision, recall;
    precision.reserve(sorted.size());
    recall.reserve(sorted.size());
    int tp = 0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        tp += sorted[i].true_positive ? 1 : 0;
        precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
        recall.push_back(static_cast<double>(tp) / num_gt);
    }
    // Precision envelope, right to left.
    for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
        if (recall[i] > prev_recall) {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
    }
    return std::clamp(ap, 0.0, 1.0);
}

std::optional<double> EvalResult::ap(int class_id) const {
    for (const ClassResult& c : classes)
        if (c.class_id == class_id) return c.ap;
    return std::nullopt;
}

EvalResult evaluate_detections(const std::vector<std::vector<Detection>>& detections,
                               const std::vector<std::vector<GroundTruthBox>>& ground_truth, int num_classes,
                               double image_size, const EvalOptions& options) {
    if (detections.size() != ground_truth.size()) {
        throw DimensionError("evaluation: " + std::to_string(detections.size()) + " detection lists for " +
                             std::to_string(ground_truth.size()) + " images");
    }
    const std::size_t images = detections.size();
    std::vector<std::vector<bool>> flags(images);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(images); ++i) {
        const auto gts = to_labeled_boxes(ground_truth[i], image_size);
        flags[i] = match_detections(detections[i], gts, options.iou_threshold);
    }

    EvalResult result;
    double ap_sum = 0.0;
    for (int k = 0; k < num_classes; ++k) {
        ClassResult cr;
        cr.class_id = k;
        std::vector<ScoredFlag> scored;
        for (std::size_t i = 0; i < images; ++i) {
            for (const GroundTruthBox& g : ground_truth[i]) cr.num_gt += g.class_id == k ? 1 : 0;
            for (std::size_t d = 0; d < detections[i].size(); ++d) {
                if (detections[i][d].class_id == k) scored.push_back({detections[i][d].confidence, flags[i][d]});
            }
        }
        cr.num_detections = static_cast<int>(scored.size());
        cr.excluded = cr.num_gt == 0 || cr.num_gt < options.min_ground_truth;
        if (!cr.excluded) {
            cr.ap = average_precision(scored, cr.num_gt);
            ap_sum += *cr.ap;
            ++result.evaluated_classes;
        }
        result.classes.push_back(cr);
    }
    result.map_score = result.evaluated_classes > 0 ? ap_sum / result.evaluated_classes : 0.0;
    return result;
}

const char* class_name(int class_id) noexcept {
    switch (class_id) {
        case 0: return "circle";
        case 1: return "rectangle";
        case 2: return "triangle";
        default: return "class";
    }
}

nlohmann::json eval_to_json(const EvalResult& result) {
    nlohmann::json classes = nlohmann::json::array();
    for (const ClassResult& c : result.classes) {
        classes.push_back({{"class_id", c.class_id},
                           {"name", class_name(c.class_id)},
                           {"num_gt", c.num_gt},
                           {"num_detections", c.num_detections},
                           {"excluded", c.excluded},
                           {"ap", c.ap ? nlohmann::json(*c.ap) : nlohmann::json(nullptr)}});
    }
    return {{"classes", classes}, {"map", result.map_score}, {"evaluated_classes", result.evaluated_classes}};
}

std::string format_eval_table(const std::vector<TableRow>& rows, int num_classes) {
    std::size_t label_width = 6;
    for (const TableRow& r : rows) label_width = std::max(label_width, r.label.size());
    std::string out;
    char cell[64];
    auto pad = [](std::string s, std::size_t w) {
        s.resize(std::max(s.size(), w), ' ');
        return s;
    };
    out += pad("Method", label_width);
    for (int k = 0; k < num_classes; ++k) {
        std::snprintf(cell, sizeof cell, " | %10s", class_name(k));
        out += cell;
    }
    out += " |    mAP\n";
    out += std::string(label_width + static_cast<std::size_t>(num_classes) * 13 + 10, '-') + "\n";
    for (const TableRow& r : rows) {
        out += pad(r.label, label_width);
        for (int k = 0; k < num_classes; ++k) {
            const auto ap = r.result.ap(k);
            if (ap) {
                std::snprintf(cell, sizeof cell, " | %10.2f", *ap * 100.0);
            } else {
                std::snprintf(cell, sizeof cell, " | %10s", "excl.");
            }
            out += cell;
        }
        std::snprintf(cell, sizeof cell, " | %6.2f\n", r.result.map_score * 100.0);
        out += cell;
    }
    return out;
}

}  // namespace dadet
