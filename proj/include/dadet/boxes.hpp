#pragma once

#include <string>

namespace dadet {

// Annotation in darknet convention: center and size normalized to [0, 1].
struct GroundTruthBox {
    int class_id = 0;
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;

    friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

// Axis-aligned box by corners.
struct BoxCorners {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double area() const noexcept { return (x2 > x1 && y2 > y1) ? (x2 - x1) * (y2 - y1) : 0.0; }
};

struct Detection {
    int class_id = 0;
    double confidence = 0.0;
    BoxCorners box;  // pixels

    friend bool operator==(const Detection& a, const Detection& b) {
        return a.class_id == b.class_id && a.confidence == b.confidence && a.box.x1 == b.box.x1 &&
               a.box.y1 == b.box.y1 && a.box.x2 == b.box.x2 && a.box.y2 == b.box.y2;
    }
};

// Throws ValidationError naming the offending field.
void validate_box(const GroundTruthBox& box, int num_classes);

BoxCorners to_corners(const GroundTruthBox& box, double image_width, double image_height);

// Intersection over union; zero-area boxes give 0.
double iou(const BoxCorners& a, const BoxCorners& b) noexcept;

}  // namespace dadet
