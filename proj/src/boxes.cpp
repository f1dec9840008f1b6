#include "dadet/boxes.hpp"

#include <algorithm>
#include <cmath>

#include "dadet/errors.hpp"

namespace dadet {

void validate_box(const GroundTruthBox& box, int num_classes) {
    if (box.class_id < 0 || box.class_id >= num_classes) {
        throw ValidationError("class_id " + std::to_string(box.class_id) + " outside [0, " +
                              std::to_string(num_classes) + ")");
    }
    auto unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
    if (!unit(box.cx) || !unit(box.cy)) {
        throw ValidationError("box center (" + std::to_string(box.cx) + ", " + std::to_string(box.cy) +
                              ") outside [0, 1]");
    }
    if (!(box.w > 0.0 && box.w <= 1.0) || !(box.h > 0.0 && box.h <= 1.0)) {
        throw ValidationError("box size (" + std::to_string(box.w) + ", " + std::to_string(box.h) +
                              ") outside (0, 1]");
    }
}

BoxCorners to_corners(const GroundTruthBox& box, double image_width, double image_height) {
    return BoxCorners{std::clamp(box.cx - box.w / 2.0, 0.0, 1.0) * image_width,
                      std::clamp(box.cy - box.h / 2.0, 0.0, 1.0) * image_height,
                      std::clamp(box.cx + box.w / 2.0, 0.0, 1.0) * image_width,
                      std::clamp(box.cy + box.h / 2.0, 0.0, 1.0) * image_height};
}

double iou(const BoxCorners& a, const BoxCorners& b) noexcept {
    const double area_a = a.area();
    const double area_b = b.area();
    if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (area_a + area_b - inter);
}

}  // namespace dadet
