#include "irgsfda/toydet/boxes.hpp"

#include <algorithm>
#include <cmath>

namespace irgsfda::toydet {

double iou(const Box& a, const Box& b) noexcept {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

Box clip(const Box& b, double size) {
    return {std::clamp(b.x1, 0.0, size), std::clamp(b.y1, 0.0, size), std::clamp(b.x2, 0.0, size),
            std::clamp(b.y2, 0.0, size)};
}

std::array<double, 4> encode(const Box& target, const Box& reference) {
    const double rw = reference.width(), rh = reference.height();
    return {(target.cx() - reference.cx()) / (rw * kDeltaStd[0]), (target.cy() - reference.cy()) / (rh * kDeltaStd[1]),
            std::log(target.width() / rw) / kDeltaStd[2], std::log(target.height() / rh) / kDeltaStd[3]};
}

Box decode(std::span<const double, 4> d, const Box& reference) {
    constexpr double kMaxLog = 4.0;
    const double rw = reference.width(), rh = reference.height();
    const double cx = reference.cx() + d[0] * kDeltaStd[0] * rw;
    const double cy = reference.cy() + d[1] * kDeltaStd[1] * rh;
    const double w = rw * std::exp(std::clamp(d[2] * kDeltaStd[2], -kMaxLog, kMaxLog));
    const double h = rh * std::exp(std::clamp(d[3] * kDeltaStd[3], -kMaxLog, kMaxLog));
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const std::size_t> order,
                             double iou_threshold) {
    std::vector<std::size_t> kept;
    for (std::size_t idx : order) {
        bool suppressed = false;
        for (std::size_t k : kept) {
            if (iou(boxes[idx], boxes[k]) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(idx);
    }
    return kept;
}

}  // namespace irgsfda::toydet
