#pragma once

#include <array>
#include <compare>
#include <span>
#include <vector>

namespace irgsfda::toydet {

/// Axis-aligned box in pixel coordinates, x1 < x2 and y1 < y2.
struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double width() const noexcept { return x2 - x1; }
    double height() const noexcept { return y2 - y1; }
    double area() const noexcept { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
    double cx() const noexcept { return 0.5 * (x1 + x2); }
    double cy() const noexcept { return 0.5 * (y1 + y2); }

    auto operator<=>(const Box&) const = default;
};

double iou(const Box& a, const Box& b) noexcept;

Box clip(const Box& b, double size);

/// Deltas are divided by these so that typical targets are of order one.
inline constexpr std::array<double, 4> kDeltaStd{0.1, 0.1, 0.2, 0.2};

/// Regression target of `target` relative to `reference`:
/// (dx, dy, log dw, log dh) with centre offsets scaled by reference size,
/// each divided by kDeltaStd.
std::array<double, 4> encode(const Box& target, const Box& reference);
Box decode(std::span<const double, 4> deltas, const Box& reference);

/// Greedy non-maximum suppression. `order` lists candidate indices already
/// sorted by descending score; returns the kept subset in the same order.
std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const std::size_t> order,
                             double iou_threshold);

}  // namespace irgsfda::toydet
