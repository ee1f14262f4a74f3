#pragma once

#include <optional>
#include <span>
#include <vector>

#include "irgsfda/toydet/detector.hpp"

namespace irgsfda::toydet {

struct MapReport {
    /// One entry per class; empty when the class has no ground truth.
    std::vector<std::optional<double>> per_class_ap;
    /// Mean over classes present in the ground truth, 0 when none are.
    double map = 0.0;
};

/// All-point interpolated average precision per class.
///
/// Detections are ranked by descending confidence with ties broken by box
/// coordinates, then greedily matched to unmatched ground truth of the same
/// class in the same scene at IoU >= iou_threshold. Precision/recall points
/// are taken only between distinct confidence levels, so the result does
/// not depend on scene order or on the order of tied detections.
MapReport evaluate_map(std::span<const DetectionOutput> detections, std::span<const std::vector<BoxLabel>> truth,
                       double iou_threshold = kMatchIoU);

/// Runs the detector on every scene (OpenMP-parallel over scenes) and
/// scores it.
MapReport evaluate_map(const DetectorParams& params, std::span<const SyntheticScene> scenes,
                       double iou_threshold = kMatchIoU, const DetectConfig& cfg = {});

std::vector<DetectionOutput> detect_all(const DetectorParams& params, std::span<const SyntheticScene> scenes,
                                        const DetectConfig& cfg = {});

namespace serial {
std::vector<DetectionOutput> detect_all(const DetectorParams& params, std::span<const SyntheticScene> scenes,
                                        const DetectConfig& cfg = {});
}

/// Fraction of ground-truth boxes covered by some proposal at IoU >= 0.5.
double proposal_recall(const DetectorParams& params, std::span<const SyntheticScene> scenes,
                       const DetectConfig& cfg = {});

}  // namespace irgsfda::toydet
