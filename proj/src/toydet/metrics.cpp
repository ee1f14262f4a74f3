#include "irgsfda/toydet/metrics.hpp"

#include <algorithm>

namespace irgsfda::toydet {

namespace {

struct Ranked {
    double conf;
    Box box;
    std::size_t scene;
};

double average_precision(std::vector<Ranked> dets, std::span<const std::vector<BoxLabel>> truth, int cls,
                         std::size_t num_gt, double iou_threshold) {
    std::sort(dets.begin(), dets.end(), [](const Ranked& a, const Ranked& b) {
        if (a.conf != b.conf) return a.conf > b.conf;
        return a.box < b.box;
    });
    std::vector<std::vector<bool>> used(truth.size());
    for (std::size_t s = 0; s < truth.size(); ++s) used[s].assign(truth[s].size(), false);

    std::vector<double> recall, precision;
    std::size_t tp = 0, fp = 0;
    for (std::size_t k = 0; k < dets.size(); ++k) {
        const Ranked& d = dets[k];
        double best = 0.0;
        std::size_t best_g = truth[d.scene].size();
        for (std::size_t g = 0; g < truth[d.scene].size(); ++g) {
            const BoxLabel& gt = truth[d.scene][g];
            if (gt.class_id != cls || used[d.scene][g]) continue;
            const double v = iou(d.box, gt.box);
            if (v >= iou_threshold && v > best) {
                best = v;
                best_g = g;
            }
        }
        if (best_g < truth[d.scene].size()) {
            used[d.scene][best_g] = true;
            ++tp;
        } else {
            ++fp;
        }
        const bool block_end = k + 1 == dets.size() || dets[k + 1].conf != d.conf;
        if (block_end) {
            recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
            precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
        }
    }
    // precision envelope, then integrate over recall steps
    for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t k = 0; k < recall.size(); ++k) {
        ap += (recall[k] - prev_recall) * precision[k];
        prev_recall = recall[k];
    }
    return ap;
}

}  // namespace

MapReport evaluate_map(std::span<const DetectionOutput> detections, std::span<const std::vector<BoxLabel>> truth,
                       double iou_threshold) {
    if (detections.size() != truth.size())
        throw numerics::DimensionError("evaluate_map: detections and ground truth cover different scene counts");
    MapReport report;
    report.per_class_ap.assign(kNumClasses, std::nullopt);
    double total = 0.0;
    std::size_t present = 0;
    for (int cls = 0; cls < static_cast<int>(kNumClasses); ++cls) {
        std::size_t num_gt = 0;
        for (const auto& labels : truth)
            for (const auto& l : labels) num_gt += l.class_id == cls;
        if (num_gt == 0) continue;
        std::vector<Ranked> dets;
        for (std::size_t s = 0; s < detections.size(); ++s)
            for (std::size_t i = 0; i < detections[s].size(); ++i)
                if (detections[s].class_ids[i] == cls)
                    dets.push_back({detections[s].confidences[i], detections[s].boxes[i], s});
        const double ap = average_precision(std::move(dets), truth, cls, num_gt, iou_threshold);
        report.per_class_ap[static_cast<std::size_t>(cls)] = ap;
        total += ap;
        ++present;
    }
    report.map = present ? total / static_cast<double>(present) : 0.0;
    return report;
}

namespace serial {
std::vector<DetectionOutput> detect_all(const DetectorParams& params, std::span<const SyntheticScene> scenes,
                                        const DetectConfig& cfg) {
    std::vector<DetectionOutput> out;
    out.reserve(scenes.size());
    for (const auto& s : scenes) out.push_back(run_detector(params, s.image, cfg).detections);
    return out;
}
}  // namespace serial

std::vector<DetectionOutput> detect_all(const DetectorParams& params, std::span<const SyntheticScene> scenes,
                                        const DetectConfig& cfg) {
    std::vector<DetectionOutput> out(scenes.size());
    const auto n = static_cast<long long>(scenes.size());
#pragma omp parallel for schedule(dynamic, 2)
    for (long long i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        out[k] = run_detector(params, scenes[k].image, cfg).detections;
    }
    return out;
}

MapReport evaluate_map(const DetectorParams& params, std::span<const SyntheticScene> scenes, double iou_threshold,
                       const DetectConfig& cfg) {
    const auto dets = detect_all(params, scenes, cfg);
    std::vector<std::vector<BoxLabel>> truth;
    truth.reserve(scenes.size());
    for (const auto& s : scenes) truth.push_back(s.objects);
    return evaluate_map(dets, truth, iou_threshold);
}

double proposal_recall(const DetectorParams& params, std::span<const SyntheticScene> scenes,
                       const DetectConfig& cfg) {
    std::size_t hit = 0, total = 0;
    for (const auto& s : scenes) {
        const auto inf = run_detector(params, s.image, cfg);
        for (const auto& gt : s.objects) {
            ++total;
            const bool covered = std::any_of(inf.proposals.boxes.begin(), inf.proposals.boxes.end(),
                                             [&](const Box& b) { return iou(b, gt.box) >= kMatchIoU; });
            hit += covered;
        }
    }
    return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

}  // namespace irgsfda::toydet
