#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irgsfda/numerics/ops.hpp"
#include "irgsfda/toydet/scene.hpp"

namespace irgsfda::toydet {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

inline constexpr std::size_t kCellSize = 8;
inline constexpr std::size_t kGridSize = kImageSize / kCellSize;  // 8
inline constexpr std::size_t kNumCells = kGridSize * kGridSize;   // 64
inline constexpr std::size_t kPatchDim = kChannels * kCellSize * kCellSize;
inline constexpr std::size_t kFeatureDim = 16;
inline constexpr std::array<double, 3> kAnchorScales{8.0, 16.0, 32.0};
inline constexpr std::size_t kNumScales = kAnchorScales.size();
inline constexpr std::size_t kNumAnchors = kNumCells * kNumScales;  // 192
inline constexpr std::size_t kDefaultProposals = 16;
inline constexpr double kMatchIoU = 0.5;
inline constexpr double kNmsIoU = 0.5;

/// Learnable weights of the two-stage toy detector.
struct DetectorParams {
    Tensor feat_w;     // patch (192) -> feature (d)
    Tensor feat_b;     // d
    Tensor obj_w;      // d -> objectness logit per anchor scale
    Tensor obj_b;
    Tensor rpn_reg_w;  // d -> 4 anchor deltas per scale
    Tensor rpn_reg_b;
    Tensor cls_w;      // d -> K + 1 logits, background last
    Tensor cls_b;
    Tensor reg_w;      // d -> 4 box deltas
    Tensor reg_b;

    static DetectorParams init(std::uint64_t seed);

    std::vector<Tensor*> tensors();
    std::vector<const Tensor*> tensors() const;
    static const std::vector<std::string>& names();
    void set_requires_grad(bool on);
    bool all_finite() const;

    friend bool operator==(const DetectorParams& a, const DetectorParams& b);
};

/// DetectorParams recorded on a tape. Frozen bindings never receive
/// gradients.
struct BoundDetector {
    Var feat_w, feat_b, obj_w, obj_b, rpn_reg_w, rpn_reg_b, cls_w, cls_b, reg_w, reg_b;
};

/// Binds trainable params with `bind`, frozen ones as constants.
BoundDetector bind(Tape& tape, DetectorParams& params, bool trainable);
BoundDetector bind_frozen(Tape& tape, const DetectorParams& params);

/// Anchor `a` sits at cell a / 3 with scale index a % 3, clipped to the image.
Box anchor_box(std::size_t anchor);

/// Image (3 x 64 x 64) rearranged as one centred 8x8x3 patch per row.
Tensor image_patches(const Tensor& image);

/// relu(patches * feat_w + feat_b): 64 x d, one row per grid cell.
Var extract_features(const BoundDetector& det, const Tensor& image);

struct RpnOutput {
    Var objectness;  // 64 x 3 logits, anchor a at flat index a
    Var deltas;      // 64 x 12, anchor a at flat offset 4a
};

RpnOutput rpn_head(const BoundDetector& det, Var features);

struct ProposalSet {
    std::vector<Box> boxes;
    std::vector<double> objectness;  // descending
    std::vector<std::size_t> anchors;

    std::size_t size() const noexcept { return boxes.size(); }
    Tensor as_tensor() const;  // m x 4
};

/// Top-m anchors by sigmoid objectness, each shifted by a small
/// deterministic per-anchor jitter and clipped to the image.
ProposalSet propose(const Tensor& objectness_logits, std::size_t m, double jitter = 1.0);

/// m x 64 averaging matrix: row i averages the cells whose centres fall
/// inside box i, or selects the nearest cell when none do.
Tensor roi_pool_matrix(std::span<const Box> boxes);
Var roi_pool(Var features, std::span<const Box> boxes);

struct RoiOutput {
    Var logits;  // m x (K + 1)
    Var deltas;  // m x 4
};

RoiOutput classify_rois(const BoundDetector& det, Var rois);

struct DetectionOutput {
    std::vector<Box> boxes;
    std::vector<int> class_ids;
    std::vector<double> confidences;

    std::size_t size() const noexcept { return boxes.size(); }
};

/// Softmax, drop proposals whose arg-max is background or whose best
/// foreground probability is below `score_floor`, decode boxes and apply
/// per-class NMS at kNmsIoU. The confidence is the best foreground
/// probability renormalised over the foreground classes. Sorted by
/// descending confidence.
DetectionOutput postprocess(const ProposalSet& proposals, const Tensor& logits, const Tensor& deltas,
                            double score_floor);

struct DetectionLoss {
    Var rpn_cls, rpn_reg, roi_cls, roi_reg, total;
};

/// Four-term detector loss against `labels` (ground truth or pseudo labels).
/// Anchors and proposals are positive at IoU >= 0.5. Regression terms are
/// averaged over positives and vanish when there are none.
DetectionLoss detection_loss(const RpnOutput& rpn, std::span<const Box> proposals, const RoiOutput& roi,
                             std::span<const BoxLabel> labels);

struct DetectConfig {
    std::size_t proposals = kDefaultProposals;
    double jitter = 1.0;
    double score_floor = 0.05;
};

/// Tape-free inference helper.
struct Inference {
    ProposalSet proposals;
    Tensor features;
    Tensor logits;
    Tensor deltas;
    DetectionOutput detections;
};

Inference run_detector(const DetectorParams& params, const Tensor& image, const DetectConfig& cfg);
/// Runs the detector with a caller-supplied proposal set.
Inference run_detector(const DetectorParams& params, const Tensor& image, const ProposalSet& proposals,
                       const DetectConfig& cfg);

}  // namespace irgsfda::toydet
