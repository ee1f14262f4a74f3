#include "irgsfda/toydet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "irgsfda/numerics/random.hpp"

namespace irgsfda::toydet {

namespace ops = numerics;

DetectorParams DetectorParams::init(std::uint64_t seed) {
    numerics::Rng rng(numerics::mix_seed(seed, 0xde7ec7));
    const std::size_t d = kFeatureDim;
    DetectorParams p;
    // pixels spread about 0.2 around mid-gray; the gain gives unit-scale features
    constexpr double gain = 8.0, centre = 0.45;
    p.feat_w = numerics::random_normal({kPatchDim, d}, rng, gain * std::sqrt(2.0 / static_cast<double>(kPatchDim)));
    p.feat_b = Tensor({d});
    for (std::size_t j = 0; j < d; ++j) {
        double colsum = 0.0;
        for (std::size_t i = 0; i < kPatchDim; ++i) colsum += p.feat_w.at(i, j);
        p.feat_b[j] = -centre * colsum;
    }
    p.obj_w = numerics::random_normal({d, kNumScales}, rng, 0.01);
    p.obj_b = Tensor({kNumScales}, -2.0);
    p.rpn_reg_w = Tensor({d, 4 * kNumScales});
    p.rpn_reg_b = Tensor({4 * kNumScales});
    p.cls_w = numerics::random_normal({d, kNumClasses + 1}, rng, 0.01);
    p.cls_b = Tensor({kNumClasses + 1});
    p.reg_w = Tensor({d, 4});
    p.reg_b = Tensor({4});
    p.set_requires_grad(true);
    return p;
}

std::vector<Tensor*> DetectorParams::tensors() {
    return {&feat_w, &feat_b, &obj_w, &obj_b, &rpn_reg_w, &rpn_reg_b, &cls_w, &cls_b, &reg_w, &reg_b};
}

std::vector<const Tensor*> DetectorParams::tensors() const {
    return {&feat_w, &feat_b, &obj_w, &obj_b, &rpn_reg_w, &rpn_reg_b, &cls_w, &cls_b, &reg_w, &reg_b};
}

const std::vector<std::string>& DetectorParams::names() {
    static const std::vector<std::string> n{"feat_w", "feat_b",  "obj_w", "obj_b", "rpn_reg_w",
                                            "rpn_reg_b", "cls_w", "cls_b", "reg_w", "reg_b"};
    return n;
}

void DetectorParams::set_requires_grad(bool on) {
    for (Tensor* t : tensors()) {
        t->requires_grad = on;
        if (!on) t->grad.reset();
    }
}

bool DetectorParams::all_finite() const {
    const auto ts = tensors();
    return std::all_of(ts.begin(), ts.end(), [](const Tensor* t) { return t->all_finite(); });
}

bool operator==(const DetectorParams& a, const DetectorParams& b) {
    const auto ta = a.tensors(), tb = b.tensors();
    for (std::size_t i = 0; i < ta.size(); ++i)
        if (!(*ta[i] == *tb[i])) return false;
    return true;
}

BoundDetector bind(Tape& tape, DetectorParams& p, bool trainable) {
    if (!trainable) return bind_frozen(tape, p);
    return {tape.bind(p.feat_w),    tape.bind(p.feat_b), tape.bind(p.obj_w), tape.bind(p.obj_b),
            tape.bind(p.rpn_reg_w), tape.bind(p.rpn_reg_b), tape.bind(p.cls_w), tape.bind(p.cls_b),
            tape.bind(p.reg_w),     tape.bind(p.reg_b)};
}

BoundDetector bind_frozen(Tape& tape, const DetectorParams& p) {
    return {tape.constant(p.feat_w),    tape.constant(p.feat_b),    tape.constant(p.obj_w),
            tape.constant(p.obj_b),     tape.constant(p.rpn_reg_w), tape.constant(p.rpn_reg_b),
            tape.constant(p.cls_w),     tape.constant(p.cls_b),     tape.constant(p.reg_w),
            tape.constant(p.reg_b)};
}

Box anchor_box(std::size_t anchor) {
    const std::size_t cell = anchor / kNumScales;
    const double s = kAnchorScales[anchor % kNumScales];
    const double cx = static_cast<double>((cell % kGridSize) * kCellSize) + 0.5 * kCellSize;
    const double cy = static_cast<double>((cell / kGridSize) * kCellSize) + 0.5 * kCellSize;
    return clip({cx - 0.5 * s, cy - 0.5 * s, cx + 0.5 * s, cy + 0.5 * s}, static_cast<double>(kImageSize));
}

Tensor image_patches(const Tensor& image) {
    if (image.shape() != numerics::Shape{kChannels, kImageSize, kImageSize})
        throw numerics::DimensionError("image_patches: expected 3x64x64 image, got " +
                                       numerics::shape_string(image.shape()));
    Tensor patches({kNumCells, kPatchDim});
    for (std::size_t gy = 0; gy < kGridSize; ++gy)
        for (std::size_t gx = 0; gx < kGridSize; ++gx) {
            const std::size_t row = gy * kGridSize + gx;
            std::size_t col = 0;
            for (std::size_t c = 0; c < kChannels; ++c)
                for (std::size_t y = 0; y < kCellSize; ++y)
                    for (std::size_t x = 0; x < kCellSize; ++x)
                        patches.at(row, col++) =
                            image[(c * kImageSize + gy * kCellSize + y) * kImageSize + gx * kCellSize + x];
        }
    return patches;
}

Var extract_features(const BoundDetector& det, const Tensor& image) {
    Tape& tape = det.feat_w.tape();
    Var patches = tape.constant(image_patches(image));
    return ops::relu(ops::add_row_bias(ops::matmul(patches, det.feat_w), det.feat_b));
}

RpnOutput rpn_head(const BoundDetector& det, Var features) {
    return {ops::add_row_bias(ops::matmul(features, det.obj_w), det.obj_b),
            ops::add_row_bias(ops::matmul(features, det.rpn_reg_w), det.rpn_reg_b)};
}

Tensor ProposalSet::as_tensor() const {
    Tensor t({boxes.size(), 4});
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        t.at(i, 0) = boxes[i].x1;
        t.at(i, 1) = boxes[i].y1;
        t.at(i, 2) = boxes[i].x2;
        t.at(i, 3) = boxes[i].y2;
    }
    return t;
}

namespace {

double anchor_jitter(std::size_t anchor, std::uint64_t axis) {
    const std::uint64_t h = numerics::mix_seed(static_cast<std::uint64_t>(anchor), axis);
    return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

double sigmoid(double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

}  // namespace

ProposalSet propose(const Tensor& objectness_logits, std::size_t m, double jitter) {
    if (objectness_logits.size() != kNumAnchors)
        throw numerics::DimensionError("propose: expected 192 objectness logits, got " +
                                       std::to_string(objectness_logits.size()));
    if (m == 0 || m > kNumAnchors)
        throw numerics::ContractError("propose: m must lie in [1, 192], got " + std::to_string(m));
    std::vector<std::size_t> order(kNumAnchors);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return objectness_logits[a] > objectness_logits[b];
    });
    ProposalSet set;
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t a = order[k];
        Box b = anchor_box(a);
        const double dx = jitter * anchor_jitter(a, 1), dy = jitter * anchor_jitter(a, 2);
        b = clip({b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy}, static_cast<double>(kImageSize));
        set.boxes.push_back(b);
        set.objectness.push_back(sigmoid(objectness_logits[a]));
        set.anchors.push_back(a);
    }
    return set;
}

Tensor roi_pool_matrix(std::span<const Box> boxes) {
    Tensor pool({boxes.size(), kNumCells});
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const Box& b = boxes[i];
        std::size_t hits = 0;
        std::size_t nearest = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t cell = 0; cell < kNumCells; ++cell) {
            const double cx = static_cast<double>((cell % kGridSize) * kCellSize) + 0.5 * kCellSize;
            const double cy = static_cast<double>((cell / kGridSize) * kCellSize) + 0.5 * kCellSize;
            if (cx >= b.x1 && cx <= b.x2 && cy >= b.y1 && cy <= b.y2) {
                pool.at(i, cell) = 1.0;
                ++hits;
            }
            const double dist = (cx - b.cx()) * (cx - b.cx()) + (cy - b.cy()) * (cy - b.cy());
            if (dist < best) {
                best = dist;
                nearest = cell;
            }
        }
        if (hits == 0) {
            pool.at(i, nearest) = 1.0;
            hits = 1;
        }
        for (std::size_t cell = 0; cell < kNumCells; ++cell) pool.at(i, cell) /= static_cast<double>(hits);
    }
    return pool;
}

Var roi_pool(Var features, std::span<const Box> boxes) {
    if (features.value().rank() != 2 || features.rows() != kNumCells)
        throw numerics::DimensionError("roi_pool: expected 64 x d features, got " +
                                       numerics::shape_string(features.shape()));
    return ops::matmul(features.tape().constant(roi_pool_matrix(boxes)), features);
}

RoiOutput classify_rois(const BoundDetector& det, Var rois) {
    return {ops::add_row_bias(ops::matmul(rois, det.cls_w), det.cls_b),
            ops::add_row_bias(ops::matmul(rois, det.reg_w), det.reg_b)};
}

DetectionOutput postprocess(const ProposalSet& proposals, const Tensor& logits, const Tensor& deltas,
                            double score_floor) {
    const std::size_t m = proposals.size();
    if (logits.rows() != m || logits.cols() != kNumClasses + 1 || deltas.rows() != m || deltas.cols() != 4)
        throw numerics::DimensionError("postprocess: head outputs do not match the proposal count");

    struct Candidate {
        Box box;
        int cls;
        double conf;
    };
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c <= kNumClasses; ++c) mx = std::max(mx, logits.at(i, c));
        double z = 0.0;
        std::array<double, kNumClasses + 1> p{};
        for (std::size_t c = 0; c <= kNumClasses; ++c) z += (p[c] = std::exp(logits.at(i, c) - mx));
        for (double& v : p) v /= z;
        const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end() - 1) - p.begin());
        if (p[kBackgroundClass] > p[best] || p[best] < score_floor) continue;
        std::array<double, 4> d{deltas.at(i, 0), deltas.at(i, 1), deltas.at(i, 2), deltas.at(i, 3)};
        Box box = clip(decode(std::span<const double, 4>(d), proposals.boxes[i]), static_cast<double>(kImageSize));
        if (box.area() <= 0.0) continue;
        // confidence renormalised over the foreground classes once background is dropped
        cands.push_back({box, static_cast<int>(best), p[best] / (1.0 - p[kBackgroundClass])});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.conf != b.conf) return a.conf > b.conf;
        if (a.box != b.box) return a.box < b.box;
        return a.cls < b.cls;
    });

    DetectionOutput out;
    std::vector<Box> boxes;
    for (const auto& c : cands) boxes.push_back(c.box);
    std::vector<bool> keep(cands.size(), false);
    for (int cls = 0; cls < static_cast<int>(kNumClasses); ++cls) {
        std::vector<std::size_t> order;
        for (std::size_t i = 0; i < cands.size(); ++i)
            if (cands[i].cls == cls) order.push_back(i);
        for (std::size_t k : nms(boxes, order, kNmsIoU)) keep[k] = true;
    }
    for (std::size_t i = 0; i < cands.size(); ++i) {
        if (!keep[i]) continue;
        out.boxes.push_back(cands[i].box);
        out.class_ids.push_back(cands[i].cls);
        out.confidences.push_back(cands[i].conf);
    }
    return out;
}

DetectionLoss detection_loss(const RpnOutput& rpn, std::span<const Box> proposals, const RoiOutput& roi,
                             std::span<const BoxLabel> labels) {
    const std::size_t m = proposals.size();
    if (roi.logits.rows() != m || roi.deltas.rows() != m)
        throw numerics::DimensionError("detection_loss: RoI outputs do not match the proposal count");

    auto best_match = [&](const Box& b) {
        double best = 0.0;
        std::size_t idx = labels.size();
        for (std::size_t g = 0; g < labels.size(); ++g) {
            const double v = iou(b, labels[g].box);
            if (v > best) {
                best = v;
                idx = g;
            }
        }
        return best >= kMatchIoU ? idx : labels.size();
    };

    // RPN: balanced binary cross-entropy, smooth-L1 on positive anchors.
    Tensor obj_weight({kNumCells, kNumScales});
    Tensor obj_target_weight({kNumCells, kNumScales});
    Tensor rpn_target({kNumCells, 4 * kNumScales});
    Tensor rpn_weight({kNumCells, 4 * kNumScales});
    std::vector<std::size_t> anchor_match(kNumAnchors);
    std::size_t npos = 0;
    for (std::size_t a = 0; a < kNumAnchors; ++a) {
        anchor_match[a] = best_match(anchor_box(a));
        if (anchor_match[a] < labels.size()) ++npos;
    }
    const std::size_t nneg = kNumAnchors - npos;
    const double wpos = npos ? (nneg ? 0.5 : 1.0) / static_cast<double>(npos) : 0.0;
    const double wneg = nneg ? (npos ? 0.5 : 1.0) / static_cast<double>(nneg) : 0.0;
    for (std::size_t a = 0; a < kNumAnchors; ++a) {
        const bool pos = anchor_match[a] < labels.size();
        obj_weight[a] = pos ? wpos : wneg;
        if (!pos) continue;
        obj_target_weight[a] = wpos;
        const auto t = encode(labels[anchor_match[a]].box, anchor_box(a));
        for (std::size_t k = 0; k < 4; ++k) {
            rpn_target[4 * a + k] = t[k];
            rpn_weight[4 * a + k] = 1.0 / static_cast<double>(npos);
        }
    }
    Tape& tape = rpn.objectness.tape();
    Var rpn_cls = ops::sub(ops::weighted_sum(ops::softplus(rpn.objectness), obj_weight),
                           ops::weighted_sum(rpn.objectness, obj_target_weight));
    Var rpn_reg = ops::weighted_sum(ops::smooth_l1(ops::sub(rpn.deltas, tape.constant(rpn_target))), rpn_weight);

    // RoI: cross-entropy with background, smooth-L1 on matched proposals.
    Tensor ce_weight({m, kNumClasses + 1});
    Tensor roi_target({m, 4});
    Tensor roi_weight({m, 4});
    std::size_t matched = 0;
    std::vector<std::size_t> prop_match(m);
    for (std::size_t i = 0; i < m; ++i) {
        prop_match[i] = best_match(proposals[i]);
        if (prop_match[i] < labels.size()) ++matched;
    }
    for (std::size_t i = 0; i < m; ++i) {
        const bool pos = prop_match[i] < labels.size();
        const std::size_t cls = pos ? static_cast<std::size_t>(labels[prop_match[i]].class_id) : kBackgroundClass;
        ce_weight.at(i, cls) = -1.0 / static_cast<double>(m);
        if (!pos) continue;
        const auto t = encode(labels[prop_match[i]].box, proposals[i]);
        for (std::size_t k = 0; k < 4; ++k) {
            roi_target.at(i, k) = t[k];
            roi_weight.at(i, k) = 1.0 / static_cast<double>(matched);
        }
    }
    Var roi_cls = ops::weighted_sum(ops::log_softmax_rows(roi.logits), ce_weight);
    Var roi_reg = ops::weighted_sum(ops::smooth_l1(ops::sub(roi.deltas, tape.constant(roi_target))), roi_weight);

    Var total = ops::add(ops::add(rpn_cls, rpn_reg), ops::add(roi_cls, roi_reg));
    return {rpn_cls, rpn_reg, roi_cls, roi_reg, total};
}

Inference run_detector(const DetectorParams& params, const Tensor& image, const DetectConfig& cfg) {
    Tape tape;
    BoundDetector det = bind_frozen(tape, params);
    Var feats = extract_features(det, image);
    RpnOutput rpn = rpn_head(det, feats);
    ProposalSet proposals = propose(rpn.objectness.value(), cfg.proposals, cfg.jitter);
    RoiOutput roi = classify_rois(det, roi_pool(feats, proposals.boxes));
    Inference inf{std::move(proposals), feats.value(), roi.logits.value(), roi.deltas.value(), {}};
    inf.detections = postprocess(inf.proposals, inf.logits, inf.deltas, cfg.score_floor);
    return inf;
}

Inference run_detector(const DetectorParams& params, const Tensor& image, const ProposalSet& proposals,
                       const DetectConfig& cfg) {
    Tape tape;
    BoundDetector det = bind_frozen(tape, params);
    Var feats = extract_features(det, image);
    RoiOutput roi = classify_rois(det, roi_pool(feats, proposals.boxes));
    Inference inf{proposals, feats.value(), roi.logits.value(), roi.deltas.value(), {}};
    inf.detections = postprocess(inf.proposals, inf.logits, inf.deltas, cfg.score_floor);
    return inf;
}

}  // namespace irgsfda::toydet
