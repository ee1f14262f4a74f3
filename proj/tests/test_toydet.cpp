#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "irgsfda/numerics/gradcheck.hpp"
#include "irgsfda/numerics/sgd.hpp"
#include "irgsfda/numerics/tensor_io.hpp"
#include "irgsfda/toydet/dataset.hpp"
#include "irgsfda/toydet/metrics.hpp"
#include "support.hpp"

using namespace irgsfda;
using namespace irgsfda::toydet;
using numerics::Rng;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

namespace {

Tensor cell_features(Rng& rng) {
    return numerics::random_normal({kNumCells, kFeatureDim}, rng);
}

DetectionOutput as_detections(const std::vector<BoxLabel>& labels, double conf = 1.0) {
    DetectionOutput d;
    for (const auto& l : labels) {
        d.boxes.push_back(l.box);
        d.class_ids.push_back(l.class_id);
        d.confidences.push_back(conf);
    }
    return d;
}

// One supervised step on fixed RoIs; returns the loss before the update.
double supervised_step(DetectorParams& p, const SyntheticScene& scene, std::span<const Box> rois,
                       double momentum, numerics::SgdState& opt) {
    Tape tape;
    BoundDetector det = bind(tape, p, true);
    Var feats = extract_features(det, scene.image);
    RpnOutput rpn = rpn_head(det, feats);
    RoiOutput roi = classify_rois(det, roi_pool(feats, rois));
    Var loss = detection_loss(rpn, rois, roi, scene.objects).total;
    const double value = loss.item();
    tape.backward(loss);
    auto params = p.tensors();
    for (auto* t : params)
        if (!t->grad) t->grad = std::vector<double>(t->size(), 0.0);
    numerics::sgd_step(params, 0.001, momentum, opt);
    return value;
}

}  // namespace

TEST_SUITE("toydet") {

TEST_CASE("iou examples") {
    const Box a{0, 0, 2, 2};
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, Box{5, 5, 6, 6}) == 0.0);
    CHECK(iou(a, Box{1, 0, 3, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("encode and decode are inverse") {
    Rng rng(21);
    for (int k = 0; k < 100; ++k) {
        const double x = testing::uniform_real(rng, 0, 40), y = testing::uniform_real(rng, 0, 40);
        const Box ref{x, y, x + testing::uniform_real(rng, 4, 24), y + testing::uniform_real(rng, 4, 24)};
        const Box tgt{x + 1, y - 2, ref.x2 + 3, ref.y2 + 0.5};
        const auto d = encode(tgt, ref);
        const Box back = decode(std::span<const double, 4>(d), ref);
        CHECK(back.x1 == doctest::Approx(tgt.x1).epsilon(1e-12));
        CHECK(back.y2 == doctest::Approx(tgt.y2).epsilon(1e-12));
    }
}

TEST_CASE("source and target scenes share geometry for equal seeds") {
    const auto s = generate_scene(DomainSpec::source(), 7);
    const auto t = generate_scene(DomainSpec::target(), 7);
    CHECK(s.objects == t.objects);
    CHECK_FALSE(s.image == t.image);
}

TEST_CASE("generate_scene is bitwise deterministic") {
    const auto a = generate_scene(DomainSpec::target(), 1234);
    const auto b = generate_scene(DomainSpec::target(), 1234);
    CHECK(a.image == b.image);
    CHECK(a.objects == b.objects);
}

TEST_CASE("full fog renders constant gray") {
    DomainSpec fog = DomainSpec::target();
    fog.fog_alpha = 1.0;
    const auto scene = generate_scene(fog, 99);
    for (double v : scene.image.values()) CHECK(v == 0.5);
}

TEST_CASE("source domain has no fog and no noise") {
    CHECK(DomainSpec::source().fog_alpha == 0.0);
    CHECK(DomainSpec::source().noise_sigma == 0.0);
    DomainSpec bad = DomainSpec::source();
    bad.contrast = 2.0;
    CHECK_THROWS_AS(bad.validate(), numerics::ContractError);
}

TEST_CASE("1000 scenes stay in bounds with 1 to 5 objects") {
    const auto scenes = generate_scenes(DomainSpec::target(), 3, 1000);
    for (const auto& s : scenes) {
        REQUIRE(s.image.shape() == numerics::Shape{kChannels, kImageSize, kImageSize});
        CHECK(s.objects.size() >= kMinObjects);
        CHECK(s.objects.size() <= kMaxObjects);
        for (double v : s.image.values()) REQUIRE((v >= 0.0 && v <= 1.0));
        for (const auto& o : s.objects) {
            CHECK(o.box.x1 >= 0.0);
            CHECK(o.box.y1 >= 0.0);
            CHECK(o.box.x2 <= 64.0);
            CHECK(o.box.y2 <= 64.0);
            CHECK(o.box.area() >= 16.0);
            CHECK(o.class_id >= 0);
            CHECK(o.class_id < static_cast<int>(kNumClasses));
        }
    }
}

TEST_CASE("serial and parallel scene generation agree bitwise") {
    const auto a = serial::generate_scenes(DomainSpec::target(), 5, 40);
    const auto b = generate_scenes(DomainSpec::target(), 5, 40);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image == b[i].image);
        CHECK(a[i].objects == b[i].objects);
    }
}

TEST_CASE("extract_features shape and zero case") {
    DetectorParams p = DetectorParams::init(1);
    Tape tape;
    const Var f = extract_features(bind_frozen(tape, p), Tensor({3, 64, 64}, 0.3));
    CHECK(f.value().shape() == numerics::Shape{64, 16});

    for (double& v : p.feat_b.values()) v = 0.0;
    Tape t2;
    const Var z = extract_features(bind_frozen(t2, p), Tensor({3, 64, 64}, 0.0));
    for (double v : z.value().values()) CHECK(v == 0.0);

    Tape t3;
    CHECK_THROWS_AS(extract_features(bind_frozen(t3, p), Tensor({3, 32, 32})), numerics::DimensionError);
}

TEST_CASE("feature weights gradient matches finite differences") {
    const DetectorParams p = DetectorParams::init(2);
    const auto scene = generate_scene(DomainSpec::source(), 5);
    Rng rng(22);
    const Tensor w = numerics::random_normal({kNumCells, kFeatureDim}, rng);
    const auto fn = [&](Tape& tape, Var x) {
        BoundDetector det = bind_frozen(tape, p);
        det.feat_w = x;
        return numerics::weighted_sum(extract_features(det, scene.image), w);
    };
    const auto r = numerics::finite_diff_check(fn, p.feat_w);
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("propose returns every anchor sorted when m = 192") {
    Rng rng(23);
    const Tensor logits = numerics::random_normal({kNumCells, kNumScales}, rng);
    const ProposalSet all = propose(logits, kNumAnchors);
    REQUIRE(all.size() == kNumAnchors);
    CHECK(std::is_sorted(all.objectness.rbegin(), all.objectness.rend()));
    std::vector<std::size_t> anchors = all.anchors;
    std::sort(anchors.begin(), anchors.end());
    for (std::size_t a = 0; a < kNumAnchors; ++a) CHECK(anchors[a] == a);
    for (const auto& b : all.boxes) {
        CHECK(b.x1 >= 0.0);
        CHECK(b.x2 <= 64.0);
        CHECK(b.area() > 0.0);
    }
    for (double o : all.objectness) {
        CHECK(o > 0.0);
        CHECK(o < 1.0);
    }
}

TEST_CASE("identical feature grids give identical proposals") {
    const DetectorParams p = DetectorParams::init(3);
    Rng rng(24);
    const Tensor f = cell_features(rng);
    Tape t1, t2;
    const auto r1 = rpn_head(bind_frozen(t1, p), t1.constant(f));
    const auto r2 = rpn_head(bind_frozen(t2, p), t2.constant(f));
    const auto a = propose(r1.objectness.value(), 16), b = propose(r2.objectness.value(), 16);
    CHECK(a.boxes == b.boxes);
    CHECK(a.objectness == b.objectness);
}

TEST_CASE("propose rejects m outside [1, 192]") {
    const Tensor logits({kNumCells, kNumScales});
    CHECK_THROWS_AS(propose(logits, 193), numerics::ContractError);
    CHECK_THROWS_AS(propose(logits, 0), numerics::ContractError);
}

TEST_CASE("roi_pool examples") {
    Rng rng(25);
    const Tensor f = cell_features(rng);
    Tape tape;
    Var vf = tape.constant(f);

    const std::vector<Box> full{{0, 0, 64, 64}};
    const Tensor mean_all = roi_pool(vf, full).value();
    for (std::size_t j = 0; j < kFeatureDim; ++j) {
        double m = 0.0;
        for (std::size_t c = 0; c < kNumCells; ++c) m += f.at(c, j);
        CHECK(mean_all.at(0, j) == doctest::Approx(m / 64.0).epsilon(1e-14));
    }

    // inside cell (2, 1) without covering its centre
    const std::vector<Box> inner{{17, 9, 19, 11}};
    const Tensor one = roi_pool(vf, inner).value();
    for (std::size_t j = 0; j < kFeatureDim; ++j) CHECK(one.at(0, j) == f.at(1 * 8 + 2, j));

    // covers the centres of cells (0, 0) and (1, 0) only
    const std::vector<Box> pair{{2, 2, 14, 6}};
    const Tensor two = roi_pool(vf, pair).value();
    for (std::size_t j = 0; j < kFeatureDim; ++j)
        CHECK(two.at(0, j) == doctest::Approx(0.5 * (f.at(0, j) + f.at(1, j))).epsilon(1e-14));

    const std::vector<Box> degenerate{{30, 30, 30, 30}};
    CHECK(roi_pool(vf, degenerate).value().all_finite());
}

TEST_CASE("classify_rois shapes and zero weights") {
    DetectorParams p = DetectorParams::init(4);
    for (Tensor* t : {&p.cls_w, &p.cls_b, &p.reg_w, &p.reg_b})
        for (double& v : t->values()) v = 0.0;
    Rng rng(26);
    Tape tape;
    const RoiOutput out = classify_rois(bind_frozen(tape, p), tape.constant(numerics::random_normal({5, 16}, rng)));
    CHECK(out.logits.value().shape() == numerics::Shape{5, kNumClasses + 1});
    CHECK(out.deltas.value().shape() == numerics::Shape{5, 4});
    for (double v : out.logits.value().values()) CHECK(v == 0.0);
    const Tensor probs = numerics::softmax_rows(out.logits).value();
    for (double v : probs.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("classify_rois gradient through both heads") {
    const DetectorParams p = DetectorParams::init(5);
    Rng rng(27);
    const Tensor rois = numerics::random_normal({4, 16}, rng);
    const Tensor wl = numerics::random_normal({4, kNumClasses + 1}, rng);
    const Tensor wd = numerics::random_normal({4, 4}, rng);
    for (int which = 0; which < 2; ++which) {
        const auto fn = [&](Tape& tape, Var x) {
            BoundDetector det = bind_frozen(tape, p);
            (which == 0 ? det.cls_w : det.reg_w) = x;
            const RoiOutput o = classify_rois(det, tape.constant(rois));
            return numerics::add(numerics::weighted_sum(o.logits, wl), numerics::weighted_sum(o.deltas, wd));
        };
        CHECK(numerics::finite_diff_check(fn, which == 0 ? p.cls_w : p.reg_w).max_rel_error < 1e-6);
    }
}

TEST_CASE("detection_loss with uniform logits costs log 4 per proposal") {
    Tape tape;
    const std::vector<BoxLabel> labels{{{8, 8, 36, 36}, 1}};
    const std::vector<Box> proposals{{8, 8, 36, 36}, {40, 40, 60, 60}, {0, 30, 20, 50}};
    RpnOutput rpn{tape.constant(Tensor({kNumCells, kNumScales})), tape.constant(Tensor({kNumCells, 4 * kNumScales}))};
    RoiOutput roi{tape.constant(Tensor({3, kNumClasses + 1})), tape.constant(Tensor({3, 4}))};
    const DetectionLoss l = detection_loss(rpn, proposals, roi, labels);
    CHECK(l.roi_cls.item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("perfect regression on matched proposals zeroes the regression terms") {
    Tape tape;
    const std::vector<BoxLabel> labels{{{10, 12, 38, 40}, 2}};
    const std::vector<Box> proposals{{8, 8, 40, 40}, {44, 44, 60, 60}};
    Tensor roi_d({2, 4});
    const auto t = encode(labels[0].box, proposals[0]);
    for (std::size_t k = 0; k < 4; ++k) roi_d.at(0, k) = t[k];
    Tensor rpn_d({kNumCells, 4 * kNumScales});
    for (std::size_t a = 0; a < kNumAnchors; ++a) {
        if (iou(anchor_box(a), labels[0].box) < kMatchIoU) continue;
        const auto ta = encode(labels[0].box, anchor_box(a));
        for (std::size_t k = 0; k < 4; ++k) rpn_d[4 * a + k] = ta[k];
    }
    RpnOutput rpn{tape.constant(Tensor({kNumCells, kNumScales})), tape.constant(rpn_d)};
    RoiOutput roi{tape.constant(Tensor({2, kNumClasses + 1})), tape.constant(roi_d)};
    const DetectionLoss l = detection_loss(rpn, proposals, roi, labels);
    CHECK(l.roi_reg.item() == 0.0);
    CHECK(l.rpn_reg.item() == 0.0);
}

TEST_CASE("detection_loss without labels is background-only classification") {
    Tape tape;
    const std::vector<Box> proposals{{8, 8, 40, 40}, {44, 44, 60, 60}};
    Rng rng(28);
    RpnOutput rpn{tape.constant(numerics::random_normal({kNumCells, kNumScales}, rng)),
                  tape.constant(numerics::random_normal({kNumCells, 4 * kNumScales}, rng))};
    RoiOutput roi{tape.constant(numerics::random_normal({2, kNumClasses + 1}, rng)),
                  tape.constant(numerics::random_normal({2, 4}, rng))};
    const DetectionLoss l = detection_loss(rpn, proposals, roi, {});
    CHECK(l.roi_reg.item() == 0.0);
    CHECK(l.rpn_reg.item() == 0.0);
    CHECK(std::isfinite(l.total.item()));
    CHECK(l.roi_cls.item() > 0.0);
}

TEST_CASE("detection_loss is finite and nonnegative on random instances") {
    Rng rng(29);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = testing::uniform_size(rng, 1, 12), n = testing::uniform_size(rng, 0, 4);
        std::vector<BoxLabel> labels;
        for (std::size_t g = 0; g < n; ++g) {
            const double x = testing::uniform_real(rng, 0, 40), y = testing::uniform_real(rng, 0, 40);
            labels.push_back({{x, y, x + testing::uniform_real(rng, 6, 24), y + testing::uniform_real(rng, 6, 24)},
                              static_cast<int>(testing::uniform_size(rng, 0, 2))});
        }
        std::vector<Box> proposals;
        for (std::size_t i = 0; i < m; ++i) {
            const double x = testing::uniform_real(rng, 0, 40), y = testing::uniform_real(rng, 0, 40);
            proposals.push_back({x, y, x + testing::uniform_real(rng, 6, 24), y + testing::uniform_real(rng, 6, 24)});
        }
        const double scale = testing::uniform_real(rng, 0.1, 10.0);
        Tape tape;
        RpnOutput rpn{tape.constant(numerics::random_normal({kNumCells, kNumScales}, rng, scale)),
                      tape.constant(numerics::random_normal({kNumCells, 4 * kNumScales}, rng, scale))};
        RoiOutput roi{tape.constant(numerics::random_normal({m, kNumClasses + 1}, rng, scale)),
                      tape.constant(numerics::random_normal({m, 4}, rng, scale))};
        const DetectionLoss l = detection_loss(rpn, proposals, roi, labels);
        for (const Var& term : {l.rpn_cls, l.rpn_reg, l.roi_cls, l.roi_reg, l.total}) {
            CHECK(std::isfinite(term.item()));
            CHECK(term.item() >= 0.0);
        }
    }
}

// Plain gradient steps: with momentum 0.9 the heavy-ball iterate overshoots
// and the loss can tick up, which says nothing about gradient correctness.
TEST_CASE("supervised loss decreases over the first 50 steps on a fixed scene") {
    constexpr std::size_t kSteps = 50;
    std::vector<std::vector<double>> curves;
    double first_momentum = 0.0, last_momentum = 0.0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto scene = generate_scene(DomainSpec::source(), 100 + seed);
        DetectorParams p = DetectorParams::init(seed);
        std::vector<Box> rois;
        for (std::size_t a = 0; a < kNumAnchors; a += 12) rois.push_back(anchor_box(a));
        for (const auto& o : scene.objects) rois.push_back(o.box);
        numerics::SgdState opt;
        std::vector<double> curve;
        for (std::size_t k = 0; k < kSteps; ++k) curve.push_back(supervised_step(p, scene, rois, 0.0, opt));
        curves.push_back(curve);

        DetectorParams q = DetectorParams::init(seed);
        numerics::SgdState heavy;
        for (std::size_t k = 0; k < kSteps; ++k) {
            const double l = supervised_step(q, scene, rois, 0.9, heavy);
            if (k == 0) first_momentum += l;
            if (k + 1 == kSteps) last_momentum += l;
        }
    }
    CHECK(last_momentum < first_momentum);
    for (std::size_t k = 1; k < kSteps; ++k) {
        std::array<double, 3> prev{curves[0][k - 1], curves[1][k - 1], curves[2][k - 1]};
        std::array<double, 3> cur{curves[0][k], curves[1][k], curves[2][k]};
        std::sort(prev.begin(), prev.end());
        std::sort(cur.begin(), cur.end());
        CAPTURE(k);
        CHECK(cur[1] < prev[1]);
    }
}

TEST_CASE("evaluate_map examples") {
    const std::vector<std::vector<BoxLabel>> truth{{{{0, 0, 10, 10}, 0}, {{20, 20, 30, 30}, 1}}};
    const std::vector<DetectionOutput> perfect{as_detections(truth[0])};
    const MapReport r = evaluate_map(perfect, truth);
    CHECK(r.map == 1.0);
    CHECK(r.per_class_ap[0] == 1.0);
    CHECK_FALSE(r.per_class_ap[2].has_value());

    const std::vector<DetectionOutput> none{DetectionOutput{}};
    CHECK(evaluate_map(none, truth).map == 0.0);

    const std::vector<std::vector<BoxLabel>> two{{{{0, 0, 10, 10}, 0}, {{20, 20, 30, 30}, 0}}};
    const std::vector<DetectionOutput> half{as_detections({two[0][0]})};
    const MapReport h = evaluate_map(half, two);
    CHECK(*h.per_class_ap[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(h.map == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("evaluate_map is invariant to scene order and tie order") {
    Rng rng(30);
    const auto scenes = generate_scenes(DomainSpec::source(), 8, 12);
    std::vector<std::vector<BoxLabel>> truth;
    std::vector<DetectionOutput> dets;
    for (const auto& s : scenes) {
        truth.push_back(s.objects);
        DetectionOutput d;
        for (const auto& o : s.objects) {
            const double shift = testing::uniform_real(rng, -4, 4);
            d.boxes.push_back({o.box.x1 + shift, o.box.y1, o.box.x2 + shift, o.box.y2});
            d.class_ids.push_back(static_cast<int>(testing::uniform_size(rng, 0, 2)));
            d.confidences.push_back(testing::uniform_size(rng, 0, 1) ? 0.9 : 0.6);  // many ties
        }
        d.boxes.push_back({1, 1, 9, 9});
        d.class_ids.push_back(0);
        d.confidences.push_back(0.9);
        dets.push_back(d);
    }
    const double base = evaluate_map(dets, truth).map;

    std::vector<std::size_t> order(scenes.size());
    std::iota(order.begin(), order.end(), 0);
    for (int trial = 0; trial < 10; ++trial) {
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<std::vector<BoxLabel>> t2;
        std::vector<DetectionOutput> d2;
        for (std::size_t i : order) {
            t2.push_back(truth[i]);
            DetectionOutput d = dets[i];
            std::vector<std::size_t> perm(d.size());
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            DetectionOutput p;
            for (std::size_t k : perm) {
                p.boxes.push_back(d.boxes[k]);
                p.class_ids.push_back(d.class_ids[k]);
                p.confidences.push_back(d.confidences[k]);
            }
            d2.push_back(p);
        }
        CHECK(evaluate_map(d2, t2).map == base);
    }
}

TEST_CASE("postprocess confidences lie in (0, 1] and survive NMS") {
    const DetectorParams p = DetectorParams::init(6);
    const auto scenes = generate_scenes(DomainSpec::source(), 9, 10);
    for (const auto& s : scenes) {
        const Inference inf = run_detector(p, s.image, DetectConfig{});
        for (std::size_t i = 0; i < inf.detections.size(); ++i) {
            CHECK(inf.detections.confidences[i] > 0.0);
            CHECK(inf.detections.confidences[i] <= 1.0);
            for (std::size_t j = 0; j < i; ++j)
                if (inf.detections.class_ids[i] == inf.detections.class_ids[j])
                    CHECK(iou(inf.detections.boxes[i], inf.detections.boxes[j]) <= kNmsIoU);
        }
    }
}

TEST_CASE("serial and parallel detection agree bitwise") {
    const DetectorParams p = DetectorParams::init(7);
    const auto scenes = generate_scenes(DomainSpec::target(), 10, 12);
    const auto a = serial::detect_all(p, scenes);
    const auto b = detect_all(p, scenes);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].boxes == b[i].boxes);
        CHECK(a[i].confidences == b[i].confidences);
        CHECK(a[i].class_ids == b[i].class_ids);
    }
}

TEST_CASE("dataset round trip") {
    const auto dir = testing::scratch_dir("dataset");
    Dataset d{DomainSpec::target(), 17, generate_scenes(DomainSpec::target(), 17, 5)};
    save_dataset(dir, d);
    const Dataset back = load_dataset(dir);
    CHECK(back.domain == d.domain);
    CHECK(back.base_seed == 17);
    REQUIRE(back.scenes.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(back.scenes[i].image == d.scenes[i].image);
        CHECK(back.scenes[i].objects == d.scenes[i].objects);
        CHECK(back.scenes[i].seed == d.scenes[i].seed);
    }
    CHECK_THROWS_AS(load_dataset(dir / "missing"), numerics::FormatError);
}

}  // TEST_SUITE
