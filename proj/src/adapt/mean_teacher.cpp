#include "irgsfda/adapt/mean_teacher.hpp"

#include <cmath>

#include "irgsfda/numerics/random.hpp"

namespace irgsfda::adapt {

namespace ops = numerics;
using numerics::ContractError;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

std::string to_string(Pairing p) {
    switch (p) {
    case Pairing::StrongWeak: return "SW";
    case Pairing::WeakWeak: return "WW";
    case Pairing::StrongStrong: return "SS";
    }
    return "SW";
}

Pairing pairing_from_string(const std::string& s) {
    if (s == "SW") return Pairing::StrongWeak;
    if (s == "WW") return Pairing::WeakWeak;
    if (s == "SS") return Pairing::StrongStrong;
    throw ContractError("unknown augmentation pairing '" + s + "' (expected SW, WW or SS)");
}

void AdaptConfig::validate() const {
    if (!(lr > 0.0)) throw ContractError("adapt: lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("adapt: momentum must lie in [0, 1)");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ContractError("adapt: alpha must lie in [0, 1)");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ContractError("adapt: threshold must lie in (0, 1)");
    if (proposals < 2) throw ContractError("adapt: need at least two proposals");
    if (!(effective_epsilon() > 0.0 && effective_epsilon() < 1.0))
        throw ContractError("adapt: epsilon must lie in (0, 1)");
    if (!(temperature > 0.0)) throw ContractError("adapt: temperature must be > 0");
    if (w_sl < 0.0 || w_gdl < 0.0 || w_gcl < 0.0) throw ContractError("adapt: loss weights must be >= 0");
    if (gcn_layers == 0) throw ContractError("adapt: need at least one GCN layer");
}

StudentTeacherState StudentTeacherState::from_source(const DetectorParams& source, const AdaptConfig& cfg) {
    cfg.validate();
    StudentTeacherState s;
    s.student = source;
    s.student.set_requires_grad(true);
    s.teacher = source;
    s.teacher.set_requires_grad(false);
    s.graph = irg::RelationGraph::init(toydet::kFeatureDim, cfg.effective_epsilon(), cfg.gcn_layers,
                                       numerics::mix_seed(cfg.seed, 0x6a7));
    s.head = contrastive::ProjectionHead::init(toydet::kFeatureDim, numerics::mix_seed(cfg.seed, 0x4ead));
    s.alpha = cfg.alpha;
    s.initialized = true;
    return s;
}

std::vector<Tensor*> StudentTeacherState::trainable() {
    std::vector<Tensor*> out = student.tensors();
    for (Tensor* t : graph.tensors()) out.push_back(t);
    for (Tensor* t : head.tensors()) out.push_back(t);
    return out;
}

PseudoLabelSet filter_pseudo_labels(const DetectionOutput& detections, double threshold) {
    PseudoLabelSet out;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        if (!(detections.confidences[i] >= threshold)) continue;
        out.labels.push_back({detections.boxes[i], detections.class_ids[i]});
        out.confidences.push_back(detections.confidences[i]);
    }
    return out;
}

void ema_update(DetectorParams& teacher, const DetectorParams& student, double alpha) {
    auto t = teacher.tensors();
    const auto s = student.tensors();
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k]->shape() != s[k]->shape())
            throw numerics::DimensionError("ema_update: teacher " + numerics::shape_string(t[k]->shape()) +
                                           " vs student " + numerics::shape_string(s[k]->shape()));
        auto tv = t[k]->values();
        const auto sv = s[k]->values();
        for (std::size_t i = 0; i < tv.size(); ++i) tv[i] = std::lerp(tv[i], sv[i], 1.0 - alpha);
    }
}

void ema_update(StudentTeacherState& state) {
    ema_update(state.teacher, state.student, state.alpha);
}

namespace {

struct Views {
    AugmentationPolicy student;
    AugmentationPolicy teacher;
};

Views views_for(const AdaptConfig& cfg) {
    const auto weak = AugmentationPolicy::weak();
    const auto strong = AugmentationPolicy::strong();
    Views v{strong, weak};
    if (cfg.pairing == Pairing::WeakWeak) v = {weak, weak};
    if (cfg.pairing == Pairing::StrongStrong) v = {strong, strong};
    if (cfg.student_view) v.student = *cfg.student_view;
    if (cfg.teacher_view) v.teacher = *cfg.teacher_view;
    return v;
}

}  // namespace

StepLosses adapt_step(StudentTeacherState& state, const Tensor& image, const AdaptConfig& cfg,
                      const StepObserver* observer) {
    if (!state.initialized) throw ContractError("adapt_step: state is not initialized from a source model");
    const Views views = views_for(cfg);
    const std::uint64_t view_seed = numerics::mix_seed(cfg.seed, state.step_count);
    const Tensor teacher_img = augment(image, views.teacher, view_seed);
    const Tensor student_img = augment(image, views.student, view_seed);

    // Teacher: proposals and pseudo labels on its own view.
    const toydet::DetectConfig det_cfg{cfg.proposals, cfg.jitter, toydet::DetectConfig{}.score_floor};
    const toydet::Inference teacher_inf = toydet::run_detector(state.teacher, teacher_img, det_cfg);
    const toydet::ProposalSet& proposals = teacher_inf.proposals;
    const PseudoLabelSet pseudo = filter_pseudo_labels(teacher_inf.detections, cfg.threshold);
    if (observer && observer->on_pseudo_labels) observer->on_pseudo_labels(pseudo);
    if (observer && observer->on_proposals) observer->on_proposals(proposals, teacher_inf.proposals);

    StepLosses out;
    out.pseudo_labels = pseudo.size();
    const bool train = cfg.w_sl > 0.0 || cfg.w_gdl > 0.0 || cfg.w_gcl > 0.0;

    Tape tape;
    toydet::BoundDetector student = toydet::bind(tape, state.student, true);
    Var feats = toydet::extract_features(student, student_img);
    toydet::RpnOutput rpn = toydet::rpn_head(student, feats);
    Var f_st = toydet::roi_pool(feats, proposals.boxes);
    toydet::RoiOutput roi = toydet::classify_rois(student, f_st);

    toydet::DetectionLoss sl = toydet::detection_loss(rpn, proposals.boxes, roi, pseudo.labels);
    out.sl = sl.total.item();
    Var total = ops::scale(sl.total, cfg.w_sl);

    if (cfg.w_gdl > 0.0 || cfg.w_gcl > 0.0 || (observer && observer->on_graph)) {
        irg::BoundGraph graph = irg::bind(tape, state.graph);
        Var f_te = toydet::roi_pool(tape.constant(teacher_inf.features), proposals.boxes);
        Var e_te = irg::compute_edges(graph, f_te);
        const Tensor labels = irg::pairwise_labels(e_te.value(), state.graph.epsilon);
        if (observer && observer->on_graph) observer->on_graph(e_te.value(), labels);

        if (cfg.w_gdl > 0.0) {
            toydet::BoundDetector teacher = toydet::bind_frozen(tape, state.teacher);
            Var z_te = tape.constant(teacher_inf.logits);
            Var z_te_graph = toydet::classify_rois(teacher, irg::gcn_forward(graph, e_te, f_te)).logits;
            Var e_st = irg::compute_edges(graph, f_st);
            Var z_st_graph = toydet::classify_rois(student, irg::gcn_forward(graph, e_st, f_st)).logits;
            irg::DistillationTerms gdl = irg::graph_distillation_loss(roi.logits, z_st_graph, z_te, z_te_graph);
            out.gdl = gdl.total.item();
            out.gdl_cross = gdl.cross_pipeline.item();
            total = ops::add(total, ops::scale(gdl.total, cfg.w_gdl));
        }
        if (cfg.w_gcl > 0.0) {
            contrastive::BoundHead head = contrastive::bind(tape, state.head);
            contrastive::KeysQueries kq = contrastive::project(head, f_st);
            Var r = contrastive::pairwise_logits(kq.queries, kq.keys);
            Var gcl = contrastive::graph_contrastive_loss(r, labels, {cfg.temperature});
            out.gcl = gcl.item();
            total = ops::add(total, ops::scale(gcl, cfg.w_gcl));
        }
    }
    out.total = total.item();

    if (train) {
        tape.backward(total);
        auto params = state.trainable();
        for (Tensor* p : params)
            if (!p->grad) p->grad.emplace(p->size(), 0.0);
        numerics::sgd_step(params, cfg.lr, cfg.momentum, state.optimizer);
    }
    if (observer && observer->before_ema) observer->before_ema(state);
    ema_update(state);
    ++state.step_count;
    return out;
}

}  // namespace irgsfda::adapt
