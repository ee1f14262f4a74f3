#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "irgsfda/adapt/augment.hpp"
#include "irgsfda/contrastive/contrastive.hpp"
#include "irgsfda/irg/relation_graph.hpp"
#include "irgsfda/numerics/sgd.hpp"
#include "irgsfda/toydet/detector.hpp"

namespace irgsfda::adapt {

using toydet::BoxLabel;
using toydet::DetectionOutput;
using toydet::DetectorParams;

/// Which views feed the student and the teacher.
enum class Pairing {
    StrongWeak,  // student strong, teacher weak
    WeakWeak,
    StrongStrong,
};

std::string to_string(Pairing p);
Pairing pairing_from_string(const std::string& s);

struct AdaptConfig {
    double lr = 0.001;
    double momentum = 0.9;
    double alpha = 0.99;      // teacher EMA momentum
    double threshold = 0.9;   // pseudo-label confidence T
    std::size_t proposals = toydet::kDefaultProposals;
    std::optional<double> epsilon;  // defaults to 2 / proposals
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    double temperature = 1.0;
    double w_sl = 1.0;
    double w_gdl = 1.0;
    double w_gcl = 1.0;
    Pairing pairing = Pairing::StrongWeak;
    std::size_t gcn_layers = 1;
    double jitter = 1.0;
    /// View overrides for tests; unset means the pairing decides.
    std::optional<AugmentationPolicy> student_view;
    std::optional<AugmentationPolicy> teacher_view;

    double effective_epsilon() const { return epsilon.value_or(2.0 / static_cast<double>(proposals)); }
    void validate() const;
};

/// Student, EMA teacher, and the relation graph and projection head that
/// both pipelines share.
struct StudentTeacherState {
    DetectorParams student;
    DetectorParams teacher;
    irg::RelationGraph graph;
    contrastive::ProjectionHead head;
    double alpha = 0.99;
    std::size_t step_count = 0;
    numerics::SgdState optimizer;
    bool initialized = false;

    /// Student and teacher both start from the source-trained weights.
    static StudentTeacherState from_source(const DetectorParams& source, const AdaptConfig& cfg);

    /// Parameters updated by SGD: student detector, graph, head.
    std::vector<numerics::Tensor*> trainable();
};

struct PseudoLabelSet {
    std::vector<BoxLabel> labels;
    std::vector<double> confidences;

    std::size_t size() const noexcept { return labels.size(); }
};

/// Keeps detections with confidence >= T.
PseudoLabelSet filter_pseudo_labels(const DetectionOutput& detections, double threshold);

/// teacher <- alpha * teacher + (1 - alpha) * student, elementwise.
void ema_update(StudentTeacherState& state);
void ema_update(DetectorParams& teacher, const DetectorParams& student, double alpha);

struct StepLosses {
    double sl = 0.0;
    double gdl = 0.0;
    double gdl_cross = 0.0;  // KL(s(Z_st) || s(Z_te)) alone
    double gcl = 0.0;
    double total = 0.0;
    std::size_t pseudo_labels = 0;
};

/// Optional probes into one adaptation step.
struct StepObserver {
    std::function<void(const PseudoLabelSet&)> on_pseudo_labels;
    /// Called with the RoI boxes each pipeline pooled from.
    std::function<void(const toydet::ProposalSet& student_rois, const toydet::ProposalSet& teacher_rois)> on_proposals;
    /// Called after the student update, immediately before the EMA.
    std::function<void(const StudentTeacherState&)> before_ema;
    /// Teacher-side edge matrix and the pairwise labels derived from it.
    std::function<void(const numerics::Tensor& edges, const numerics::Tensor& labels)> on_graph;
};

/// One source-free adaptation step on a single unlabeled scene: teacher
/// pseudo labels on its view, shared teacher proposals, student detector
/// loss, graph distillation, graph contrastive loss, one SGD step, EMA.
StepLosses adapt_step(StudentTeacherState& state, const numerics::Tensor& image, const AdaptConfig& cfg,
                      const StepObserver* observer = nullptr);

}  // namespace irgsfda::adapt
