#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "irgsfda/adapt/mean_teacher.hpp"
#include "irgsfda/toydet/scene.hpp"

namespace irgsfda::adapt {

using toydet::SyntheticScene;

struct SourceConfig {
    double lr = 0.001;
    double momentum = 0.9;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    std::size_t proposals = toydet::kDefaultProposals;
    double jitter = 1.0;

    void validate() const;
};

/// Supervised training on labeled source scenes. Each step pools RoIs from
/// the detector's own top proposals plus the ground-truth boxes, so the RoI
/// heads see positives from the first step on.
DetectorParams train_source(const SourceConfig& cfg, std::span<const SyntheticScene> scenes);

struct EpochMetrics {
    std::size_t epoch = 0;
    double l_sl = 0.0;   // means over the epoch's steps
    double l_gdl = 0.0;
    double l_gcl = 0.0;
    double teacher_map = 0.0;

    friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct AdaptResult {
    StudentTeacherState state;
    std::vector<EpochMetrics> history;
};

struct AdaptHooks {
    StepObserver step;
    std::function<void(const EpochMetrics&)> on_epoch;
};

/// Runs adapt_step over the target scenes (reshuffled each epoch) and scores
/// the teacher on `eval_scenes` after every epoch.
AdaptResult adapt_loop(const AdaptConfig& cfg, const DetectorParams& source,
                       std::span<const SyntheticScene> target_scenes, std::span<const SyntheticScene> eval_scenes,
                       const AdaptHooks* hooks = nullptr);

/// Same loop, resuming from an existing state.
void adapt_loop(const AdaptConfig& cfg, StudentTeacherState& state, std::span<const SyntheticScene> target_scenes,
                std::span<const SyntheticScene> eval_scenes, std::vector<EpochMetrics>& history,
                const AdaptHooks* hooks = nullptr);

toydet::DetectConfig detect_config(const AdaptConfig& cfg);

inline constexpr const char* kMetricsFormat = "irgsfda-metrics/1";
inline constexpr const char* kMetricsHeader = "epoch,L_SL,L_GDL,L_GCL,teacher_mAP";

/// Appends one row; writes the format line and header when the file is new
/// or empty. Values use 17 significant digits.
void append_metrics(const std::filesystem::path& path, const EpochMetrics& row);
std::vector<EpochMetrics> read_metrics(const std::filesystem::path& path);

}  // namespace irgsfda::adapt
