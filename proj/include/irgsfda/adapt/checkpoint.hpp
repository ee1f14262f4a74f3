#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "irgsfda/adapt/mean_teacher.hpp"

namespace irgsfda::adapt {

inline constexpr const char* kCheckpointFormat = "irgsfda-checkpoint/1";

struct ManifestEntry {
    std::string name;
    numerics::Shape shape;
    std::string file;
};

struct Manifest {
    std::string format = kCheckpointFormat;
    std::string kind;  // "detector" or "adapt"
    std::size_t step_count = 0;
    std::string config_hash;
    double alpha = 0.0;    // adapt checkpoints only
    double epsilon = 0.0;  // adapt checkpoints only
    std::vector<ManifestEntry> tensors;
};

/// Layout: `manifest.json` plus `tensors/<name>.bin` (raw float64).
void save_detector(const std::filesystem::path& dir, const DetectorParams& params, const std::string& config_hash);
DetectorParams load_detector(const std::filesystem::path& dir);

/// Student, teacher, graph, head and optimizer velocity.
void save_state(const std::filesystem::path& dir, const StudentTeacherState& state, const std::string& config_hash);
StudentTeacherState load_state(const std::filesystem::path& dir);

/// Reads and validates the manifest only.
Manifest read_manifest(const std::filesystem::path& dir);

/// FNV-1a 64 of the text, as 16 hex digits.
std::string content_hash(const std::string& text);

}  // namespace irgsfda::adapt
