#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "irgsfda/toydet/scene.hpp"

namespace irgsfda::toydet {

inline constexpr const char* kDatasetFormat = "irgsfda-dataset/1";

struct Dataset {
    DomainSpec domain;
    std::uint64_t base_seed = 0;
    std::vector<SyntheticScene> scenes;
};

/// Writes `index.json` plus one raw float64 image per scene under
/// `scenes/`. Output is a pure function of the dataset.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);

/// Reads a directory written by save_dataset. Rejects unknown format tags.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace irgsfda::toydet
