#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "irgsfda/adapt/mean_teacher.hpp"
#include "irgsfda/adapt/training.hpp"
#include "irgsfda/toydet/scene.hpp"

namespace irgsfda::cli {

inline constexpr const char* kConfigFormat = "irgsfda-config/1";

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything one experiment needs, stored as `key=value` lines.
struct ExperimentConfig {
    std::string output_dir = "runs/default";
    std::uint64_t seed = 0;
    toydet::DomainSpec source = toydet::DomainSpec::source();
    toydet::DomainSpec target = toydet::DomainSpec::target();
    std::size_t source_train = 200;
    std::size_t source_eval = 50;
    std::size_t target_train = 200;
    std::size_t target_eval = 50;
    adapt::SourceConfig source_training;
    adapt::AdaptConfig adaptation;

    /// Propagates `seed` into the training sections.
    void apply_seed(std::uint64_t s);

    friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);
};

/// One `key=value` per line, keys sorted, first line `format=...`.
/// Reals use 17 significant digits so parse(emit(c)) == c.
std::string emit_config(const ExperimentConfig& cfg);

/// Rejects unknown keys, duplicate keys, missing format and bad values.
/// Missing keys keep their defaults. `#` starts a comment line.
ExperimentConfig parse_config(const std::string& text);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

}  // namespace irgsfda::cli
