#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "irgsfda/cli/experiment_config.hpp"
#include "irgsfda/cli/grad_suite.hpp"

namespace irgsfda::cli {

/// Environment variable consulted for the default seed.
inline constexpr const char* kSeedEnv = "IRGSFDA_SEED";

/// Value of IRGSFDA_SEED, or 0 when unset. Throws ConfigError on garbage.
std::uint64_t default_seed();

struct GenDataOptions {
    std::string domain = "source";  // source | target
    std::optional<double> brightness, contrast, noise, fog;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    std::filesystem::path out;
    bool force = false;
};

struct TrainSourceOptions {
    std::filesystem::path data;
    std::filesystem::path out;
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> eval_data;  // optional held-out scenes to score
    std::optional<std::size_t> epochs;
    std::optional<double> lr;
    std::uint64_t seed = 0;
};

struct AdaptOptions {
    std::filesystem::path source;  // detector checkpoint
    std::filesystem::path data;    // unlabeled target scenes
    std::filesystem::path eval_data;
    std::filesystem::path out;
    std::optional<std::filesystem::path> config;
    std::optional<std::size_t> epochs;
    std::optional<std::string> pairing;
    std::optional<double> w_sl, w_gdl, w_gcl;
    std::uint64_t seed = 0;
};

struct EvalOptions {
    std::optional<std::filesystem::path> checkpoint;  // detector or adapt state (teacher is scored)
    std::filesystem::path data;
    std::optional<std::filesystem::path> csv;
    std::size_t proposals = 16;
    double jitter = 1.0;
    bool oracle = false;  // score the ground truth itself
};

struct GradCheckOptions {
    std::uint64_t seed = 0;
    std::size_t instances = 20;
    std::string inject_fault = "none";  // none | gcl-sign
    std::optional<std::filesystem::path> dump_edges;
    std::optional<std::filesystem::path> dump_labels;
    std::optional<std::filesystem::path> state;  // adapt state supplying the graph
    std::optional<std::filesystem::path> data;   // scenes supplying the batch
    std::size_t scene = 0;
};

int cmd_gen_data(const GenDataOptions& opts, std::ostream& out, std::ostream& err);
int cmd_train_source(const TrainSourceOptions& opts, std::ostream& out, std::ostream& err);
int cmd_adapt(const AdaptOptions& opts, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err);
int cmd_grad_check(const GradCheckOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace irgsfda::cli
