#include "irgsfda/adapt/training.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "irgsfda/numerics/random.hpp"
#include "irgsfda/numerics/tensor_io.hpp"
#include "irgsfda/toydet/metrics.hpp"

namespace irgsfda::adapt {

using numerics::ContractError;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

void SourceConfig::validate() const {
    if (!(lr > 0.0)) throw ContractError("train_source: lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("train_source: momentum must lie in [0, 1)");
    if (proposals == 0) throw ContractError("train_source: need at least one proposal");
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    numerics::Rng rng(numerics::mix_seed(seed, 0x5eed0000ULL + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

}  // namespace

DetectorParams train_source(const SourceConfig& cfg, std::span<const SyntheticScene> scenes) {
    cfg.validate();
    DetectorParams params = DetectorParams::init(cfg.seed);
    auto tensors = params.tensors();
    numerics::SgdState opt;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t idx : epoch_order(scenes.size(), cfg.seed, epoch)) {
            const SyntheticScene& scene = scenes[idx];
            Tape tape;
            toydet::BoundDetector det = toydet::bind(tape, params, true);
            Var feats = toydet::extract_features(det, scene.image);
            toydet::RpnOutput rpn = toydet::rpn_head(det, feats);
            std::vector<toydet::Box> boxes = toydet::propose(rpn.objectness.value(), cfg.proposals, cfg.jitter).boxes;
            for (const auto& obj : scene.objects) boxes.push_back(obj.box);
            toydet::RoiOutput roi = toydet::classify_rois(det, toydet::roi_pool(feats, boxes));
            toydet::DetectionLoss loss = toydet::detection_loss(rpn, boxes, roi, scene.objects);
            tape.backward(loss.total);
            numerics::sgd_step(tensors, cfg.lr, cfg.momentum, opt);
        }
    }
    return params;
}

toydet::DetectConfig detect_config(const AdaptConfig& cfg) {
    toydet::DetectConfig d;
    d.proposals = cfg.proposals;
    d.jitter = cfg.jitter;
    return d;
}

void adapt_loop(const AdaptConfig& cfg, StudentTeacherState& state, std::span<const SyntheticScene> target_scenes,
                std::span<const SyntheticScene> eval_scenes, std::vector<EpochMetrics>& history,
                const AdaptHooks* hooks) {
    cfg.validate();
    const StepObserver* observer = hooks ? &hooks->step : nullptr;
    const std::size_t first = history.size();
    for (std::size_t epoch = first; epoch < first + cfg.epochs; ++epoch) {
        EpochMetrics row;
        row.epoch = epoch + 1;
        for (std::size_t idx : epoch_order(target_scenes.size(), cfg.seed, epoch)) {
            const StepLosses l = adapt_step(state, target_scenes[idx].image, cfg, observer);
            row.l_sl += l.sl;
            row.l_gdl += l.gdl;
            row.l_gcl += l.gcl;
        }
        if (!target_scenes.empty()) {
            const auto n = static_cast<double>(target_scenes.size());
            row.l_sl /= n;
            row.l_gdl /= n;
            row.l_gcl /= n;
        }
        row.teacher_map = toydet::evaluate_map(state.teacher, eval_scenes, toydet::kMatchIoU, detect_config(cfg)).map;
        history.push_back(row);
        if (hooks && hooks->on_epoch) hooks->on_epoch(row);
    }
}

AdaptResult adapt_loop(const AdaptConfig& cfg, const DetectorParams& source,
                       std::span<const SyntheticScene> target_scenes, std::span<const SyntheticScene> eval_scenes,
                       const AdaptHooks* hooks) {
    AdaptResult result{StudentTeacherState::from_source(source, cfg), {}};
    adapt_loop(cfg, result.state, target_scenes, eval_scenes, result.history, hooks);
    return result;
}

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void append_metrics(const std::filesystem::path& path, const EpochMetrics& row) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    if (!fresh) {
        std::ifstream in(path);
        std::string tag;
        std::getline(in, tag);
        if (tag != std::string("# ") + kMetricsFormat)
            throw numerics::FormatError("metrics file " + path.string() + " has unknown format line '" + tag + "'");
    }
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw numerics::FormatError("cannot open metrics file " + path.string());
    if (fresh) out << "# " << kMetricsFormat << '\n' << kMetricsHeader << '\n';
    out << row.epoch << ',' << format_double(row.l_sl) << ',' << format_double(row.l_gdl) << ','
        << format_double(row.l_gcl) << ',' << format_double(row.teacher_map) << '\n';
    if (!out) throw numerics::FormatError("failed writing metrics file " + path.string());
}

std::vector<EpochMetrics> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw numerics::FormatError("cannot open metrics file " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != std::string("# ") + kMetricsFormat)
        throw numerics::FormatError("metrics file " + path.string() + " has unknown format line '" + line + "'");
    if (!std::getline(in, line) || line != kMetricsHeader)
        throw numerics::FormatError("metrics file " + path.string() + " has an unexpected header");
    std::vector<EpochMetrics> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 5) throw numerics::FormatError("metrics row has " + std::to_string(cells.size()) + " cells");
        try {
            rows.push_back({std::stoul(cells[0]), std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3]),
                            std::stod(cells[4])});
        } catch (const std::logic_error&) {
            throw numerics::FormatError("malformed metrics row '" + line + "'");
        }
    }
    return rows;
}

}  // namespace irgsfda::adapt
