#include "irgsfda/adapt/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <map>

#include "irgsfda/numerics/tensor_io.hpp"
#include "json.hpp"

namespace irgsfda::adapt {

using nlohmann::json;
using numerics::FormatError;
using numerics::Tensor;
namespace fs = std::filesystem;

std::string content_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : text) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

struct Named {
    std::string name;
    const Tensor* tensor;
};

void write_checkpoint(const fs::path& dir, Manifest manifest, const std::vector<Named>& tensors) {
    fs::create_directories(dir / "tensors");
    json entries = json::array();
    for (const auto& [name, t] : tensors) {
        const std::string file = "tensors/" + name + ".bin";
        numerics::write_raw(dir / file, *t);
        entries.push_back({{"name", name}, {"shape", t->shape()}, {"file", file}});
    }
    json j = {{"format", manifest.format},   {"kind", manifest.kind},   {"step_count", manifest.step_count},
              {"config_hash", manifest.config_hash}, {"alpha", manifest.alpha}, {"epsilon", manifest.epsilon},
              {"tensors", std::move(entries)}};
    std::ofstream out(dir / "manifest.json", std::ios::trunc | std::ios::binary);
    if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
    out << j.dump(1) << '\n';
    if (!out) throw FormatError("failed writing " + (dir / "manifest.json").string());
}

std::map<std::string, Tensor> read_tensors(const fs::path& dir, const Manifest& m) {
    std::map<std::string, Tensor> out;
    for (const auto& e : m.tensors) out.emplace(e.name, numerics::read_raw(dir / e.file, e.shape));
    return out;
}

Tensor take(std::map<std::string, Tensor>& tensors, const std::string& name, const numerics::Shape& shape) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
    if (it->second.shape() != shape)
        throw FormatError("checkpoint tensor '" + name + "' has shape " + numerics::shape_string(it->second.shape()) +
                          ", expected " + numerics::shape_string(shape));
    Tensor t = std::move(it->second);
    tensors.erase(it);
    return t;
}

void append_detector(std::vector<Named>& out, const std::string& prefix, const DetectorParams& p) {
    const auto tensors = p.tensors();
    const auto& names = DetectorParams::names();
    for (std::size_t k = 0; k < tensors.size(); ++k) out.push_back({prefix + names[k], tensors[k]});
}

DetectorParams take_detector(std::map<std::string, Tensor>& tensors, const std::string& prefix) {
    DetectorParams p = DetectorParams::init(0);
    auto slots = p.tensors();
    const auto& names = DetectorParams::names();
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const bool rg = slots[k]->requires_grad;
        *slots[k] = take(tensors, prefix + names[k], slots[k]->shape());
        slots[k]->requires_grad = rg;
    }
    return p;
}

}  // namespace

Manifest read_manifest(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw FormatError("missing checkpoint manifest " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("malformed checkpoint manifest " + path.string() + ": " + e.what());
    }
    Manifest m;
    m.format = j.value("format", "");
    if (m.format != kCheckpointFormat)
        throw FormatError("unsupported checkpoint format '" + m.format + "' in " + path.string());
    try {
        m.kind = j.at("kind").get<std::string>();
        m.step_count = j.at("step_count").get<std::size_t>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.alpha = j.at("alpha").get<double>();
        m.epsilon = j.at("epsilon").get<double>();
        for (const auto& e : j.at("tensors"))
            m.tensors.push_back({e.at("name").get<std::string>(), e.at("shape").get<numerics::Shape>(),
                                 e.at("file").get<std::string>()});
    } catch (const json::exception& e) {
        throw FormatError("malformed checkpoint manifest " + path.string() + ": " + e.what());
    }
    return m;
}

void save_detector(const fs::path& dir, const DetectorParams& params, const std::string& config_hash) {
    Manifest m;
    m.kind = "detector";
    m.config_hash = config_hash;
    std::vector<Named> tensors;
    append_detector(tensors, "detector.", params);
    write_checkpoint(dir, m, tensors);
}

DetectorParams load_detector(const fs::path& dir) {
    const Manifest m = read_manifest(dir);
    if (m.kind != "detector") throw FormatError(dir.string() + " holds a '" + m.kind + "' checkpoint, not a detector");
    auto tensors = read_tensors(dir, m);
    return take_detector(tensors, "detector.");
}

void save_state(const fs::path& dir, const StudentTeacherState& state, const std::string& config_hash) {
    if (!state.initialized) throw numerics::ContractError("save_state: state is not initialized");
    Manifest m;
    m.kind = "adapt";
    m.step_count = state.step_count;
    m.config_hash = config_hash;
    m.alpha = state.alpha;
    m.epsilon = state.graph.epsilon;
    std::vector<Named> tensors;
    append_detector(tensors, "student.", state.student);
    append_detector(tensors, "teacher.", state.teacher);
    const auto graph = state.graph.tensors();
    const auto graph_names = state.graph.names();
    for (std::size_t k = 0; k < graph.size(); ++k) tensors.push_back({"graph." + graph_names[k], graph[k]});
    const auto head = state.head.tensors();
    for (std::size_t k = 0; k < head.size(); ++k)
        tensors.push_back({"head." + contrastive::ProjectionHead::names()[k], head[k]});
    std::vector<Tensor> velocity;
    velocity.reserve(state.optimizer.velocity.size());
    for (const auto& v : state.optimizer.velocity) velocity.emplace_back(numerics::Shape{v.size()}, v);
    for (std::size_t k = 0; k < velocity.size(); ++k) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "optimizer.v%03zu", k);
        tensors.push_back({buf, &velocity[k]});
    }
    write_checkpoint(dir, m, tensors);
}

StudentTeacherState load_state(const fs::path& dir) {
    const Manifest m = read_manifest(dir);
    if (m.kind != "adapt") throw FormatError(dir.string() + " holds a '" + m.kind + "' checkpoint, not an adapt state");
    auto tensors = read_tensors(dir, m);
    StudentTeacherState s;
    s.student = take_detector(tensors, "student.");
    s.student.set_requires_grad(true);
    s.teacher = take_detector(tensors, "teacher.");
    s.teacher.set_requires_grad(false);

    const std::size_t d = toydet::kFeatureDim;
    s.graph.f_w = take(tensors, "graph.f_w", {d, d});
    s.graph.g_w = take(tensors, "graph.g_w", {d, d});
    for (std::size_t l = 0; tensors.contains("graph.gcn_w" + std::to_string(l)); ++l)
        s.graph.gcn_w.push_back(take(tensors, "graph.gcn_w" + std::to_string(l), {d, d}));
    s.graph.epsilon = m.epsilon;
    for (Tensor* t : s.graph.tensors()) t->requires_grad = true;
    try {
        s.graph.validate();
    } catch (const numerics::ContractError& e) {
        throw FormatError("invalid relation graph in checkpoint: " + std::string(e.what()));
    }
    s.head.w_k = take(tensors, "head.w_k", {d, d});
    s.head.w_q = take(tensors, "head.w_q", {d, d});
    s.head.w_k.requires_grad = s.head.w_q.requires_grad = true;

    for (std::size_t k = 0;; ++k) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "optimizer.v%03zu", k);
        auto it = tensors.find(buf);
        if (it == tensors.end()) break;
        const auto v = it->second.values();
        s.optimizer.velocity.emplace_back(v.begin(), v.end());
        tensors.erase(it);
    }
    if (!tensors.empty()) throw FormatError("checkpoint has unexpected tensor '" + tensors.begin()->first + "'");
    s.alpha = m.alpha;
    s.step_count = m.step_count;
    s.initialized = true;
    return s;
}

}  // namespace irgsfda::adapt
