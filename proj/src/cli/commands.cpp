#include "irgsfda/cli/commands.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "irgsfda/adapt/checkpoint.hpp"
#include "irgsfda/adapt/training.hpp"
#include "irgsfda/irg/relation_graph.hpp"
#include "irgsfda/numerics/tensor_io.hpp"
#include "irgsfda/toydet/dataset.hpp"
#include "irgsfda/toydet/metrics.hpp"

namespace irgsfda::cli {

namespace fs = std::filesystem;
using numerics::Tensor;

namespace {

constexpr const char* kEvalFormat = "irgsfda-eval/1";
constexpr const char* kClassNames[] = {"square", "disc", "triangle"};

std::string real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool non_empty_dir(const fs::path& p) {
    return fs::exists(p) && (!fs::is_directory(p) || !fs::is_empty(p));
}

void require_exists(const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw numerics::FormatError(std::string(what) + " not found: " + p.string());
}

toydet::DetectorParams load_teacher_or_detector(const fs::path& dir) {
    require_exists(dir / "manifest.json", "checkpoint");
    const adapt::Manifest m = adapt::read_manifest(dir);
    if (m.kind == "adapt") return adapt::load_state(dir).teacher;
    return adapt::load_detector(dir);
}

// The output location is not part of the experiment's identity.
std::string experiment_hash(ExperimentConfig cfg) {
    cfg.output_dir.clear();
    return adapt::content_hash(emit_config(cfg));
}

template <class Fn>
int guarded(std::ostream& err, const char* command, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        err << command << ": " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

std::uint64_t default_seed() {
    const char* env = std::getenv(kSeedEnv);
    if (!env || !*env) return 0;
    const std::string s(env);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ConfigError(std::string(kSeedEnv) + " must be a non-negative integer, got '" + s + "'");
    return v;
}

int cmd_gen_data(const GenDataOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, "gen-data", [&] {
        toydet::DomainSpec domain;
        if (opts.domain == "source")
            domain = toydet::DomainSpec::source();
        else if (opts.domain == "target")
            domain = toydet::DomainSpec::target();
        else
            throw ConfigError("--domain must be source or target, got '" + opts.domain + "'");
        if (opts.brightness) domain.brightness = *opts.brightness;
        if (opts.contrast) domain.contrast = *opts.contrast;
        if (opts.noise) domain.noise_sigma = *opts.noise;
        if (opts.fog) domain.fog_alpha = *opts.fog;
        domain.validate();

        if (non_empty_dir(opts.out)) {
            if (!opts.force) {
                err << "gen-data: refusing to overwrite non-empty " << opts.out.string() << " (pass --force)\n";
                return 2;
            }
            fs::remove(opts.out / "index.json");
            fs::remove_all(opts.out / "scenes");
        }
        toydet::Dataset data{domain, opts.seed, toydet::generate_scenes(domain, opts.seed, opts.count)};
        toydet::save_dataset(opts.out, data);
        out << "wrote " << data.scenes.size() << " " << domain.name << " scenes to " << opts.out.string() << '\n';
        return 0;
    });
}

int cmd_train_source(const TrainSourceOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, "train-source", [&] {
        ExperimentConfig cfg = opts.config ? load_config(*opts.config) : ExperimentConfig{};
        if (!opts.config) cfg.apply_seed(opts.seed);
        if (opts.epochs) cfg.source_training.epochs = *opts.epochs;
        if (opts.lr) cfg.source_training.lr = *opts.lr;
        cfg.source_training.validate();

        require_exists(opts.data / "index.json", "dataset");
        const toydet::Dataset data = toydet::load_dataset(opts.data);
        const toydet::DetectorParams params = adapt::train_source(cfg.source_training, data.scenes);
        adapt::save_detector(opts.out, params, experiment_hash(cfg));
        out << "trained on " << data.scenes.size() << " scenes for " << cfg.source_training.epochs
            << " epochs; checkpoint " << opts.out.string() << '\n';
        if (opts.eval_data) {
            require_exists(*opts.eval_data / "index.json", "dataset");
            const toydet::Dataset eval = toydet::load_dataset(*opts.eval_data);
            toydet::DetectConfig dc;
            dc.proposals = cfg.source_training.proposals;
            dc.jitter = cfg.source_training.jitter;
            out << "mAP " << real(toydet::evaluate_map(params, eval.scenes, toydet::kMatchIoU, dc).map) << '\n';
        }
        return 0;
    });
}

int cmd_adapt(const AdaptOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, "adapt", [&] {
        ExperimentConfig cfg = opts.config ? load_config(*opts.config) : ExperimentConfig{};
        if (!opts.config) cfg.apply_seed(opts.seed);
        adapt::AdaptConfig& ac = cfg.adaptation;
        if (opts.epochs) ac.epochs = *opts.epochs;
        if (opts.pairing) ac.pairing = adapt::pairing_from_string(*opts.pairing);
        if (opts.w_sl) ac.w_sl = *opts.w_sl;
        if (opts.w_gdl) ac.w_gdl = *opts.w_gdl;
        if (opts.w_gcl) ac.w_gcl = *opts.w_gcl;
        cfg.output_dir = opts.out.string();
        ac.validate();

        require_exists(opts.source / "manifest.json", "source checkpoint");
        const toydet::DetectorParams source = adapt::load_detector(opts.source);
        require_exists(opts.data / "index.json", "dataset");
        require_exists(opts.eval_data / "index.json", "dataset");
        const toydet::Dataset target = toydet::load_dataset(opts.data);
        const toydet::Dataset eval = toydet::load_dataset(opts.eval_data);

        const fs::path metrics = opts.out / "metrics.csv";
        if (fs::exists(metrics)) {
            err << "adapt: " << metrics.string() << " already exists; choose a fresh --out\n";
            return 2;
        }
        fs::create_directories(opts.out);
        save_config(opts.out / "config.txt", cfg);
        const std::string hash = experiment_hash(cfg);

        adapt::AdaptHooks hooks;
        hooks.on_epoch = [&](const adapt::EpochMetrics& row) {
            adapt::append_metrics(metrics, row);
            out << "epoch " << row.epoch << " L_SL " << real(row.l_sl) << " L_GDL " << real(row.l_gdl) << " L_GCL "
                << real(row.l_gcl) << " teacher_mAP " << real(row.teacher_map) << '\n';
        };
        const adapt::AdaptResult result = adapt::adapt_loop(ac, source, target.scenes, eval.scenes, &hooks);
        if (result.history.empty()) {
            std::ofstream touch(metrics, std::ios::binary);
            touch << "# " << adapt::kMetricsFormat << '\n' << adapt::kMetricsHeader << '\n';
        }
        adapt::save_state(opts.out / "state", result.state, hash);
        adapt::save_detector(opts.out / "teacher", result.state.teacher, hash);
        out << "teacher checkpoint " << (opts.out / "teacher").string() << '\n';
        return 0;
    });
}

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, "eval", [&] {
        if (!opts.oracle && !opts.checkpoint) throw ConfigError("eval needs --checkpoint or --oracle");
        require_exists(opts.data / "index.json", "dataset");
        const toydet::Dataset data = toydet::load_dataset(opts.data);
        std::vector<std::vector<toydet::BoxLabel>> truth;
        for (const auto& s : data.scenes) truth.push_back(s.objects);

        toydet::MapReport report;
        if (opts.oracle) {
            std::vector<toydet::DetectionOutput> dets;
            for (const auto& s : data.scenes) {
                toydet::DetectionOutput d;
                for (const auto& o : s.objects) {
                    d.boxes.push_back(o.box);
                    d.class_ids.push_back(o.class_id);
                    d.confidences.push_back(1.0);
                }
                dets.push_back(std::move(d));
            }
            report = toydet::evaluate_map(dets, truth);
        } else {
            const toydet::DetectorParams params = load_teacher_or_detector(*opts.checkpoint);
            toydet::DetectConfig dc;
            dc.proposals = opts.proposals;
            dc.jitter = opts.jitter;
            report = toydet::evaluate_map(params, data.scenes, toydet::kMatchIoU, dc);
        }

        std::string csv = std::string("# ") + kEvalFormat + "\nclass,AP\n";
        for (std::size_t c = 0; c < report.per_class_ap.size(); ++c) {
            const auto& ap = report.per_class_ap[c];
            out << kClassNames[c] << " AP " << (ap ? real(*ap) : std::string("n/a")) << '\n';
            csv += std::string(kClassNames[c]) + "," + (ap ? real(*ap) : std::string()) + "\n";
        }
        out << "mAP " << real(report.map) << '\n';
        csv += "mAP," + real(report.map) + "\n";
        if (opts.csv) {
            std::ofstream f(*opts.csv, std::ios::binary | std::ios::trunc);
            if (!f) throw numerics::FormatError("cannot write " + opts.csv->string());
            f << csv;
        }
        return 0;
    });
}

int cmd_grad_check(const GradCheckOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, "grad-check", [&] {
        GradSuiteOptions suite;
        suite.seed = opts.seed;
        suite.instances = opts.instances;
        if (opts.inject_fault == "gcl-sign")
            suite.fault = Fault::GclSign;
        else if (opts.inject_fault != "none")
            throw ConfigError("--inject-fault must be none or gcl-sign, got '" + opts.inject_fault + "'");

        bool ok = true;
        for (const LossCheck& c : run_grad_suite(suite)) {
            out << c.loss << " max_rel_error " << real(c.max_rel_error) << " checked " << c.checked << " excluded "
                << c.excluded << " worst " << c.worst << (c.passed ? " PASS" : " FAIL") << '\n';
            ok = ok && c.passed;
        }

        if (opts.dump_edges || opts.dump_labels) {
            GraphSample g;
            if (opts.state || opts.data) {
                if (!opts.state || !opts.data) throw ConfigError("--state and --data must be given together");
                require_exists(*opts.state / "manifest.json", "checkpoint");
                const adapt::StudentTeacherState state = adapt::load_state(*opts.state);
                const toydet::Dataset data = toydet::load_dataset(*opts.data);
                if (opts.scene >= data.scenes.size())
                    throw ConfigError("--scene " + std::to_string(opts.scene) + " is out of range");
                const toydet::Inference inf =
                    toydet::run_detector(state.teacher, data.scenes[opts.scene].image, toydet::DetectConfig{});
                numerics::Tape tape;
                numerics::Var feats = toydet::roi_pool(tape.constant(inf.features), inf.proposals.boxes);
                g.edges = irg::compute_edges(irg::bind_frozen(tape, state.graph), feats).value();
                g.labels = irg::pairwise_labels(g.edges, state.graph.epsilon);
            } else {
                g = sample_graph(opts.seed, 6, 5, 2.0 / 6.0);
            }
            if (opts.dump_edges) write_matrix_csv(*opts.dump_edges, g.edges);
            if (opts.dump_labels) write_matrix_csv(*opts.dump_labels, g.labels);
        }
        return ok ? 0 : 1;
    });
}

}  // namespace irgsfda::cli
