// Command-line front end: data generation, source training, adaptation,
// evaluation and gradient checks.

#include <iostream>

#include "CLI11.hpp"
#include "irgsfda/cli/commands.hpp"

namespace cli = irgsfda::cli;

int main(int argc, char** argv) {
    std::uint64_t seed = 0;
    try {
        seed = cli::default_seed();
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }

    CLI::App app{"Source-free detector adaptation with instance relation graphs"};
    app.require_subcommand(1);

    cli::GenDataOptions gen;
    gen.seed = seed;
    auto* gen_cmd = app.add_subcommand("gen-data", "Render a synthetic scene dataset");
    gen_cmd->add_option("--domain", gen.domain, "source or target")->check(CLI::IsMember({"source", "target"}));
    gen_cmd->add_option("--count", gen.count, "Number of scenes")->required();
    gen_cmd->add_option("--seed", gen.seed, "Base seed (default $IRGSFDA_SEED or 0)");
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--brightness", gen.brightness, "Override the domain brightness offset");
    gen_cmd->add_option("--contrast", gen.contrast, "Override the domain contrast gain");
    gen_cmd->add_option("--noise", gen.noise, "Override the domain noise sigma");
    gen_cmd->add_option("--fog", gen.fog, "Override the domain fog blend");
    gen_cmd->add_flag("--force", gen.force, "Replace an existing dataset");

    cli::TrainSourceOptions train;
    train.seed = seed;
    auto* train_cmd = app.add_subcommand("train-source", "Supervised training on labeled source scenes");
    train_cmd->add_option("--data", train.data, "Source dataset directory")->required();
    train_cmd->add_option("--out", train.out, "Checkpoint directory")->required();
    train_cmd->add_option("--config", train.config, "Experiment config file");
    train_cmd->add_option("--eval", train.eval_data, "Held-out dataset to score after training");
    train_cmd->add_option("--epochs", train.epochs);
    train_cmd->add_option("--lr", train.lr);
    train_cmd->add_option("--seed", train.seed);

    cli::AdaptOptions adapt;
    adapt.seed = seed;
    auto* adapt_cmd = app.add_subcommand("adapt", "Source-free adaptation on unlabeled target scenes");
    adapt_cmd->add_option("--source", adapt.source, "Source detector checkpoint")->required();
    adapt_cmd->add_option("--data", adapt.data, "Unlabeled target dataset")->required();
    adapt_cmd->add_option("--eval", adapt.eval_data, "Held-out target dataset for teacher mAP")->required();
    adapt_cmd->add_option("--out", adapt.out, "Run directory")->required();
    adapt_cmd->add_option("--config", adapt.config, "Experiment config file");
    adapt_cmd->add_option("--epochs", adapt.epochs);
    adapt_cmd->add_option("--pairing", adapt.pairing, "SW, WW or SS")->check(CLI::IsMember({"SW", "WW", "SS"}));
    adapt_cmd->add_option("--w-sl", adapt.w_sl, "Weight of the pseudo-label loss");
    adapt_cmd->add_option("--w-gdl", adapt.w_gdl, "Weight of the graph distillation loss");
    adapt_cmd->add_option("--w-gcl", adapt.w_gcl, "Weight of the graph contrastive loss");
    adapt_cmd->add_option("--seed", adapt.seed);

    cli::EvalOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "Per-class AP and mAP at IoU 0.5");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "Detector checkpoint or adapt state");
    eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
    eval_cmd->add_option("--csv", eval.csv, "Also write the report as CSV");
    eval_cmd->add_option("--proposals", eval.proposals);
    eval_cmd->add_option("--jitter", eval.jitter);
    eval_cmd->add_flag("--oracle", eval.oracle, "Score the ground truth as detections");

    cli::GradCheckOptions grad;
    grad.seed = seed;
    auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference check of every loss");
    grad_cmd->add_option("--seed", grad.seed);
    grad_cmd->add_option("--instances", grad.instances);
    grad_cmd->add_option("--inject-fault", grad.inject_fault, "none or gcl-sign")
        ->check(CLI::IsMember({"none", "gcl-sign"}));
    grad_cmd->add_option("--dump-edges", grad.dump_edges, "Write the edge matrix E as CSV");
    grad_cmd->add_option("--dump-labels", grad.dump_labels, "Write the pairwise labels M as CSV");
    grad_cmd->add_option("--state", grad.state, "Adapt state supplying the relation graph");
    grad_cmd->add_option("--data", grad.data, "Dataset supplying the scene");
    grad_cmd->add_option("--scene", grad.scene, "Scene index within --data");

    CLI11_PARSE(app, argc, argv);

    if (*gen_cmd) return cli::cmd_gen_data(gen, std::cout, std::cerr);
    if (*train_cmd) return cli::cmd_train_source(train, std::cout, std::cerr);
    if (*adapt_cmd) return cli::cmd_adapt(adapt, std::cout, std::cerr);
    if (*eval_cmd) return cli::cmd_eval(eval, std::cout, std::cerr);
    return cli::cmd_grad_check(grad, std::cout, std::cerr);
}
