// Command-line front end for the universal adversarial patch toolkit.
// Subcommands map one-to-one onto pipeline stages and evaluation protocols;
// every run is driven by a single JSON config whose keys can be overridden
// with repeated --set key.path=value flags.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "uapatch/errors.hpp"
#include "uapatch/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

uapatch::ExperimentConfig load_config(const std::string& path,
                                      const std::vector<std::string>& overrides) {
    uapatch::ExperimentConfig cfg = uapatch::ExperimentConfig::from_file(path);
    for (const auto& ov : overrides) cfg.apply_override(ov);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"uapatch: universal adversarial patch pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    bool force = false;

    auto add_common = [&](CLI::App* cmd, bool with_force = true) {
        cmd->add_option("config", config_path, "experiment config JSON")->required();
        cmd->add_option("--set", overrides, "override config keys, e.g. --set patch_trainer.epochs=10");
        if (with_force) cmd->add_flag("--force", force, "re-run even if artifacts are fresh");
    };

    CLI::App* train_model = app.add_subcommand("train-model", "train the target classifier");
    CLI::App* mine = app.add_subcommand("mine", "mine hard examples from the held-out split");
    CLI::App* fuse = app.add_subcommand("fuse", "fuse the textural prior from hard examples");
    CLI::App* prototypes = app.add_subcommand("prototypes", "synthesize class prototypes");
    CLI::App* train_patch = app.add_subcommand("train-patch", "train the adversarial patch");
    CLI::App* evaluate = app.add_subcommand("evaluate", "paired attack evaluation on the test split");
    CLI::App* transfer = app.add_subcommand("transfer", "cross-architecture transfer matrix");
    CLI::App* unseen = app.add_subcommand("unseen", "unseen-class generalization protocol");
    CLI::App* ablate_mixture =
        app.add_subcommand("ablate-mixture", "prototype/image training-mix ablation");
    CLI::App* ablate_transform =
        app.add_subcommand("ablate-transform", "with/without-EOT transform ablation");
    CLI::App* probe_boundary =
        app.add_subcommand("probe-boundary", "decision-boundary distance comparison of priors");
    CLI::App* run_pipeline = app.add_subcommand("run-pipeline", "run all stages in order");
    CLI::App* report = app.add_subcommand("report", "print a human-readable summary and plots");

    for (CLI::App* cmd : {train_model, mine, fuse, prototypes, train_patch, evaluate,
                          run_pipeline})
        add_common(cmd);
    for (CLI::App* cmd : {transfer, unseen, ablate_mixture, ablate_transform, probe_boundary,
                          report})
        add_common(cmd, false);

    CLI11_PARSE(app, argc, argv);

    try {
        uapatch::ExperimentConfig cfg = load_config(config_path, overrides);
        uapatch::Experiment exp(cfg, &std::cout);

        if (train_model->parsed()) {
            std::cout << exp.ensure_model(force) << std::endl;
        } else if (mine->parsed()) {
            std::cout << exp.ensure_hard_set(force) << std::endl;
        } else if (fuse->parsed()) {
            std::cout << exp.ensure_fused_prior(force) << std::endl;
        } else if (prototypes->parsed()) {
            std::cout << exp.ensure_prototypes(force) << std::endl;
        } else if (train_patch->parsed()) {
            std::cout << exp.ensure_patch(force) << std::endl;
        } else if (evaluate->parsed()) {
            std::cout << exp.ensure_report(force) << std::endl;
            exp.write_manifest();
        } else if (transfer->parsed()) {
            std::cout << exp.run_transfer() << std::endl;
        } else if (unseen->parsed()) {
            std::cout << exp.run_unseen() << std::endl;
        } else if (ablate_mixture->parsed()) {
            std::cout << exp.run_mixture() << std::endl;
        } else if (ablate_transform->parsed()) {
            std::cout << exp.run_transform_ablation() << std::endl;
        } else if (probe_boundary->parsed()) {
            std::cout << exp.run_boundary_probe() << std::endl;
        } else if (run_pipeline->parsed()) {
            exp.run_pipeline(force);
        } else if (report->parsed()) {
            exp.print_report(std::cout);
        }
        return kExitOk;
    } catch (const uapatch::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << std::endl;
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitRuntime;
    }
}
