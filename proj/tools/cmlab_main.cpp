// cmlab: seeded experiment runner for the consistency-training laboratory.
// Subcommands cover training, sampling, evaluation, and the diagnostic
// reports; every run writes a manifest with the effective config hash.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cmlab/run.hpp"

namespace {

struct CliArgs {
    std::string config;
    std::string out;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, CliArgs& args) {
    cmd->add_option("--config", args.config, "JSON experiment config file");
    cmd->add_option("--set", args.sets, "override a config key, e.g. --set train.iters=100")
        ->take_all();
    args.seed_opt = cmd->add_option("--seed", args.seed, "run seed (overrides config)");
    cmd->add_option("--out", args.out, "artifact directory (overrides config and CMLAB_OUT)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale laboratory for consistency-model training"};
    app.require_subcommand(1);

    const std::vector<std::string> names = {"train",         "sample",       "eval",
                                            "variance-report", "bellman-check", "schedule-dump",
                                            "eta-sweep",     "cfg-sweep"};
    const std::vector<std::string> descs = {
        "train a consistency model and save checkpoints",
        "draw samples from a trained checkpoint",
        "distribution metrics for a trained checkpoint",
        "Monte Carlo variance report for the target estimators",
        "Bellman residual and rollout-convergence report",
        "dump the t->r training schedule as CSV",
        "sample-quality sweep over the edge-skipping factor",
        "sample-quality sweep over the guidance strength"};

    std::vector<CliArgs> args(names.size());
    for (std::size_t i = 0; i < names.size(); ++i)
        add_common(app.add_subcommand(names[i], descs[i]), args[i]);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    std::string name;
    const CliArgs* a = nullptr;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (app.get_subcommand(names[i])->parsed()) {
            name = names[i];
            a = &args[i];
            break;
        }
    }

    try {
        cmlab::json j =
            a->config.empty() ? cmlab::json::object() : cmlab::load_json_file(a->config);
        for (const std::string& kv : a->sets) cmlab::apply_override(j, kv);
        cmlab::ExperimentConfig cfg = cmlab::ExperimentConfig::parse(j);
        const std::uint64_t seed = a->seed_opt->count() > 0 ? a->seed : cfg.seed;
        const std::string dir = cmlab::run_subcommand(name, cfg, seed, a->out);
        std::printf("%s: artifacts in %s\n", name.c_str(), dir.c_str());
        return 0;
    } catch (const cmlab::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const cmlab::CheckpointError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const cmlab::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
