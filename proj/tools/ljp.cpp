// Causal legal-judgment-prediction pipeline CLI.
//
// Stage subcommands read and write versioned artifacts under --run-dir;
// `run-all` chains every stage. Exit codes: 0 ok, 1 usage, 2 pipeline error.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ljpcausal/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string run_dir = "runs/default";
    long long seed_override = -1;
};

ljp::PipelineConfig load_config(const CommonArgs& args) {
    ljp::PipelineConfig cfg = ljp::PipelineConfig::load(args.config_path);
    if (args.seed_override >= 0) {
        cfg.seed = static_cast<std::uint32_t>(args.seed_override);
    }
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "pipeline config file (JSON)")
        ->required();
    cmd->add_option("-r,--run-dir", args.run_dir, "artifact directory for this run");
    cmd->add_option("--seed", args.seed_override, "override the config seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"causal-prior legal judgment prediction pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    std::vector<std::pair<ljp::Stage, CLI::App*>> stage_cmds;
    for (ljp::Stage s :
         {ljp::Stage::extract, ljp::Stage::refine, ljp::Stage::discover, ljp::Stage::resolve,
          ljp::Stage::sample, ljp::Stage::strength, ljp::Stage::train, ljp::Stage::predict,
          ljp::Stage::refute, ljp::Stage::report}) {
        CLI::App* cmd = app.add_subcommand(ljp::stage_name(s),
                                           std::string("run the ") + ljp::stage_name(s) +
                                               " stage");
        add_common(cmd, args);
        stage_cmds.push_back({s, cmd});
    }

    CLI::App* run_all_cmd = app.add_subcommand("run-all", "run every stage in order");
    add_common(run_all_cmd, args);

    CLI::App* gen_mini_cmd =
        app.add_subcommand("gen-mini", "write the bundled synthetic mini-corpus");
    std::string mini_dir = "data/mini";
    int mini_records = 200;
    long long mini_seed = 2024;
    gen_mini_cmd->add_option("-o,--out", mini_dir, "output directory");
    gen_mini_cmd->add_option("-n,--records", mini_records, "number of records");
    gen_mini_cmd->add_option("--seed", mini_seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen_mini_cmd->parsed()) {
            ljp::write_mini_corpus_files(mini_dir, mini_records,
                                         static_cast<std::uint32_t>(mini_seed));
            std::cout << "mini corpus written to " << mini_dir << "\n";
            return 0;
        }
        if (run_all_cmd->parsed()) {
            ljp::run_all(load_config(args), args.run_dir);
            std::cout << "run-all complete; artifacts in " << args.run_dir << "\n";
            return 0;
        }
        for (const auto& [stage, cmd] : stage_cmds) {
            if (cmd->parsed()) {
                ljp::run_stage(stage, load_config(args), args.run_dir);
                std::cout << ljp::stage_name(stage) << " complete; artifacts in "
                          << args.run_dir << "\n";
                return 0;
            }
        }
        std::cerr << "no subcommand selected\n";
        return 1;
    } catch (const ljp::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "pipeline error: " << e.what() << "\n";
        return 2;
    }
}
