#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "perchom/cluster.hpp"
#include "perchom/config.hpp"
#include "perchom/io.hpp"
#include "perchom/runner.hpp"

using namespace perchom;

int main(int argc, char** argv) {
    CLI::App app{"percolation homogenization experiments"};
    app.require_subcommand(1);

    // gen-env
    auto* gen = app.add_subcommand("gen-env", "generate an environment file");
    std::string gen_out = "env.percenv";
    int gen_d = 2;
    double gen_p = 0.7, gen_lambda = 1.0;
    std::string gen_law = "bernoulli-unit";
    std::int64_t gen_side = 64;
    std::uint64_t gen_seed = 1;
    bool gen_force = false;
    gen->add_option("output", gen_out, "output path");
    gen->add_option("--d", gen_d, "dimension (2 or 3)");
    gen->add_option("--p", gen_p, "open-bond probability");
    gen->add_option("--lambda", gen_lambda, "ellipticity lower bound");
    gen->add_option("--law", gen_law, "bernoulli-unit or uniform-on-[lambda,1]");
    gen->add_option("--side", gen_side, "box side (vertices per axis)");
    gen->add_option("--seed", gen_seed, "seed");
    gen->add_flag("--force", gen_force, "skip the subcritical guard");

    // run
    auto* runc = app.add_subcommand("run", "run an experiment config");
    std::string run_cfg;
    runc->add_option("config", run_cfg, "config file")->required();

    // preset
    auto* pre = app.add_subcommand("preset", "run a built-in preset");
    std::string pre_name, pre_out = "out";
    pre->add_option("name", pre_name, "figure1, figure2 or smoke")->required();
    pre->add_option("out_dir", pre_out, "output directory");

    // validate
    auto* val = app.add_subcommand("validate", "parse a config and echo it");
    std::string val_cfg;
    val->add_option("config", val_cfg, "config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            subcritical_guard(gen_d, gen_p, gen_force);
            Environment env = generate_environment(
                LatticeBox::square(gen_d, gen_side), gen_p, gen_lambda,
                law_from_tag(gen_law), gen_seed);
            save_environment(env, gen_out);
            std::printf("wrote %s (%lld bonds)\n", gen_out.c_str(),
                        static_cast<long long>(env.box.bond_count_total()));
        } else if (runc->parsed()) {
            ExperimentConfig cfg = load_config(run_cfg);
            RunManifest man = run(cfg);
            std::printf("experiment %s: %zu artifacts in %s\n",
                        cfg.experiment.c_str(), man.artifacts.size(),
                        cfg.out_dir.c_str());
        } else if (pre->parsed()) {
            RunManifest man = run_preset(pre_name, pre_out);
            std::printf("preset %s: %zu artifacts in %s\n", pre_name.c_str(),
                        man.artifacts.size(), pre_out.c_str());
        } else if (val->parsed()) {
            ExperimentConfig cfg = load_config(val_cfg);
            std::fputs(dump_config(cfg).c_str(), stdout);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
