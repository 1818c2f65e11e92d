// ergolab CLI: config-driven experiment runner.
//   ergolab run <config>       execute an experiment, write result + CSVs
//   ergolab validate <config>  parse + validate only
//   ergolab fixtures           list the named states/measurements/builders

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "ergolab/experiment.hpp"

namespace {

struct CliOverrides {
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    bool threads_set = false;
    std::string output_dir;
};

ergolab::RunOptions to_run_options(const CliOverrides& o) {
    ergolab::RunOptions opts;
    if (o.seed_set) opts.seed = o.seed;
    if (o.threads_set) {
        opts.threads = o.threads;
    } else if (const char* env = std::getenv("ERGOLAB_THREADS")) {
        try {
            opts.threads = std::stoi(env);
        } catch (const std::exception&) {
            throw ergolab::ParseError("ERGOLAB_THREADS is not an integer");
        }
    }
    if (!o.output_dir.empty()) opts.output_dir = o.output_dir;
    return opts;
}

int run_config(const std::string& path, const CliOverrides& overrides, bool execute) {
    try {
        auto cfg = ergolab::Experiment::parse_file(path);
        ergolab::Experiment::apply_overrides(cfg, to_run_options(overrides));
        const auto experiment = ergolab::Experiment::build(cfg);
        if (!execute) {
            std::cout << "ok: config is valid\n";
            return 0;
        }
        const auto result = experiment.run();
        std::cout << result["summary"].dump(2) << "\n";
        return 0;
    } catch (const ergolab::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const ergolab::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 4;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ergolab - ergotropy estimation experiments"};
    app.require_subcommand(1);

    CliOverrides overrides;
    std::string config_path;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("config", config_path, "experiment config (JSON)")->required();
        cmd->add_option("--seed", overrides.seed, "override the config seed")
            ->each([&](const std::string&) { overrides.seed_set = true; });
        cmd->add_option("--threads", overrides.threads, "worker threads (or ERGOLAB_THREADS)")
            ->each([&](const std::string&) { overrides.threads_set = true; });
        cmd->add_option("--output-dir", overrides.output_dir, "override the output directory");
    };

    auto* run_cmd = app.add_subcommand("run", "execute an experiment config");
    add_common(run_cmd);
    auto* validate_cmd = app.add_subcommand("validate", "parse and validate a config");
    add_common(validate_cmd);
    auto* fixtures_cmd = app.add_subcommand("fixtures", "list named fixtures");

    CLI11_PARSE(app, argc, argv);

    if (fixtures_cmd->parsed()) {
        std::cout << ergolab::fixture_catalog_text();
        return 0;
    }
    return run_config(config_path, overrides, run_cmd->parsed());
}
