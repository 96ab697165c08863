// SPDX-License-Identifier: Apache-2.0
//
// ts2: command-line front end for the unit-based speech translation
// pipeline. Every subcommand takes the same flags, loads one JSON config,
// and materializes one artifact directory under the output root. Exit
// codes: 0 success, 2 configuration or usage error, 3 missing parent
// artifact, 4 training divergence, 1 anything else.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ts2/common/error.hpp"
#include "ts2/pipeline/config.hpp"
#include "ts2/pipeline/pipeline.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    std::string out_root;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
    bool workers_set = false;
    std::vector<std::string> overrides;
};

int env_workers() {
    const char* raw = std::getenv("TS2_WORKERS");
    if (raw == nullptr) {
        return 1;
    }
    try {
        const int v = std::stoi(raw);
        if (v < 1) {
            throw ts2::ConfigError("TS2_WORKERS must be a positive integer");
        }
        return v;
    } catch (const std::invalid_argument&) {
        throw ts2::ConfigError("TS2_WORKERS must be a positive integer");
    } catch (const std::out_of_range&) {
        throw ts2::ConfigError("TS2_WORKERS must be a positive integer");
    }
}

std::filesystem::path resolve_out_root(const CliOptions& opt) {
    if (!opt.out_root.empty()) {
        return opt.out_root;
    }
    if (const char* raw = std::getenv("TS2_OUT_ROOT")) {
        return raw;
    }
    return "artifacts";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"textless speech-to-speech translation over discrete units"};
    app.require_subcommand(1);

    const std::map<std::string,
                   std::function<std::filesystem::path(const ts2::pipeline::RunContext&)>>
        stages{{"gen-world", ts2::pipeline::run_gen_world},
               {"fit-codebook", ts2::pipeline::run_fit_codebook},
               {"quantize", ts2::pipeline::run_quantize},
               {"train-normalizer", ts2::pipeline::run_train_normalizer},
               {"normalize", ts2::pipeline::run_normalize},
               {"train-s2ut", ts2::pipeline::run_train_s2ut},
               {"translate", ts2::pipeline::run_translate},
               {"evaluate", ts2::pipeline::run_evaluate},
               {"sweep-threshold", ts2::pipeline::run_sweep_threshold},
               {"reproduce-table2", ts2::pipeline::run_reproduce_table2},
               {"reproduce-table6", ts2::pipeline::run_reproduce_table6}};
    const std::map<std::string, std::string> descriptions{
        {"gen-world", "build the synthetic world and render every corpus split"},
        {"fit-codebook", "fit per-language k-means codebooks on feature frames"},
        {"quantize", "discretize every utterance and write reference unit targets"},
        {"train-normalizer", "pretrain and finetune the speech normalizer"},
        {"normalize", "decode normalized units for every target-language utterance"},
        {"train-s2ut", "train the speech-to-unit translation model"},
        {"translate", "beam-decode the evaluation corpus"},
        {"evaluate", "score decoded units with word-level BLEU and unit error rate"},
        {"sweep-threshold", "retrain across mined-score thresholds and record BLEU"},
        {"reproduce-table2", "compare translation targets and speaker fusion end to end"},
        {"reproduce-table6", "measure cross-speaker unit agreement before/after normalization"}};

    CliOptions opt;
    for (const auto& [name, fn] : stages) {
        CLI::App* sub = app.add_subcommand(name, descriptions.at(name));
        sub->add_option("--config", opt.config_path, "experiment config JSON")->required();
        sub->add_option("--out", opt.out_root, "artifact output root (default $TS2_OUT_ROOT or ./artifacts)");
        sub->add_option("--seed", opt.seed, "replace the top-level config seed")
            ->each([&](const std::string&) { opt.seed_set = true; });
        sub->add_option("--workers", opt.workers, "worker threads (default $TS2_WORKERS or 1)")
            ->each([&](const std::string&) { opt.workers_set = true; });
        sub->add_option("--override", opt.overrides,
                        "config override as block.field=value (repeatable)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    try {
        ts2::pipeline::RunContext ctx;
        const std::uint64_t* seed_ptr = opt.seed_set ? &opt.seed : nullptr;
        ctx.cfg = ts2::pipeline::load_config(opt.config_path, opt.overrides, seed_ptr);
        ctx.out_root = resolve_out_root(opt);
        if (opt.workers_set) {
            if (opt.workers < 1) {
                throw ts2::ConfigError("--workers must be a positive integer");
            }
            ctx.workers = opt.workers;
        } else {
            ctx.workers = env_workers();
        }

        const std::string name = app.get_subcommands().at(0)->get_name();
        const std::filesystem::path dir = stages.at(name)(ctx);
        std::cout << dir.string() << "\n";
        return 0;
    } catch (const ts2::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ts2::MissingArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return 3;
    } catch (const ts2::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
