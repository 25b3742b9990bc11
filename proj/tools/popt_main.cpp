// popt: principle-based prompt-optimizer data pipeline and trainer.
//
// Subcommands cover the full flow: curate a query corpus, build the SFT
// dataset, build DPO preference pairs, train both stages on the toy model,
// evaluate alignment, and run the verification oracle suite.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "popt/pipeline.hpp"
#include "popt/verify.hpp"

namespace {

struct CommonArgs {
    std::string config_path = "configs/default.json";
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string backend;
    unsigned max_concurrency = 0;
    bool verbose = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Path to the pipeline config file");
    cmd->add_option("--seed", args.seed, "Override the config seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
    cmd->add_option("--backend", args.backend, "Backend override: mock or http")
        ->check(CLI::IsMember({"mock", "http"}));
    cmd->add_option("--max-concurrency", args.max_concurrency,
                    "Max concurrent backend calls per stage");
    cmd->add_flag("--verbose", args.verbose, "Log backend traffic (credentials redacted)");
}

popt::pipeline::AppConfig load(const CommonArgs& args) {
    popt::pipeline::AppConfig config = popt::pipeline::load_config(args.config_path);
    if (args.seed_set) {
        config.seed = args.seed;
        config.sampler.seed = config.seed;
        config.trainer.sft.seed = popt::derive_seed(config.seed, "train.sft");
        config.trainer.dpo.seed = popt::derive_seed(config.seed, "train.dpo");
    }
    if (!args.backend.empty()) config.backend = args.backend;
    if (args.max_concurrency > 0) config.max_concurrency = args.max_concurrency;
    if (args.verbose) config.verbose = true;
    return config;
}

void print_manifest_summary(const popt::pipeline::RunManifest& manifest) {
    std::cout << manifest.command << ": run " << manifest.run_id << "\n";
    for (const auto& stage : manifest.stages) {
        std::cout << "  " << stage.name << ": " << stage.input_count << " -> "
                  << stage.output_count << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"principle-based prompt-optimizer pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string input, out_dir = "runs", sft_checkpoint, query_text, fault_name;
    int max_iters = 0;

    auto* curate = app.add_subcommand("curate", "Filter, diversify, relabel, and split queries");
    add_common(curate, args);
    curate->add_option("--input", input, "Raw query jsonl")->required();
    curate->add_option("--out-dir", out_dir, "Output directory");

    auto* build_sft = app.add_subcommand("build-sft", "Build the SFT dataset");
    add_common(build_sft, args);
    build_sft->add_option("--input", input, "Curated sft_pool jsonl")->required();
    build_sft->add_option("--out-dir", out_dir, "Output directory");

    auto* build_pref = app.add_subcommand("build-pref", "Build DPO preference pairs");
    add_common(build_pref, args);
    build_pref->add_option("--input", input, "Curated dpo_pool jsonl")->required();
    build_pref->add_option("--out-dir", out_dir, "Output directory");

    auto* train_sft = app.add_subcommand("train-sft", "Train the toy model on the SFT dataset");
    add_common(train_sft, args);
    train_sft->add_option("--input", input, "sft_dataset jsonl")->required();
    train_sft->add_option("--out-dir", out_dir, "Output directory");

    auto* train_dpo = app.add_subcommand("train-dpo", "DPO-train against a frozen reference");
    add_common(train_dpo, args);
    train_dpo->add_option("--input", input, "dpo_pairs jsonl")->required();
    train_dpo->add_option("--sft-checkpoint", sft_checkpoint, "SFT checkpoint path")->required();
    train_dpo->add_option("--out-dir", out_dir, "Output directory");

    auto* optimize = app.add_subcommand("optimize", "Optimize one query and print the prompt");
    add_common(optimize, args);
    optimize->add_option("--query", query_text, "Query text")->required();

    auto* iterate = app.add_subcommand("iterate", "Iteratively optimize one query");
    add_common(iterate, args);
    iterate->add_option("--query", query_text, "Query text")->required();
    iterate->add_option("--max-iters", max_iters, "Max judge rounds (default from config)");

    auto* evaluate =
        app.add_subcommand("evaluate-alignment", "Classify (query, prompt) pairs");
    add_common(evaluate, args);
    evaluate->add_option("--input", input, "jsonl of {id, query, prompt}")->required();
    evaluate->add_option("--out-dir", out_dir, "Output directory");

    auto* verify = app.add_subcommand("verify", "Run the oracle verification suite");
    add_common(verify, args);
    verify
        ->add_option("--inject-fault", fault_name,
                     "Testing seam: perturb an implementation path (dpo-sign, bleu-smoothing)")
        ->check(CLI::IsMember({"none", "dpo-sign", "bleu-smoothing"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // argument problems are validation errors
    }

    try {
        if (verify->parsed()) {
            popt::verify::VerifyOptions options;
            options.fault = popt::verify::fault_from_string(fault_name);
            int failures = popt::verify::run_verify(options, std::cout);
            return failures == 0 ? 0 : 3;
        }

        popt::pipeline::AppConfig config = load(args);

        if (curate->parsed()) {
            auto backend = popt::pipeline::make_backend(config);
            print_manifest_summary(popt::pipeline::run_curate(config, input, out_dir, *backend));
        } else if (build_sft->parsed()) {
            auto backend = popt::pipeline::make_backend(config);
            print_manifest_summary(
                popt::pipeline::run_build_sft(config, input, out_dir, *backend));
        } else if (build_pref->parsed()) {
            auto backend = popt::pipeline::make_backend(config);
            print_manifest_summary(
                popt::pipeline::run_build_pref(config, input, out_dir, *backend));
        } else if (train_sft->parsed()) {
            print_manifest_summary(popt::pipeline::run_train_sft(config, input, out_dir));
        } else if (train_dpo->parsed()) {
            print_manifest_summary(
                popt::pipeline::run_train_dpo(config, input, sft_checkpoint, out_dir));
        } else if (optimize->parsed()) {
            auto backend = popt::pipeline::make_backend(config);
            std::cout << popt::pipeline::optimize_query(config, query_text, *backend) << "\n";
        } else if (iterate->parsed()) {
            auto backend = popt::pipeline::make_backend(config);
            int iters = max_iters > 0 ? max_iters : config.max_iters;
            popt::eval::Trajectory trajectory =
                popt::pipeline::iterate_query(config, query_text, *backend, iters);
            for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
                const auto& step = trajectory.steps[i];
                std::cout << "step " << i << (step.critique.flawed ? " [flawed]" : " [clean]")
                          << ": " << step.prompt << "\n";
            }
            std::cout << "final: " << trajectory.final_prompt() << "\n";
        } else if (evaluate->parsed()) {
            auto backend = popt::pipeline::make_backend(config);
            print_manifest_summary(
                popt::pipeline::run_evaluate_alignment(config, input, out_dir, *backend));
        }
        return 0;
    } catch (const popt::PipelineError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
