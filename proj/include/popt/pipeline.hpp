#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "popt/corpus.hpp"
#include "popt/evalharness.hpp"
#include "popt/gateway.hpp"
#include "popt/http_backend.hpp"
#include "popt/pref_builder.hpp"
#include "popt/sft_builder.hpp"
#include "popt/training.hpp"

namespace popt::pipeline {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TrainerSection {
    train::ModelLayout layout;
    std::size_t max_condition_tokens = 32;
    std::size_t max_target_tokens = 64;
    train::TrainConfig sft;
    train::TrainConfig dpo;
};

struct AppConfig {
    std::uint64_t seed = 42;
    std::string backend = "mock";  // mock | http
    unsigned max_concurrency = 1;
    bool verbose = false;

    int gateway_max_retries = 3;
    gateway::HttpBackendConfig http;

    corpus::FilterRules rules;
    std::filesystem::path blocklist_path;
    double self_bleu_threshold = 0.4;
    int bleu_max_n = 4;
    double sft_fraction = 0.5;

    pref::SamplerConfig sampler;
    double gap_threshold = 0.5;
    bool all_pairs = false;
    std::size_t max_pairs_per_query = 0;  // 0 = uncapped

    TrainerSection trainer;

    std::filesystem::path refusal_patterns_path;
    double tie_epsilon = 1e-9;
    int max_iters = 4;

    std::uint64_t config_hash = 0;  // canonical-form hash of the loaded file
};

AppConfig load_config(const std::filesystem::path& path);

std::unique_ptr<gateway::ChatBackend> make_backend(const AppConfig& config);

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

struct StageCount {
    std::string name;
    std::size_t input_count = 0;
    std::size_t output_count = 0;
    nlohmann::json detail;
};

struct RunManifest {
    std::string run_id;
    std::string command;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string backend_id;
    std::string started_at;
    std::string finished_at;
    std::vector<StageCount> stages;

    nlohmann::json to_json() const;
    void write(const std::filesystem::path& path) const;
};

RunManifest begin_manifest(const std::string& command, const AppConfig& config,
                           const std::string& backend_id);

// ---------------------------------------------------------------------------
// Stages. Each writes its declared outputs plus `<command>.manifest.json`
// into out_dir; data files are byte-deterministic given (config, seed,
// inputs, mock backend).
// ---------------------------------------------------------------------------

RunManifest run_curate(const AppConfig& config, const std::filesystem::path& input,
                       const std::filesystem::path& out_dir, gateway::ChatBackend& backend);

RunManifest run_build_sft(const AppConfig& config, const std::filesystem::path& input,
                          const std::filesystem::path& out_dir, gateway::ChatBackend& backend);

RunManifest run_build_pref(const AppConfig& config, const std::filesystem::path& input,
                           const std::filesystem::path& out_dir, gateway::ChatBackend& backend);

RunManifest run_train_sft(const AppConfig& config, const std::filesystem::path& input,
                          const std::filesystem::path& out_dir);

RunManifest run_train_dpo(const AppConfig& config, const std::filesystem::path& input,
                          const std::filesystem::path& sft_checkpoint,
                          const std::filesystem::path& out_dir);

RunManifest run_evaluate_alignment(const AppConfig& config, const std::filesystem::path& input,
                                   const std::filesystem::path& out_dir,
                                   gateway::ChatBackend& backend);

/// Single query through judge-gated refinement: few-shot prompt, critique,
/// one refinement when flawed. Returns the final prompt.
std::string optimize_query(const AppConfig& config, const std::string& query_text,
                           gateway::ChatBackend& backend);

/// Multi-round variant; returns the full trajectory.
eval::Trajectory iterate_query(const AppConfig& config, const std::string& query_text,
                               gateway::ChatBackend& backend, int max_iters);

/// Tokenizes an SFT example / preference pair for the toy trainer.
train::TokenSequence to_sequence(const AppConfig& config, const std::string& condition,
                                 const std::string& target);

}  // namespace popt::pipeline
