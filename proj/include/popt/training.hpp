#pragma once

#include <filesystem>

#include "popt/losses.hpp"

namespace popt::train {

struct TrainConfig {
    double learning_rate = 2e-6;
    int epochs = 5;
    double warmup_ratio = 0.1;
    int batch_size = 64;
    double beta = 0.1;  // DPO only
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip = 0.0;  // 0 = off
    std::uint64_t seed = 0;

    void validate() const;
};

struct TraceStep {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double margin_mean = 0.0;  // DPO only
};

struct SftTrainResult {
    ModelParams model;
    std::vector<TraceStep> trace;
    bool diverged = false;
};

/// AdamW-style updates with linear warmup to the configured rate, then
/// constant. The dataset is reshuffled per epoch from the config seed; runs
/// are bit-reproducible given (seed, config, dataset order). A non-finite
/// loss aborts with the trace collected so far.
SftTrainResult train_sft(ModelParams model, const std::vector<TokenSequence>& dataset,
                         const TrainConfig& config);

struct DpoTrainResult {
    ModelParams policy;
    std::vector<TraceStep> trace;
    bool diverged = false;
    double positive_margin_fraction = 0.0;  // over all training pairs, after training
};

/// Trains the policy against a frozen reference (both start from the SFT
/// model). The reference is never written to.
DpoTrainResult train_dpo(ModelParams policy, const ModelParams& reference,
                         const std::vector<PreferenceExample>& pairs,
                         const TrainConfig& config);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
    ModelParams model;
    std::uint64_t seed = 0;
    TrainConfig config;  // the config the model was trained with
};

/// Versioned text container: layout, role, train config, seed, bit-exact
/// parameter hex and a content hash. save -> load preserves log_prob on any
/// probe batch exactly.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& model,
                     std::uint64_t seed, const TrainConfig& config = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace popt::train
