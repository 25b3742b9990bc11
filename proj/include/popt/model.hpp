#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "popt/common.hpp"

namespace popt::train {

// ---------------------------------------------------------------------------
// Sequences
// ---------------------------------------------------------------------------

/// A conditioning prefix plus a scored target, both as token ids in
/// [0, vocab_size). Loss terms cover target positions only.
struct TokenSequence {
    std::vector<int> condition_tokens;
    std::vector<int> target_tokens;
    int vocab_size = 0;

    void validate() const;
};

/// Byte-level demonstration tokenizer: each UTF-8 byte maps into the toy
/// vocabulary by modular reduction. Not invertible; used so the trainer can
/// consume pipeline text without a real tokenizer.
std::vector<int> encode_text(std::string_view text, int vocab_size, std::size_t max_tokens);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

enum class ModelRole { policy, reference };

/// Two-layer autoregressive categorical model: the last `context_window`
/// token embeddings (padded before the sequence start) are concatenated,
/// passed through one tanh layer, and projected to vocabulary logits.
struct ModelLayout {
    int vocab_size = 32;
    int embed_dim = 8;
    int context_window = 4;
    int hidden_dim = 16;

    void validate() const;

    // Parameter vector layout: embeddings (vocab+1 rows, the extra row is the
    // pad/start embedding), then W1 [hidden x window*embed], b1, W2
    // [vocab x hidden], b2.
    std::size_t embed_offset() const { return 0; }
    std::size_t w1_offset() const;
    std::size_t b1_offset() const;
    std::size_t w2_offset() const;
    std::size_t b2_offset() const;
    std::size_t param_count() const;

    int pad_row() const { return vocab_size; }
};

struct ModelParams {
    ModelLayout layout;
    ModelRole role = ModelRole::policy;
    std::vector<double> values;

    std::size_t param_count() const { return values.size(); }
    bool all_finite() const;

    /// Gaussian init, deterministic per seed.
    static ModelParams init(const ModelLayout& layout, ModelRole role, std::uint64_t seed,
                            double init_std = 0.08);
    static ModelParams zeros(const ModelLayout& layout, ModelRole role);

    ModelParams as_reference() const {
        ModelParams copy = *this;
        copy.role = ModelRole::reference;
        return copy;
    }
};

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// Sum over target positions of log P(target_i | condition, target_<i).
/// Always <= 0. Throws on out-of-vocab tokens or a non-finite result.
double log_prob(const ModelParams& model, const TokenSequence& seq);

/// Adds coeff * d(log prob)/d(theta) into grad (length param_count).
/// Reverse-mode, hand-derived; verified against finite differences by
/// grad_check.
void accumulate_log_prob_grad(const ModelParams& model, const TokenSequence& seq, double coeff,
                              std::vector<double>& grad);

}  // namespace popt::train
