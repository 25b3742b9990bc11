#pragma once

#include <iosfwd>

#include "popt/losses.hpp"
#include "popt/training.hpp"

namespace popt::verify {

/// Deliberate implementation perturbations, used to prove the verification
/// suite catches representative bugs. `none` checks the real build.
enum class FaultKind { none, dpo_sign, bleu_smoothing };

FaultKind fault_from_string(std::string_view name);

struct VerifyOptions {
    FaultKind fault = FaultKind::none;
};

/// Runs the oracle suite: DPO closed forms against a long-double oracle,
/// finite-difference gradient checks for both losses, SFT sanity (uniform
/// loss and memorization), DPO learning on separable pairs with a frozen
/// reference, and the BLEU / self-BLEU oracles. Prints one line per check;
/// returns the number of failures.
int run_verify(const VerifyOptions& options, std::ostream& out);

// Deterministic desk-scale constructions, shared with the acceptance suite.

/// 100 memorizable sequences: distinct 3-token conditions, 8-token targets
/// generated by a fixed recurrence. vocab 32.
std::vector<train::TokenSequence> make_memorization_corpus(std::size_t count = 100);
train::ModelLayout memorization_layout();
train::TrainConfig memorization_train_config();

/// Separable preference pairs: chosen and rejected targets agree except for
/// the final token, which is the marker (vocab-1) on the chosen side.
std::vector<train::PreferenceExample> make_marker_pairs(std::size_t count = 500);
train::ModelLayout marker_layout();
train::TrainConfig marker_train_config();

}  // namespace popt::verify
