#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "popt/model.hpp"

namespace popt::train {

struct LossOutput {
    double value = 0.0;                          // mean of per_example_values
    std::vector<double> per_example_values;
    std::optional<std::vector<double>> gradient;  // d value / d params, when requested
};

// ---------------------------------------------------------------------------
// Supervised fine-tuning loss
//
// Per example: the mean token negative log-likelihood over the target,
//   -(1/N) * sum_i log P(s_i | x, s_<i),  N = |target|,
// then averaged over the batch. Condition tokens contribute no loss terms.
// ---------------------------------------------------------------------------

LossOutput sft_loss(const ModelParams& model, const std::vector<TokenSequence>& batch,
                    bool with_grad = false);

// ---------------------------------------------------------------------------
// DPO loss
//
// Per pair: -log sigma(beta * [logratio(p_w) - logratio(p_l)]) where
// logratio(p) = log pi_policy(p|x) - log pi_reference(p|x). Computed as
// softplus(-margin) so large |margin| neither overflows nor cancels. The
// reference model is frozen: gradients cover policy parameters only.
// ---------------------------------------------------------------------------

struct PreferenceExample {
    TokenSequence chosen;    // (x, p_w)
    TokenSequence rejected;  // (x, p_l)
};

double sigmoid(double x);

/// softplus(x) = log(1 + e^x), evaluated stably for |x| up to ~1e4.
double softplus(double x);

double dpo_margin_from_logratios(double logratio_chosen, double logratio_rejected, double beta);

/// -log sigma(margin), as softplus(-margin).
double dpo_loss_from_margin(double margin);

/// beta * [logratio(chosen) - logratio(rejected)]; dpo loss of the pair is
/// exactly softplus(-margin).
double implicit_reward_margin(const ModelParams& policy, const ModelParams& reference,
                              const PreferenceExample& pair, double beta);

LossOutput dpo_loss(const ModelParams& policy, const ModelParams& reference,
                    const std::vector<PreferenceExample>& batch, double beta,
                    bool with_grad = false);

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

using LossFn = std::function<LossOutput(const ModelParams& model, bool with_grad)>;

/// Central finite differences per parameter against the analytic gradient;
/// returns the max relative error with denominators floored at 1e-8.
/// Desk-scale only: param_count <= 10000, epsilon in [1e-6, 1e-4].
double grad_check(const LossFn& loss_fn, const ModelParams& model, double epsilon);

}  // namespace popt::train
