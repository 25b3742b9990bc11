#include "popt/losses.hpp"

#include <algorithm>
#include <cmath>

namespace popt::train {

LossOutput sft_loss(const ModelParams& model, const std::vector<TokenSequence>& batch,
                    bool with_grad) {
    require(!batch.empty(), ErrorKind::validation, "sft_loss: empty batch");

    LossOutput out;
    out.per_example_values.reserve(batch.size());
    if (with_grad) out.gradient = std::vector<double>(model.param_count(), 0.0);

    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double sum = 0.0;
    for (const TokenSequence& seq : batch) {
        const double n = static_cast<double>(seq.target_tokens.size());
        double value = -log_prob(model, seq) / n;
        require(std::isfinite(value), ErrorKind::validation, "sft_loss: non-finite value");
        out.per_example_values.push_back(value);
        sum += value;
        if (with_grad) {
            // d(-log_prob/N)/d theta, averaged over the batch
            accumulate_log_prob_grad(model, seq, -inv_batch / n, *out.gradient);
        }
    }
    out.value = sum * inv_batch;
    return out;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double dpo_margin_from_logratios(double logratio_chosen, double logratio_rejected, double beta) {
    require(beta > 0.0, ErrorKind::validation, "dpo: beta must be > 0");
    return beta * (logratio_chosen - logratio_rejected);
}

double dpo_loss_from_margin(double margin) {
    require(std::isfinite(margin), ErrorKind::validation, "dpo: non-finite margin");
    return softplus(-margin);
}

double implicit_reward_margin(const ModelParams& policy, const ModelParams& reference,
                              const PreferenceExample& pair, double beta) {
    double logratio_chosen = log_prob(policy, pair.chosen) - log_prob(reference, pair.chosen);
    double logratio_rejected =
        log_prob(policy, pair.rejected) - log_prob(reference, pair.rejected);
    return dpo_margin_from_logratios(logratio_chosen, logratio_rejected, beta);
}

LossOutput dpo_loss(const ModelParams& policy, const ModelParams& reference,
                    const std::vector<PreferenceExample>& batch, double beta, bool with_grad) {
    require(!batch.empty(), ErrorKind::validation, "dpo_loss: empty batch");
    require(policy.layout.param_count() == reference.layout.param_count(),
            ErrorKind::validation, "dpo_loss: policy/reference layout mismatch");

    LossOutput out;
    out.per_example_values.reserve(batch.size());
    if (with_grad) out.gradient = std::vector<double>(policy.param_count(), 0.0);

    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double sum = 0.0;
    for (const PreferenceExample& pair : batch) {
        double margin = implicit_reward_margin(policy, reference, pair, beta);
        double value = dpo_loss_from_margin(margin);
        out.per_example_values.push_back(value);
        sum += value;
        if (with_grad) {
            // d softplus(-m)/d m = -sigma(-m); reference terms are constants.
            double dm = -sigmoid(-margin) * beta * inv_batch;
            accumulate_log_prob_grad(policy, pair.chosen, dm, *out.gradient);
            accumulate_log_prob_grad(policy, pair.rejected, -dm, *out.gradient);
        }
    }
    out.value = sum * inv_batch;
    return out;
}

double grad_check(const LossFn& loss_fn, const ModelParams& model, double epsilon) {
    require(model.param_count() <= 10000, ErrorKind::validation,
            "grad_check: model too large (param_count > 10000)");
    require(epsilon >= 1e-6 && epsilon <= 1e-4, ErrorKind::validation,
            "grad_check: epsilon must be in [1e-6, 1e-4]");

    LossOutput center = loss_fn(model, true);
    require(center.gradient.has_value(), ErrorKind::validation,
            "grad_check: loss_fn returned no gradient");
    const std::vector<double>& analytic = *center.gradient;
    require(analytic.size() == model.param_count(), ErrorKind::validation,
            "grad_check: gradient size mismatch");

    ModelParams probe = model;
    double max_rel = 0.0;
    for (std::size_t i = 0; i < probe.values.size(); ++i) {
        const double original = probe.values[i];
        probe.values[i] = original + epsilon;
        double plus = loss_fn(probe, false).value;
        probe.values[i] = original - epsilon;
        double minus = loss_fn(probe, false).value;
        probe.values[i] = original;

        require(std::isfinite(plus) && std::isfinite(minus), ErrorKind::validation,
                "grad_check: non-finite perturbed loss");
        double fd = (plus - minus) / (2.0 * epsilon);
        double denom = std::max({std::abs(analytic[i]), std::abs(fd), 1e-8});
        max_rel = std::max(max_rel, std::abs(analytic[i] - fd) / denom);
    }
    return max_rel;
}

}  // namespace popt::train
