#include "popt/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

namespace popt::train {

void TrainConfig::validate() const {
    require(learning_rate >= 0.0, ErrorKind::validation,
            "TrainConfig: learning_rate must be >= 0");
    require(epochs >= 1, ErrorKind::validation, "TrainConfig: epochs must be >= 1");
    require(warmup_ratio >= 0.0 && warmup_ratio <= 1.0, ErrorKind::validation,
            "TrainConfig: warmup_ratio must be in [0,1]");
    require(batch_size >= 1, ErrorKind::validation, "TrainConfig: batch_size must be >= 1");
    require(beta > 0.0, ErrorKind::validation, "TrainConfig: beta must be > 0");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
            ErrorKind::validation, "TrainConfig: adam betas must be in [0,1)");
}

namespace {

class AdamW {
public:
    AdamW(std::size_t param_count, const TrainConfig& config)
        : config_(config), m_(param_count, 0.0), v_(param_count, 0.0) {}

    void step(ModelParams& model, std::vector<double>& grad, double lr) {
        require(model.role != ModelRole::reference, ErrorKind::validation,
                "AdamW: refusing to update a reference model");
        ++t_;

        if (config_.grad_clip > 0.0) {
            double norm_sq = 0.0;
            for (double g : grad) norm_sq += g * g;
            double norm = std::sqrt(norm_sq);
            if (norm > config_.grad_clip) {
                double scale = config_.grad_clip / norm;
                for (double& g : grad) g *= scale;
            }
        }

        const double bc1 = 1.0 - std::pow(config_.adam_beta1, t_);
        const double bc2 = 1.0 - std::pow(config_.adam_beta2, t_);
        for (std::size_t i = 0; i < grad.size(); ++i) {
            m_[i] = config_.adam_beta1 * m_[i] + (1.0 - config_.adam_beta1) * grad[i];
            v_[i] = config_.adam_beta2 * v_[i] + (1.0 - config_.adam_beta2) * grad[i] * grad[i];
            const double m_hat = m_[i] / bc1;
            const double v_hat = v_[i] / bc2;
            model.values[i] -= lr * (m_hat / (std::sqrt(v_hat) + config_.adam_eps) +
                                     config_.weight_decay * model.values[i]);
        }
    }

private:
    TrainConfig config_;
    double t_ = 0.0;
    std::vector<double> m_;
    std::vector<double> v_;
};

// Linear ramp from 0 over the warmup span, then constant.
double lr_at(const TrainConfig& config, int step_index, int total_steps) {
    int warmup = static_cast<int>(
        std::ceil(config.warmup_ratio * static_cast<double>(total_steps)));
    if (warmup <= 0) return config.learning_rate;
    double frac = static_cast<double>(step_index + 1) / static_cast<double>(warmup);
    return config.learning_rate * std::min(1.0, frac);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, "train.epoch", static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

}  // namespace

SftTrainResult train_sft(ModelParams model, const std::vector<TokenSequence>& dataset,
                         const TrainConfig& config) {
    config.validate();
    require(!dataset.empty(), ErrorKind::validation, "train_sft: empty dataset");
    for (const auto& seq : dataset) {
        seq.validate();
        require(seq.vocab_size == model.layout.vocab_size, ErrorKind::validation,
                "train_sft: sequence vocab does not match the model");
    }

    SftTrainResult result{std::move(model), {}, false};
    const std::size_t n = dataset.size();
    const int steps_per_epoch =
        static_cast<int>((n + static_cast<std::size_t>(config.batch_size) - 1) /
                         static_cast<std::size_t>(config.batch_size));
    const int total_steps = steps_per_epoch * config.epochs;

    AdamW optimizer(result.model.param_count(), config);
    int step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto order = epoch_order(n, config.seed, epoch);
        for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(config.batch_size)) {
            std::size_t end = std::min(n, begin + static_cast<std::size_t>(config.batch_size));
            std::vector<TokenSequence> batch;
            batch.reserve(end - begin);
            for (std::size_t k = begin; k < end; ++k) batch.push_back(dataset[order[k]]);

            double lr = lr_at(config, step, total_steps);
            LossOutput loss;
            try {
                loss = sft_loss(result.model, batch, true);
            } catch (const PipelineError&) {
                // Inputs were validated up front, so a loss error here means
                // the parameters or logits blew up on a previous step.
                result.trace.push_back({step, std::nan(""), lr, 0.0});
                result.diverged = true;
                return result;
            }
            result.trace.push_back({step, loss.value, lr, 0.0});
            if (!std::isfinite(loss.value)) {
                result.diverged = true;
                return result;
            }
            optimizer.step(result.model, *loss.gradient, lr);
            ++step;
        }
    }
    if (!result.model.all_finite()) result.diverged = true;
    return result;
}

DpoTrainResult train_dpo(ModelParams policy, const ModelParams& reference,
                         const std::vector<PreferenceExample>& pairs,
                         const TrainConfig& config) {
    config.validate();
    require(!pairs.empty(), ErrorKind::validation, "train_dpo: no pairs");
    require(reference.role == ModelRole::reference, ErrorKind::validation,
            "train_dpo: reference model must carry the reference role");
    require(policy.layout.param_count() == reference.layout.param_count(),
            ErrorKind::validation, "train_dpo: policy/reference layout mismatch");
    for (const auto& pair : pairs) {
        pair.chosen.validate();
        pair.rejected.validate();
        require(pair.chosen.vocab_size == reference.layout.vocab_size &&
                    pair.rejected.vocab_size == reference.layout.vocab_size,
                ErrorKind::validation, "train_dpo: pair vocab does not match the model");
    }

    DpoTrainResult result{std::move(policy), {}, false, 0.0};
    const std::size_t n = pairs.size();
    const int steps_per_epoch =
        static_cast<int>((n + static_cast<std::size_t>(config.batch_size) - 1) /
                         static_cast<std::size_t>(config.batch_size));
    const int total_steps = steps_per_epoch * config.epochs;

    AdamW optimizer(result.policy.param_count(), config);
    int step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto order = epoch_order(n, config.seed, epoch);
        for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(config.batch_size)) {
            std::size_t end = std::min(n, begin + static_cast<std::size_t>(config.batch_size));
            std::vector<PreferenceExample> batch;
            batch.reserve(end - begin);
            for (std::size_t k = begin; k < end; ++k) batch.push_back(pairs[order[k]]);

            double lr = lr_at(config, step, total_steps);
            LossOutput loss;
            double margin_sum = 0.0;
            try {
                loss = dpo_loss(result.policy, reference, batch, config.beta, true);
                for (const auto& pair : batch) {
                    margin_sum +=
                        implicit_reward_margin(result.policy, reference, pair, config.beta);
                }
            } catch (const PipelineError&) {
                result.trace.push_back({step, std::nan(""), lr, 0.0});
                result.diverged = true;
                return result;
            }
            result.trace.push_back(
                {step, loss.value, lr, margin_sum / static_cast<double>(batch.size())});
            if (!std::isfinite(loss.value)) {
                result.diverged = true;
                return result;
            }
            optimizer.step(result.policy, *loss.gradient, lr);
            ++step;
        }
    }

    if (!result.policy.all_finite()) {
        result.diverged = true;
        return result;
    }
    std::size_t positive = 0;
    for (const auto& pair : pairs) {
        if (implicit_reward_margin(result.policy, reference, pair, config.beta) > 0.0) {
            ++positive;
        }
    }
    result.positive_margin_fraction = static_cast<double>(positive) / static_cast<double>(n);
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr int kCheckpointVersion = 1;

std::string params_to_hex(const std::vector<double>& values) {
    std::string hex;
    hex.reserve(values.size() * 16);
    for (double v : values) hex += to_hex(std::bit_cast<std::uint64_t>(v));
    return hex;
}

std::vector<double> params_from_hex(const std::string& hex) {
    require(hex.size() % 16 == 0, ErrorKind::validation, "checkpoint: bad params length");
    std::vector<double> values(hex.size() / 16);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits = 0;
        for (std::size_t k = 0; k < 16; ++k) {
            char c = hex[i * 16 + k];
            int digit;
            if (c >= '0' && c <= '9') {
                digit = c - '0';
            } else if (c >= 'a' && c <= 'f') {
                digit = c - 'a' + 10;
            } else {
                fail(ErrorKind::validation, "checkpoint: invalid hex digit");
            }
            bits = (bits << 4) | static_cast<std::uint64_t>(digit);
        }
        values[i] = std::bit_cast<double>(bits);
    }
    return values;
}

std::uint64_t checkpoint_hash(const ModelLayout& layout, const std::string& params_hex) {
    std::string meta = std::to_string(layout.vocab_size) + "," +
                       std::to_string(layout.embed_dim) + "," +
                       std::to_string(layout.context_window) + "," +
                       std::to_string(layout.hidden_dim);
    return fnv1a64(params_hex, fnv1a64(meta));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& model,
                     std::uint64_t seed, const TrainConfig& config) {
    std::string hex = params_to_hex(model.values);
    nlohmann::json j;
    j["format_version"] = kCheckpointVersion;
    j["layout"] = {{"vocab_size", model.layout.vocab_size},
                   {"embed_dim", model.layout.embed_dim},
                   {"context_window", model.layout.context_window},
                   {"hidden_dim", model.layout.hidden_dim}};
    j["role"] = model.role == ModelRole::policy ? "policy" : "reference";
    j["seed"] = seed;
    j["config"] = {{"learning_rate", config.learning_rate},
                   {"epochs", config.epochs},
                   {"warmup_ratio", config.warmup_ratio},
                   {"batch_size", config.batch_size},
                   {"beta", config.beta},
                   {"adam_beta1", config.adam_beta1},
                   {"adam_beta2", config.adam_beta2},
                   {"weight_decay", config.weight_decay},
                   {"grad_clip", config.grad_clip},
                   {"seed", config.seed}};
    j["param_count"] = model.param_count();
    j["params_hex"] = hex;
    j["content_hash"] = to_hex(checkpoint_hash(model.layout, hex));
    atomic_write_file(path, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
    require(!j.is_discarded(), ErrorKind::validation,
            "checkpoint: invalid json: " + path.string());
    require(j.value("format_version", -1) == kCheckpointVersion, ErrorKind::validation,
            "checkpoint: unsupported format_version");

    Checkpoint ckpt;
    const auto& layout = j.at("layout");
    ckpt.model.layout.vocab_size = layout.at("vocab_size").get<int>();
    ckpt.model.layout.embed_dim = layout.at("embed_dim").get<int>();
    ckpt.model.layout.context_window = layout.at("context_window").get<int>();
    ckpt.model.layout.hidden_dim = layout.at("hidden_dim").get<int>();
    ckpt.model.layout.validate();
    ckpt.model.role =
        j.value("role", "policy") == std::string("reference") ? ModelRole::reference
                                                              : ModelRole::policy;
    ckpt.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("config")) {
        const auto& c = j.at("config");
        ckpt.config.learning_rate = c.value("learning_rate", ckpt.config.learning_rate);
        ckpt.config.epochs = c.value("epochs", ckpt.config.epochs);
        ckpt.config.warmup_ratio = c.value("warmup_ratio", ckpt.config.warmup_ratio);
        ckpt.config.batch_size = c.value("batch_size", ckpt.config.batch_size);
        ckpt.config.beta = c.value("beta", ckpt.config.beta);
        ckpt.config.adam_beta1 = c.value("adam_beta1", ckpt.config.adam_beta1);
        ckpt.config.adam_beta2 = c.value("adam_beta2", ckpt.config.adam_beta2);
        ckpt.config.weight_decay = c.value("weight_decay", ckpt.config.weight_decay);
        ckpt.config.grad_clip = c.value("grad_clip", ckpt.config.grad_clip);
        ckpt.config.seed = c.value("seed", ckpt.config.seed);
    }

    std::string hex = j.at("params_hex").get<std::string>();
    require(j.value("content_hash", std::string{}) ==
                to_hex(checkpoint_hash(ckpt.model.layout, hex)),
            ErrorKind::validation, "checkpoint: content hash mismatch: " + path.string());
    ckpt.model.values = params_from_hex(hex);
    require(ckpt.model.values.size() == ckpt.model.layout.param_count(), ErrorKind::validation,
            "checkpoint: param count mismatch");
    return ckpt;
}

}  // namespace popt::train
