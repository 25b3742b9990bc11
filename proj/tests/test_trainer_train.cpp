#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "popt/training.hpp"
#include "popt/verify.hpp"

using namespace popt;
using namespace popt::train;

namespace {

TrainConfig desk_config(double lr, int epochs, int batch_size, std::uint64_t seed) {
    TrainConfig config;
    config.learning_rate = lr;
    config.epochs = epochs;
    config.batch_size = batch_size;
    config.warmup_ratio = 0.1;
    config.seed = seed;
    return config;
}

}  // namespace

TEST_CASE("train_sft with learning rate zero is a null update") {
    auto corpus = verify::make_memorization_corpus(20);
    ModelParams model = ModelParams::init(verify::memorization_layout(), ModelRole::policy, 1);
    std::vector<double> before = model.values;

    TrainConfig config = desk_config(0.0, 3, 20, 1);
    SftTrainResult result = train_sft(std::move(model), corpus, config);
    CHECK(result.model.values == before);
    REQUIRE(result.trace.size() == 3);
    for (const auto& step : result.trace) {
        CHECK(step.loss == doctest::Approx(result.trace[0].loss).epsilon(1e-15));
    }
}

TEST_CASE("train_sft is bit-reproducible given the seed") {
    auto corpus = verify::make_memorization_corpus(30);
    TrainConfig config = desk_config(0.01, 5, 8, 99);
    auto run = [&] {
        ModelParams model =
            ModelParams::init(verify::memorization_layout(), ModelRole::policy, 7);
        return train_sft(std::move(model), corpus, config);
    };
    SftTrainResult a = run();
    SftTrainResult b = run();
    CHECK(a.model.values == b.model.values);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].loss == b.trace[i].loss);
    }
}

TEST_CASE("train_sft memorizes a small corpus") {
    auto corpus = verify::make_memorization_corpus(40);
    TrainConfig config = desk_config(0.02, 260, 10, 5);
    ModelParams model = ModelParams::init(verify::memorization_layout(), ModelRole::policy, 11);
    SftTrainResult result = train_sft(std::move(model), corpus, config);
    REQUIRE_FALSE(result.diverged);
    double nll = sft_loss(result.model, corpus).value;
    CHECK(nll < 0.1);
    // The trace must descend substantially from the near-uniform start.
    CHECK(result.trace.front().loss > 10.0 * result.trace.back().loss);
}

TEST_CASE("train_sft flags divergence and keeps the trace") {
    auto corpus = verify::make_memorization_corpus(10);
    TrainConfig config = desk_config(1e200, 4, 10, 2);
    ModelParams model = ModelParams::init(verify::memorization_layout(), ModelRole::policy, 3);
    SftTrainResult result = train_sft(std::move(model), corpus, config);
    CHECK(result.diverged);
    CHECK_FALSE(result.trace.empty());
}

TEST_CASE("train_sft validates its config") {
    auto corpus = verify::make_memorization_corpus(4);
    ModelParams model = ModelParams::init(verify::memorization_layout(), ModelRole::policy, 3);
    TrainConfig bad = desk_config(0.1, 0, 4, 1);
    CHECK_THROWS_AS(train_sft(std::move(model), corpus, bad), PipelineError);
}

// ---------------------------------------------------------------------------
// DPO training
// ---------------------------------------------------------------------------

TEST_CASE("train_dpo separates marker pairs and never touches the reference") {
    auto pairs = verify::make_marker_pairs(120);
    ModelParams sft_model = ModelParams::init(verify::marker_layout(), ModelRole::policy, 13);
    ModelParams reference = sft_model.as_reference();
    std::vector<double> reference_before = reference.values;

    TrainConfig config = verify::marker_train_config();
    DpoTrainResult result = train_dpo(sft_model, reference, pairs, config);
    REQUIRE_FALSE(result.diverged);
    CHECK(result.positive_margin_fraction >= 0.9);
    CHECK(reference.values == reference_before);
}

TEST_CASE("train_dpo in the vanishing-beta limit barely moves parameters") {
    auto pairs = verify::make_marker_pairs(64);
    ModelParams policy = ModelParams::init(verify::marker_layout(), ModelRole::policy, 17);
    ModelParams reference = policy.as_reference();
    std::vector<double> before = policy.values;

    TrainConfig config;
    config.learning_rate = 5e-7;
    config.epochs = 1;
    config.batch_size = static_cast<int>(pairs.size());  // one full-batch step
    config.warmup_ratio = 0.1;
    config.beta = 1e-8;
    config.seed = 4;
    DpoTrainResult result = train_dpo(std::move(policy), reference, pairs, config);

    REQUIRE(result.trace.size() == 1);
    CHECK(std::abs(result.trace[0].loss - std::log(2.0)) < 1e-6);
    double max_drift = 0.0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        max_drift = std::max(max_drift, std::abs(result.policy.values[i] - before[i]));
    }
    CHECK(max_drift < 1e-6);
}

TEST_CASE("train_dpo is bit-reproducible given the seed") {
    auto pairs = verify::make_marker_pairs(50);
    TrainConfig config = verify::marker_train_config();
    config.epochs = 5;
    auto run = [&] {
        ModelParams policy = ModelParams::init(verify::marker_layout(), ModelRole::policy, 19);
        ModelParams reference = policy.as_reference();
        return train_dpo(std::move(policy), reference, pairs, config);
    };
    DpoTrainResult a = run();
    DpoTrainResult b = run();
    CHECK(a.policy.values == b.policy.values);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].loss == b.trace[i].loss);
        CHECK(a.trace[i].margin_mean == b.trace[i].margin_mean);
    }
}

TEST_CASE("train_dpo requires a reference-role model") {
    auto pairs = verify::make_marker_pairs(4);
    ModelParams policy = ModelParams::init(verify::marker_layout(), ModelRole::policy, 21);
    ModelParams not_reference = policy;  // still policy role
    CHECK_THROWS_AS(train_dpo(policy, not_reference, pairs, verify::marker_train_config()),
                    PipelineError);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

TEST_CASE("checkpoints round-trip bit-exactly") {
    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "popt_test_ckpt.json";

    ModelParams model = ModelParams::init({16, 6, 3, 12}, ModelRole::policy, 23);
    save_checkpoint(path, model, 23);
    Checkpoint loaded = load_checkpoint(path);

    CHECK(loaded.seed == 23);
    CHECK(loaded.model.role == ModelRole::policy);
    CHECK(loaded.model.values == model.values);

    TokenSequence probe;
    probe.condition_tokens = {1, 2, 3};
    probe.target_tokens = {4, 5, 6, 7};
    probe.vocab_size = 16;
    CHECK(log_prob(loaded.model, probe) == log_prob(model, probe));
    fs::remove(path);
}

TEST_CASE("checkpoint loading rejects corrupted parameters") {
    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "popt_test_ckpt_bad.json";

    ModelParams model = ModelParams::init({8, 3, 2, 4}, ModelRole::policy, 29);
    save_checkpoint(path, model, 29);

    std::string content = read_file(path);
    std::size_t pos = content.find("\"params_hex\": \"");
    REQUIRE(pos != std::string::npos);
    pos += std::string("\"params_hex\": \"").size();
    content[pos] = content[pos] == '0' ? '1' : '0';
    atomic_write_file(path, content);

    CHECK_THROWS_AS(load_checkpoint(path), PipelineError);
    fs::remove(path);
}
