#include <doctest.h>

#include "popt/sft_builder.hpp"
#include "popt/mock_backend.hpp"
#include "test_support.hpp"

using namespace popt;
using namespace popt::sft;
using popt::testsupport::make_query;

namespace {

SftBuildConfig config_with_seed(std::uint64_t seed) {
    SftBuildConfig config;
    config.seed = seed;
    return config;
}

// Delegates to the mock but fails every call whose rendered slots mention the
// poisoned query text.
class PoisonedBackend : public gateway::ChatBackend {
public:
    PoisonedBackend(gateway::MockRules rules, std::string poison)
        : mock_(std::move(rules)), poison_(std::move(poison)) {}

    gateway::ChatResponse complete(const gateway::ChatRequest& request) override {
        for (const auto& [name, value] : request.slots) {
            if (value.find(poison_) != std::string::npos) {
                fail(ErrorKind::backend, "scripted outage for poisoned query");
            }
        }
        return mock_.complete(request);
    }
    std::string backend_id() const override { return "poisoned-mock"; }

private:
    gateway::MockBackend mock_;
    std::string poison_;
};

const char* kTenQueries[10] = {
    "a red fox sleeping under a maple tree",
    "city traffic at night from a rooftop",
    "a sailboat gliding across a calm bay",
    "an owl turning its head in the moonlight",
    "a blacksmith hammering a glowing horseshoe",
    "divers feeding stingrays near a sandbar",
    "a tram rattling through old lisbon streets",
    "snow falling gently on a quiet temple garden",
    "a chef flipping pancakes in a diner kitchen",
    "fireflies blinking over a summer pond",
};

std::vector<UserQuery> ten_queries() {
    std::vector<UserQuery> queries;
    for (int i = 0; i < 10; ++i) {
        queries.push_back(make_query("t" + std::to_string(i + 1), kTenQueries[i]));
    }
    return queries;
}

}  // namespace

TEST_CASE("generate_initial produces a fewshot prompt containing the query subject") {
    gateway::MockBackend backend(testsupport::test_rules());
    // Seed 2 is one where the mock elaboration keeps every content word.
    PromptRecord record = generate_initial(make_query("q1", "a cat"), backend, config_with_seed(2));
    CHECK(record.origin == PromptOrigin::fewshot);
    CHECK(record.query_id == "q1");
    CHECK(contains_token(record.text, "cat"));
    CHECK_FALSE(record.parent_id.has_value());
}

TEST_CASE("generate_initial gives distinct prompts for distinct queries under one seed") {
    gateway::MockBackend backend(testsupport::test_rules());
    PromptRecord a = generate_initial(make_query("q1", "a cat"), backend, config_with_seed(3));
    PromptRecord b = generate_initial(make_query("q2", "a dog"), backend, config_with_seed(3));
    CHECK(a.text != b.text);
}

TEST_CASE("generate_initial over 50 queries is a query-id bijection") {
    gateway::MockBackend backend(testsupport::test_rules());
    std::set<std::string> prompt_ids;
    std::set<std::string> query_ids;
    for (int i = 0; i < 50; ++i) {
        UserQuery q = make_query("q" + std::to_string(i), "subject number " + std::to_string(i));
        PromptRecord record = generate_initial(q, backend, config_with_seed(1));
        CHECK(prompt_ids.insert(record.id).second);
        CHECK(query_ids.insert(record.query_id).second);
    }
    CHECK(prompt_ids.size() == 50);
    CHECK(query_ids.size() == 50);
}

TEST_CASE("critique_prompt applies the mock principle rules") {
    gateway::MockBackend backend(testsupport::test_rules());
    UserQuery query = make_query("q1", "a cat on a mat");
    SftBuildConfig config = config_with_seed(1);

    PromptRecord dropped;
    dropped.id = "q1#manual";
    dropped.query_id = "q1";
    dropped.text = "A cozy mat in the sun.";  // omits "cat"
    Critique c1 = critique_prompt(query, dropped, backend, config);
    CHECK_FALSE(c1.accurate.pass);
    CHECK(c1.flawed);

    PromptRecord harmful = dropped;
    harmful.text = "A cat on a mat with gore.";
    Critique c2 = critique_prompt(query, harmful, backend, config);
    CHECK_FALSE(c2.harmless.pass);

    PromptRecord clean = dropped;
    clean.text = "A fluffy cat stretches on a woven mat.";
    Critique c3 = critique_prompt(query, clean, backend, config);
    CHECK_FALSE(c3.flawed);
}

TEST_CASE("critique_prompt rejects a prompt from another query") {
    gateway::MockBackend backend(testsupport::test_rules());
    PromptRecord record;
    record.id = "x";
    record.query_id = "other";
    record.text = "text";
    CHECK_THROWS_AS(
        critique_prompt(make_query("q1", "a cat"), record, backend, config_with_seed(1)),
        PipelineError);
}

TEST_CASE("refine_prompt restores omitted content words") {
    gateway::MockBackend backend(testsupport::test_rules());
    UserQuery query = make_query("q1", "a cat on a mat");
    PromptRecord prompt;
    prompt.id = "q1#fewshot";
    prompt.query_id = "q1";
    prompt.text = "A quiet scene on a mat.";
    SftBuildConfig config = config_with_seed(1);
    Critique critique = critique_prompt(query, prompt, backend, config);
    REQUIRE(critique.flawed);
    PromptRecord refined = refine_prompt(query, prompt, critique, backend, config);
    CHECK(refined.origin == PromptOrigin::refined);
    CHECK(refined.parent_id == prompt.id);
    CHECK(contains_token(refined.text, "cat"));
}

TEST_CASE("refine_prompt removes blocklisted tokens") {
    gateway::MockBackend backend(testsupport::test_rules());
    UserQuery query = make_query("q1", "a knight duel");
    PromptRecord prompt;
    prompt.id = "q1#fewshot";
    prompt.query_id = "q1";
    prompt.text = "A knight duel with gore everywhere.";
    SftBuildConfig config = config_with_seed(1);
    Critique critique = critique_prompt(query, prompt, backend, config);
    PromptRecord refined = refine_prompt(query, prompt, critique, backend, config);
    CHECK_FALSE(contains_token(refined.text, "gore"));
}

TEST_CASE("refine_prompt refuses an unflawed critique") {
    gateway::MockBackend backend(testsupport::test_rules());
    UserQuery query = make_query("q1", "a cat");
    PromptRecord prompt;
    prompt.id = "q1#fewshot";
    prompt.query_id = "q1";
    prompt.text = "A cat in the sun.";
    Critique clean;
    clean.prompt_id = prompt.id;
    clean.flawed = false;
    CHECK_THROWS_AS(refine_prompt(query, prompt, clean, backend, config_with_seed(1)),
                    PipelineError);
}

TEST_CASE("build_sft_dataset uses the refined target exactly for flawed critiques") {
    // With root seed 5, the mock omission rule trips for exactly t2, t3, t8
    // of these ten queries (frozen from a replay of the mock decision table).
    gateway::MockBackend backend(testsupport::test_rules());
    SftBuildResult result = build_sft_dataset(ten_queries(), backend, config_with_seed(5));

    REQUIRE(result.examples.size() == 10);
    CHECK(result.skipped.empty());

    std::set<std::string> refined_ids;
    for (const auto& e : result.examples) {
        if (e.lineage == SftLineage::used_refined) refined_ids.insert(e.query_id);
        CHECK(e.lineage == (e.critique.flawed ? SftLineage::used_refined
                                              : SftLineage::kept_original));
    }
    CHECK(refined_ids == std::set<std::string>{"t2", "t3", "t8"});
}

TEST_CASE("build_sft_dataset invariants: verbatim queries, ordered output, replayable rules") {
    gateway::MockBackend backend(testsupport::test_rules());
    auto queries = ten_queries();
    SftBuildResult result = build_sft_dataset(queries, backend, config_with_seed(5));

    gateway::MockRules rules = testsupport::test_rules();
    std::map<std::string, std::string> text_by_id;
    for (const auto& q : queries) text_by_id[q.id] = q.text;

    for (std::size_t i = 1; i < result.examples.size(); ++i) {
        CHECK(result.examples[i - 1].query_id < result.examples[i].query_id);
    }
    for (const auto& e : result.examples) {
        CHECK(e.query == text_by_id.at(e.query_id));
        // Replay: the stored critique matches the mock rules applied to the
        // regenerated fewshot prompt.
        std::uint64_t seed = derive_seed(5, "sft.fewshot", e.query_id);
        std::string fewshot = rules.elaborate(e.query, seed);
        Critique replay = rules.critique_of(e.query, fewshot);
        CHECK(replay.flawed == e.critique.flawed);
        if (replay.flawed) {
            CHECK(e.target == rules.refined_of(e.query, fewshot));
        } else {
            CHECK(e.target == fewshot);
        }
    }
}

TEST_CASE("build_sft_dataset is deterministic") {
    gateway::MockBackend backend(testsupport::test_rules());
    auto a = build_sft_dataset(ten_queries(), backend, config_with_seed(5));
    auto b = build_sft_dataset(ten_queries(), backend, config_with_seed(5));
    CHECK(to_jsonl(a.examples, [](const SftExample& e) { return to_json(e); }) ==
          to_jsonl(b.examples, [](const SftExample& e) { return to_json(e); }));
}

TEST_CASE("build_sft_dataset runs concurrently with identical output") {
    gateway::MockBackend backend(testsupport::test_rules());
    SftBuildConfig sequential = config_with_seed(5);
    SftBuildConfig concurrent = config_with_seed(5);
    concurrent.max_concurrency = 4;
    auto a = build_sft_dataset(ten_queries(), backend, sequential);
    auto b = build_sft_dataset(ten_queries(), backend, concurrent);
    CHECK(to_jsonl(a.examples, [](const SftExample& e) { return to_json(e); }) ==
          to_jsonl(b.examples, [](const SftExample& e) { return to_json(e); }));
}

TEST_CASE("build_sft_dataset skips failing queries without aborting the batch") {
    PoisonedBackend backend(testsupport::test_rules(), kTenQueries[4]);
    SftBuildResult result = build_sft_dataset(ten_queries(), backend, config_with_seed(5));
    CHECK(result.examples.size() == 9);
    REQUIRE(result.skipped.size() == 1);
    CHECK(result.skipped[0].query_id == "t5");
    for (const auto& e : result.examples) CHECK(e.query_id != "t5");
}

TEST_CASE("build_sft_dataset on empty input yields an empty dataset") {
    gateway::MockBackend backend(testsupport::test_rules());
    SftBuildResult result = build_sft_dataset({}, backend, config_with_seed(1));
    CHECK(result.examples.empty());
    CHECK(result.skipped.empty());
}
