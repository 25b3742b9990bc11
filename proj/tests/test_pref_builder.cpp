#include <doctest.h>

#include <random>

#include "popt/pref_builder.hpp"
#include "popt/mock_backend.hpp"
#include "test_support.hpp"

using namespace popt;
using namespace popt::pref;
using popt::testsupport::make_query;

namespace {

SamplerConfig sampler_config(int k, std::uint64_t seed, double temperature = 0.9) {
    SamplerConfig config;
    config.k = k;
    config.temperature = temperature;
    config.seed = seed;
    return config;
}

class FailingSampler : public PromptSampler {
public:
    FailingSampler(gateway::ChatBackend& backend, int fail_index)
        : inner_(backend), fail_index_(fail_index) {}

    std::string sample(const UserQuery& query, double temperature, std::uint64_t seed) override {
        if (calls_++ == fail_index_) {
            fail(ErrorKind::backend, "scripted sampler outage");
        }
        return inner_.sample(query, temperature, seed);
    }

private:
    GatewaySampler inner_;
    int fail_index_;
    int calls_ = 0;
};

PromptRecord make_record(const std::string& id, const std::string& query_id,
                         const std::string& text) {
    PromptRecord r;
    r.id = id;
    r.query_id = query_id;
    r.text = text;
    r.origin = PromptOrigin::sampled;
    return r;
}

RewardRecord make_reward(const std::string& prompt_id, double score) {
    return {prompt_id, score, "test"};
}

// The heron query with root seed 7: candidates 1 and 2 trip the mock
// omission rule (frozen from a replay of the mock decision table).
const char* kHeron = "a heron standing motionless in a shallow stream";

}  // namespace

TEST_CASE("sample_candidates draws exactly K reproducible records") {
    gateway::MockBackend backend(testsupport::test_rules());
    GatewaySampler sampler(backend);
    UserQuery query = make_query("q1", kHeron);

    SampleResult four = sample_candidates(query, sampler, sampler_config(4, 7));
    REQUIRE(four.candidates.size() == 4);
    for (const auto& c : four.candidates) {
        CHECK(c.origin == PromptOrigin::sampled);
        CHECK(c.query_id == "q1");
        CHECK(c.temperature == doctest::Approx(0.9));
    }

    SampleResult again = sample_candidates(query, sampler, sampler_config(4, 7));
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(four.candidates[i].text == again.candidates[i].text);
        CHECK(four.candidates[i].seed == again.candidates[i].seed);
    }
}

TEST_CASE("sample_candidates derives per-index seeds that vary the texts") {
    gateway::MockBackend backend(testsupport::test_rules());
    GatewaySampler sampler(backend);
    SampleResult result =
        sample_candidates(make_query("q1", kHeron), sampler, sampler_config(4, 7));
    std::set<std::string> distinct;
    for (const auto& c : result.candidates) distinct.insert(c.text);
    CHECK(distinct.size() >= 2);
    std::set<std::uint64_t> seeds;
    for (const auto& c : result.candidates) seeds.insert(c.seed);
    CHECK(seeds.size() == 4);
}

TEST_CASE("sample_candidates records sampler failures as audits") {
    gateway::MockBackend backend(testsupport::test_rules());
    FailingSampler sampler(backend, 2);
    SampleResult result =
        sample_candidates(make_query("q1", kHeron), sampler, sampler_config(4, 7));
    CHECK(result.candidates.size() == 3);
    REQUIRE(result.audits.size() == 1);
    CHECK(result.audits[0].find("candidate 2") != std::string::npos);
}

TEST_CASE("sample_candidates validates K and temperature") {
    gateway::MockBackend backend(testsupport::test_rules());
    GatewaySampler sampler(backend);
    CHECK_THROWS_AS(
        sample_candidates(make_query("q", "x"), sampler, sampler_config(1, 1)),
        PipelineError);
    CHECK_THROWS_AS(
        sample_candidates(make_query("q", "x"), sampler, sampler_config(4, 1, 0.0)),
        PipelineError);
}

TEST_CASE("build_text_pairs pairs each flawed candidate with its refinement") {
    gateway::MockBackend backend(testsupport::test_rules());
    GatewaySampler sampler(backend);
    UserQuery query = make_query("q1", kHeron);
    SampleResult sampled = sample_candidates(query, sampler, sampler_config(4, 7));

    TextPairResult result = build_text_pairs(query, sampled.candidates, backend, 7);
    CHECK(result.pairs.size() == 2);
    CHECK(result.passed.size() == 2);

    gateway::MockRules rules = testsupport::test_rules();
    for (const auto& pair : result.pairs) {
        CHECK(pair.channel == PairChannel::text);
        CHECK_FALSE(pair.reward_gap.has_value());
        CHECK(pair.chosen != pair.rejected);
        // The last content word ("stream") was omitted; the refinement must
        // restore it.
        CHECK(contains_token(pair.chosen, "stream"));
        CHECK_FALSE(contains_token(pair.rejected, "stream"));
        CHECK(pair.chosen == rules.refined_of(query.text, pair.rejected));
        bool rejected_is_candidate = false;
        for (const auto& c : sampled.candidates) {
            rejected_is_candidate |= c.text == pair.rejected;
        }
        CHECK(rejected_is_candidate);
    }
}

TEST_CASE("build_text_pairs forwards clean candidates untouched") {
    gateway::MockBackend backend(testsupport::test_rules());
    UserQuery query = make_query("q1", "a quiet pond");
    std::vector<PromptRecord> clean = {
        make_record("q1#s0", "q1", "A quiet pond at dawn with mist."),
        make_record("q1#s1", "q1", "A quiet pond reflecting pine trees."),
    };
    TextPairResult result = build_text_pairs(query, clean, backend, 1);
    CHECK(result.pairs.empty());
    CHECK(result.passed.size() == 2);
}

// ---------------------------------------------------------------------------
// scoring
// ---------------------------------------------------------------------------

TEST_CASE("stub scorer is pure and length sensitive") {
    StubVideoGenerator generator;
    StubVideoScorer scorer;
    UserQuery query = make_query("q1", "a fox in snow");

    std::vector<PromptRecord> prompts = {
        make_record("p0", "q1", "A fox in snow."),
        make_record("p1", "q1",
                    "A fox in snow moves between birch trunks while flakes drift "
                    "down through pale light and the camera slides sideways slowly."),
    };
    ScoreResult result = score_prompts(query, prompts, generator, scorer);
    REQUIRE(result.records.size() == 2);
    CHECK(result.records[0].score != result.records[1].score);
    for (const auto& r : result.records) CHECK(std::isfinite(r.score));

    ScoreResult again = score_prompts(query, prompts, generator, scorer);
    CHECK(again.records[0].score == result.records[0].score);
    CHECK(again.records[1].score == result.records[1].score);
}

TEST_CASE("score_prompts matches direct stub evaluation") {
    StubVideoGenerator generator;
    StubVideoScorer scorer;
    UserQuery query = make_query("q1", "dancers on a rooftop");
    std::vector<PromptRecord> prompts;
    for (int i = 0; i < 4; ++i) {
        std::string text = "Dancers on a rooftop, take " + std::to_string(i) + ".";
        for (int j = 0; j < i * 8; ++j) text += " more";
        prompts.push_back(make_record("p" + std::to_string(i), "q1", text));
    }
    ScoreResult result = score_prompts(query, prompts, generator, scorer);
    REQUIRE(result.records.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        double direct = StubVideoScorer::score_text(query, prompts[i].text,
                                                    gateway::MockRules::default_stopwords());
        CHECK(result.records[i].score == direct);
    }
}

// ---------------------------------------------------------------------------
// video pairs
// ---------------------------------------------------------------------------

TEST_CASE("build_video_pairs emits one pair above the gap threshold") {
    UserQuery query = make_query("q1", "x");
    std::vector<std::pair<PromptRecord, RewardRecord>> scored = {
        {make_record("p0", "q1", "low prompt"), make_reward("p0", 0.1)},
        {make_record("p1", "q1", "high prompt"), make_reward("p1", 0.9)},
    };
    auto pairs = build_video_pairs(query, scored, 0.5);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].chosen == "high prompt");
    CHECK(pairs[0].rejected == "low prompt");
    CHECK(*pairs[0].reward_gap == doctest::Approx(0.8));
    CHECK(pairs[0].channel == PairChannel::video);
}

TEST_CASE("build_video_pairs drops sub-threshold gaps") {
    UserQuery query = make_query("q1", "x");
    std::vector<std::pair<PromptRecord, RewardRecord>> scored = {
        {make_record("p0", "q1", "a"), make_reward("p0", 0.5)},
        {make_record("p1", "q1", "b"), make_reward("p1", 0.9)},
    };
    CHECK(build_video_pairs(query, scored, 0.5).empty());
}

TEST_CASE("build_video_pairs emits adjacent-ranking pairs only") {
    UserQuery query = make_query("q1", "x");
    std::vector<std::pair<PromptRecord, RewardRecord>> scored = {
        {make_record("p0", "q1", "s0"), make_reward("p0", 0.0)},
        {make_record("p1", "q1", "s1"), make_reward("p1", 0.6)},
        {make_record("p2", "q1", "s2"), make_reward("p2", 1.3)},
        {make_record("p3", "q1", "s3"), make_reward("p3", 1.5)},
    };
    auto pairs = build_video_pairs(query, scored, 0.5);

    // Brute-force oracle over adjacent gaps of the score-sorted list.
    std::vector<double> scores = {0.0, 0.6, 1.3, 1.5};
    std::vector<std::pair<double, double>> expected;
    for (std::size_t i = 0; i + 1 < scores.size(); ++i) {
        if (scores[i + 1] - scores[i] > 0.5) expected.emplace_back(scores[i], scores[i + 1]);
    }
    REQUIRE(pairs.size() == expected.size());
    REQUIRE(pairs.size() == 2);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(*pairs[i].reward_rejected == doctest::Approx(expected[i].first));
        CHECK(*pairs[i].reward_chosen == doctest::Approx(expected[i].second));
        CHECK(*pairs[i].reward_gap > 0.5);
    }
}

TEST_CASE("build_video_pairs never pairs tied scores and sorts ties by prompt id") {
    UserQuery query = make_query("q1", "x");
    std::vector<std::pair<PromptRecord, RewardRecord>> scored = {
        {make_record("pb", "q1", "tie b"), make_reward("pb", 1.0)},
        {make_record("pa", "q1", "tie a"), make_reward("pa", 1.0)},
        {make_record("pc", "q1", "far"), make_reward("pc", 2.0)},
    };
    auto pairs = build_video_pairs(query, scored, 0.5);
    REQUIRE(pairs.size() == 1);
    // Ties order by id, so "tie b" is adjacent to "far".
    CHECK(pairs[0].rejected == "tie b");
    CHECK(pairs[0].chosen == "far");
}

TEST_CASE("build_video_pairs all-pairs mode emits every pair above the gap") {
    UserQuery query = make_query("q1", "x");
    std::vector<std::pair<PromptRecord, RewardRecord>> scored = {
        {make_record("p0", "q1", "s0"), make_reward("p0", 0.0)},
        {make_record("p1", "q1", "s1"), make_reward("p1", 0.6)},
        {make_record("p2", "q1", "s2"), make_reward("p2", 1.3)},
    };
    auto pairs = build_video_pairs(query, scored, 0.5, /*all_pairs=*/true);
    CHECK(pairs.size() == 3);  // (0,0.6), (0,1.3), (0.6,1.3)
}

// ---------------------------------------------------------------------------
// merge
// ---------------------------------------------------------------------------

TEST_CASE("merge_dpo concatenates channels without overlap") {
    std::vector<PreferencePair> text(2), video(3);
    for (int i = 0; i < 2; ++i) {
        text[static_cast<std::size_t>(i)] = {"q" + std::to_string(i), "q", "c" + std::to_string(i),
                                             "r", PairChannel::text, {}, {}, {}};
    }
    for (int i = 0; i < 3; ++i) {
        video[static_cast<std::size_t>(i)] = {"q" + std::to_string(i), "q",
                                              "v" + std::to_string(i), "r", PairChannel::video,
                                              1.0, 0.2, 0.8};
    }
    CHECK(merge_dpo(text, video).size() == 5);
    CHECK(merge_dpo({}, {}).empty());
}

TEST_CASE("merge_dpo deduplicates on (query, chosen, rejected) keeping the text copy") {
    PreferencePair text{"q1", "query", "good", "bad", PairChannel::text, {}, {}, {}};
    PreferencePair video{"q1", "query", "good", "bad", PairChannel::video, 1.0, 0.2, 0.8};
    auto merged = merge_dpo({text}, {video});
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].channel == PairChannel::text);
}

TEST_CASE("merge_dpo orders text before video, each by query id") {
    PreferencePair t1{"q2", "q", "c1", "r1", PairChannel::text, {}, {}, {}};
    PreferencePair t2{"q1", "q", "c2", "r2", PairChannel::text, {}, {}, {}};
    PreferencePair v1{"q0", "q", "c3", "r3", PairChannel::video, 1.0, 0.0, 1.0};
    auto merged = merge_dpo({t1, t2}, {v1});
    REQUIRE(merged.size() == 3);
    CHECK(merged[0].query_id == "q1");
    CHECK(merged[1].query_id == "q2");
    CHECK(merged[2].query_id == "q0");
    CHECK(merged[2].channel == PairChannel::video);
}

// ---------------------------------------------------------------------------
// per-query pipeline properties
// ---------------------------------------------------------------------------

TEST_CASE("per-query preference flow is deterministic and invariant-clean") {
    gateway::MockBackend backend(testsupport::test_rules());
    GatewaySampler sampler(backend);
    StubVideoGenerator generator;
    StubVideoScorer scorer;

    const char* texts[] = {
        "a heron standing motionless in a shallow stream",
        "lanterns floating down a river at festival night",
        "a mechanic rebuilding a vintage engine in a garage",
        "waves crashing against a basalt cliff in a storm",
        "a painter mixing pigments in a sunlit atelier",
    };

    auto run_once = [&](std::uint64_t seed) {
        std::vector<PreferencePair> all_text, all_video;
        for (int qi = 0; qi < 5; ++qi) {
            UserQuery query = make_query("q" + std::to_string(qi), texts[qi]);
            SampleResult sampled = sample_candidates(query, sampler, sampler_config(4, seed));
            TextPairResult text = build_text_pairs(query, sampled.candidates, backend, seed);
            ScoreResult scores = score_prompts(query, text.passed, generator, scorer);
            std::vector<std::pair<PromptRecord, RewardRecord>> scored;
            for (std::size_t k = 0; k < scores.records.size(); ++k) {
                scored.emplace_back(text.passed[k], scores.records[k]);
            }
            auto video = build_video_pairs(query, scored, 0.5);
            all_text.insert(all_text.end(), text.pairs.begin(), text.pairs.end());
            all_video.insert(all_video.end(), video.begin(), video.end());
        }
        return merge_dpo(all_text, all_video);
    };

    auto first = run_once(7);
    auto second = run_once(7);
    CHECK(to_jsonl(first, [](const PreferencePair& p) { return to_json(p); }) ==
          to_jsonl(second, [](const PreferencePair& p) { return to_json(p); }));

    for (const auto& pair : first) {
        CHECK(pair.chosen != pair.rejected);
        if (pair.channel == PairChannel::video) {
            REQUIRE(pair.reward_gap.has_value());
            CHECK(*pair.reward_gap > 0.5);
            CHECK(*pair.reward_chosen - *pair.reward_rejected == doctest::Approx(*pair.reward_gap));
        } else {
            CHECK_FALSE(pair.reward_gap.has_value());
        }
    }
}
