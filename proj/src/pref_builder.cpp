#include "popt/pref_builder.hpp"

#include <algorithm>
#include <cmath>

#include "popt/mock_backend.hpp"

namespace popt::pref {

using gateway::ChatRequest;
using gateway::TemplateId;

void SamplerConfig::validate() const {
    require(k >= 2, ErrorKind::validation, "SamplerConfig: K must be >= 2");
    require(temperature > 0.0, ErrorKind::validation, "SamplerConfig: temperature must be > 0");
}

std::string GatewaySampler::sample(const UserQuery& query, double temperature,
                                   std::uint64_t seed) {
    ChatRequest request;
    request.template_id = TemplateId::fewshot_optimize;
    request.slots = {{"query", query.text}};
    request.temperature = temperature;
    request.seed = seed;
    request.max_retries = max_retries_;
    return gateway::parse_refinement(gateway::complete(request, backend_).content);
}

SampleResult sample_candidates(const UserQuery& query, PromptSampler& sampler,
                               const SamplerConfig& config) {
    config.validate();
    SampleResult result;
    for (int i = 0; i < config.k; ++i) {
        std::uint64_t seed = derive_seed(config.seed, "pref.candidate",
                                         static_cast<std::uint64_t>(i));
        try {
            PromptRecord record;
            record.id = query.id + "#sample" + std::to_string(i);
            record.query_id = query.id;
            record.text = sampler.sample(query, config.temperature, seed);
            record.origin = PromptOrigin::sampled;
            record.temperature = config.temperature;
            record.seed = seed;
            require(!record.text.empty(), ErrorKind::parse, "empty sampled prompt");
            result.candidates.push_back(std::move(record));
        } catch (const PipelineError& e) {
            result.audits.push_back("candidate " + std::to_string(i) + " for " + query.id +
                                    " failed: " + e.what());
        }
    }
    return result;
}

TextPairResult build_text_pairs(const UserQuery& query,
                                const std::vector<PromptRecord>& candidates,
                                gateway::ChatBackend& backend, std::uint64_t seed,
                                int max_retries) {
    TextPairResult result;
    for (const PromptRecord& candidate : candidates) {
        require(candidate.query_id == query.id, ErrorKind::validation,
                "build_text_pairs: candidate " + candidate.id + " is not for query " + query.id);
        try {
            ChatRequest request;
            request.template_id = TemplateId::critique_refine;
            request.slots = {{"query", query.text}, {"prompt", candidate.text}};
            request.temperature = 0.0;
            request.seed = derive_seed(seed, "pref.critique", candidate.id);
            request.max_retries = max_retries;

            std::string content = gateway::complete(request, backend).content;
            Critique critique = gateway::parse_critique(content);
            if (!critique.flawed) {
                result.passed.push_back(candidate);
                continue;
            }
            std::string refined = gateway::parse_refinement(content);
            require(refined != candidate.text, ErrorKind::parse,
                    "build_text_pairs: refinement identical to candidate " + candidate.id);

            PreferencePair pair;
            pair.query_id = query.id;
            pair.query = query.text;
            pair.chosen = refined;
            pair.rejected = candidate.text;
            pair.channel = PairChannel::text;
            result.pairs.push_back(std::move(pair));
        } catch (const PipelineError& e) {
            result.audits.push_back("candidate " + candidate.id + " skipped: " + e.what());
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Stub generator/scorer
// ---------------------------------------------------------------------------

std::string StubVideoGenerator::render(const std::string& prompt) {
    return "video[" + prompt + "]";
}

StubVideoScorer::StubVideoScorer(std::set<std::string> stopwords)
    : stopwords_(std::move(stopwords)) {}

StubVideoScorer::StubVideoScorer()
    : stopwords_(gateway::MockRules::default_stopwords()) {}

double StubVideoScorer::score_text(const UserQuery& query, const std::string& text,
                                   const std::set<std::string>& stopwords) {
    std::vector<std::string> content;
    for (const auto& w : word_tokens(query.text)) {
        if (stopwords.count(w)) continue;
        if (std::find(content.begin(), content.end(), w) == content.end()) content.push_back(w);
    }
    double coverage = 1.0;
    if (!content.empty()) {
        std::size_t present = 0;
        for (const auto& w : content) {
            if (contains_token(text, w)) ++present;
        }
        coverage = static_cast<double>(present) / static_cast<double>(content.size());
    }

    std::size_t words = word_tokens(text).size();
    double band = 0.0;
    if (words >= 48) {
        band = 0.75;  // overly long prompts drift off-subject
    } else if (words >= 24) {
        band = 1.0;
    } else if (words >= 8) {
        band = 0.5;
    }
    return 2.0 * coverage + band + 0.001 * static_cast<double>(std::min<std::size_t>(words, 100));
}

double StubVideoScorer::score(const UserQuery& query, const std::string& video) {
    // The stub descriptor is "video[<prompt>]"; score the embedded text.
    std::string text = video;
    if (text.rfind("video[", 0) == 0 && text.size() >= 7 && text.back() == ']') {
        text = text.substr(6, text.size() - 7);
    }
    return score_text(query, text, stopwords_);
}

ScoreResult score_prompts(const UserQuery& query, const std::vector<PromptRecord>& prompts,
                          VideoGenerator& generator, VideoScorer& scorer) {
    ScoreResult result;
    for (const PromptRecord& prompt : prompts) {
        try {
            std::string video = generator.render(prompt.text);
            double score = scorer.score(query, video);
            require(std::isfinite(score), ErrorKind::validation,
                    "score_prompts: non-finite score for " + prompt.id);
            result.records.push_back({prompt.id, score, scorer.scorer_id()});
        } catch (const PipelineError& e) {
            result.audits.push_back("prompt " + prompt.id + " excluded: " + e.what());
        }
    }
    return result;
}

std::vector<PreferencePair> build_video_pairs(
    const UserQuery& query,
    const std::vector<std::pair<PromptRecord, RewardRecord>>& scored, double gap_threshold,
    bool all_pairs) {
    require(gap_threshold > 0.0, ErrorKind::validation,
            "build_video_pairs: gap_threshold must be > 0");

    std::vector<std::pair<PromptRecord, RewardRecord>> ranked = scored;
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second.score != b.second.score) return a.second.score < b.second.score;
        return a.first.id < b.first.id;
    });

    auto make_pair = [&](const std::pair<PromptRecord, RewardRecord>& low,
                         const std::pair<PromptRecord, RewardRecord>& high) {
        PreferencePair pair;
        pair.query_id = query.id;
        pair.query = query.text;
        pair.chosen = high.first.text;
        pair.rejected = low.first.text;
        pair.channel = PairChannel::video;
        pair.reward_chosen = high.second.score;
        pair.reward_rejected = low.second.score;
        pair.reward_gap = high.second.score - low.second.score;
        return pair;
    };

    std::vector<PreferencePair> pairs;
    if (all_pairs) {
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            for (std::size_t j = i + 1; j < ranked.size(); ++j) {
                if (ranked[j].second.score - ranked[i].second.score > gap_threshold &&
                    ranked[i].first.text != ranked[j].first.text) {
                    pairs.push_back(make_pair(ranked[i], ranked[j]));
                }
            }
        }
    } else {
        for (std::size_t i = 0; i + 1 < ranked.size(); ++i) {
            if (ranked[i + 1].second.score - ranked[i].second.score > gap_threshold &&
                ranked[i].first.text != ranked[i + 1].first.text) {
                pairs.push_back(make_pair(ranked[i], ranked[i + 1]));
            }
        }
    }
    return pairs;
}

std::vector<PreferencePair> merge_dpo(const std::vector<PreferencePair>& text_pairs,
                                      const std::vector<PreferencePair>& video_pairs) {
    std::vector<PreferencePair> merged;
    std::set<std::string> seen;

    auto append = [&](const std::vector<PreferencePair>& pairs) {
        std::vector<PreferencePair> sorted = pairs;
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const PreferencePair& a, const PreferencePair& b) {
                             return a.query_id < b.query_id;
                         });
        for (auto& pair : sorted) {
            std::string key = pair.query + "\x1f" + pair.chosen + "\x1f" + pair.rejected;
            if (seen.insert(key).second) merged.push_back(pair);
        }
    };
    append(text_pairs);
    append(video_pairs);
    return merged;
}

}  // namespace popt::pref
