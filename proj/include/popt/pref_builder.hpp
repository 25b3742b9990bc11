#pragma once

#include <set>
#include <string>
#include <vector>

#include "popt/gateway.hpp"
#include "popt/records.hpp"

namespace popt::pref {

// ---------------------------------------------------------------------------
// Candidate sampling
// ---------------------------------------------------------------------------

struct SamplerConfig {
    int k = 4;
    double temperature = 0.9;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Any prompt-producing source: the SFT-trained model, a chat backend, or a
/// mock. Implementations must be deterministic given the seed.
class PromptSampler {
public:
    virtual ~PromptSampler() = default;
    virtual std::string sample(const UserQuery& query, double temperature,
                               std::uint64_t seed) = 0;
};

/// Sampler backed by the gateway's few-shot template.
class GatewaySampler : public PromptSampler {
public:
    explicit GatewaySampler(gateway::ChatBackend& backend, int max_retries = 3)
        : backend_(backend), max_retries_(max_retries) {}

    std::string sample(const UserQuery& query, double temperature,
                       std::uint64_t seed) override;

private:
    gateway::ChatBackend& backend_;
    int max_retries_;
};

struct SampleResult {
    std::vector<PromptRecord> candidates;
    std::vector<std::string> audits;  // per-index sampler failures
};

/// Draws K candidates; candidate i uses the seed derived from
/// (config.seed, i). A failing index shrinks the list and leaves an audit
/// note instead of aborting.
SampleResult sample_candidates(const UserQuery& query, PromptSampler& sampler,
                               const SamplerConfig& config);

// ---------------------------------------------------------------------------
// Text-level pairs
// ---------------------------------------------------------------------------

struct TextPairResult {
    std::vector<PreferencePair> pairs;
    std::vector<PromptRecord> passed;  // unflawed candidates, forwarded to video scoring
    std::vector<std::string> audits;
};

/// Critiques each candidate; a flawed one yields (chosen = refined,
/// rejected = candidate) on the text channel, an unflawed one is forwarded
/// for video scoring. Refined prompts do not re-enter scoring.
TextPairResult build_text_pairs(const UserQuery& query,
                                const std::vector<PromptRecord>& candidates,
                                gateway::ChatBackend& backend, std::uint64_t seed,
                                int max_retries = 3);

// ---------------------------------------------------------------------------
// Video-level pairs
// ---------------------------------------------------------------------------

/// Opaque stand-in for the text-to-video model: maps a prompt to a video
/// descriptor that a scorer can evaluate.
class VideoGenerator {
public:
    virtual ~VideoGenerator() = default;
    virtual std::string render(const std::string& prompt) = 0;
    virtual std::string generator_id() const = 0;
};

/// Opaque reward scorer over (query, video descriptor).
class VideoScorer {
public:
    virtual ~VideoScorer() = default;
    virtual double score(const UserQuery& query, const std::string& video) = 0;
    virtual std::string scorer_id() const = 0;
};

/// Bundled deterministic stubs: the generator embeds the prompt text in the
/// descriptor; the score is an affine function of the query's content-word
/// coverage and a prompt-length band, so rankings are stable and
/// explainable.
class StubVideoGenerator : public VideoGenerator {
public:
    std::string render(const std::string& prompt) override;
    std::string generator_id() const override { return "stub-generator"; }
};

class StubVideoScorer : public VideoScorer {
public:
    explicit StubVideoScorer(std::set<std::string> stopwords);
    StubVideoScorer();

    double score(const UserQuery& query, const std::string& video) override;
    std::string scorer_id() const override { return "stub-scorer"; }

    /// score = 2 * coverage + length_band + 0.001 * min(words, 100)
    static double score_text(const UserQuery& query, const std::string& text,
                             const std::set<std::string>& stopwords);

private:
    std::set<std::string> stopwords_;
};

struct ScoreResult {
    std::vector<RewardRecord> records;  // aligned with the scored prompts
    std::vector<std::string> audits;
};

ScoreResult score_prompts(const UserQuery& query, const std::vector<PromptRecord>& prompts,
                          VideoGenerator& generator, VideoScorer& scorer);

/// Sorts ascending by score (ties by prompt id) and emits one pair per
/// adjacent ranking step whose gap is strictly above the threshold; tied
/// scores never pair. `all_pairs` switches to every pair above the gap.
std::vector<PreferencePair> build_video_pairs(
    const UserQuery& query,
    const std::vector<std::pair<PromptRecord, RewardRecord>>& scored, double gap_threshold,
    bool all_pairs = false);

/// D_text followed by D_video, each ordered by query id, deduplicated on
/// (query, chosen, rejected) with the text copy winning.
std::vector<PreferencePair> merge_dpo(const std::vector<PreferencePair>& text_pairs,
                                      const std::vector<PreferencePair>& video_pairs);

}  // namespace popt::pref
