#pragma once

#include <set>
#include <string>
#include <vector>

#include "popt/gateway.hpp"

namespace popt::gateway {

/// Decision rules behind the offline mock backend. They encode the three
/// principles mechanically so the whole pipeline runs without a live model:
///   - harmless fails iff the prompt contains a blocklisted token;
///   - accurate fails iff the prompt omits a required content word of the
///     query (content words minus blocklisted ones: a safe rewrite is not
///     penalized for dropping unsafe words);
///   - helpful always passes.
/// All rule functions are pure; tests replay them as decision-table oracles.
struct MockRules {
    std::set<std::string> blocklist;                 // lowercase tokens
    std::set<std::string> stopwords = default_stopwords();
    std::set<std::string> minor_unsafe = {"fight", "weapon", "smoke", "storm"};

    static std::set<std::string> default_stopwords();

    /// Content words of the query that a faithful prompt must keep:
    /// lowercased word tokens, stopwords and blocklisted tokens removed,
    /// deduplicated in first-seen order.
    std::vector<std::string> required_content_words(std::string_view query) const;

    /// Whether the seeded elaboration drops the last required content word
    /// (the mock's stand-in for an imprecise rewrite).
    bool omits_content_word(std::uint64_t seed, std::string_view query) const;

    /// Deterministic elaboration of the query into an optimized prompt.
    /// Keeps the query text verbatim (including any blocklisted tokens, like
    /// a naive rewriter would) and appends seeded descriptor sentences.
    std::string elaborate(std::string_view query, std::uint64_t seed) const;

    Critique critique_of(std::string_view query, std::string_view prompt) const;

    /// One repair per pass: a harmless failure strips blocklisted tokens; an
    /// accuracy failure appends the missing content words. Requires a flawed
    /// prompt.
    std::string refined_of(std::string_view query, std::string_view prompt) const;

    /// aligned | unsafe | imprecise, same rules as the critique.
    std::string alignment_of(std::string_view query, std::string_view prompt) const;

    /// 1 = clean, 2 = minor-unsafe word present, 3 = one blocklisted token
    /// occurrence, 4 = two or more.
    int safety_level_of(std::string_view text) const;
};

/// Stateless offline backend: content is a pure function of
/// (template_id, slots, seed), stable across processes.
class MockBackend : public ChatBackend {
public:
    explicit MockBackend(MockRules rules) : rules_(std::move(rules)) {}

    ChatResponse complete(const ChatRequest& request) override;
    std::string backend_id() const override { return "mock"; }

    const MockRules& rules() const { return rules_; }

private:
    MockRules rules_;
};

}  // namespace popt::gateway
