#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "popt/records.hpp"

namespace popt::corpus {

// ---------------------------------------------------------------------------
// Rule-based quality filtering
// ---------------------------------------------------------------------------

struct FilterRules {
    std::set<std::string> keyword_blocklist;  // lowercase word tokens
    int min_tokens = 3;
    int max_tokens = 200;
    double min_alnum_ratio = 0.6;

    void validate() const;
};

std::set<std::string> load_blocklist(const std::filesystem::path& path);

struct RuleFilterResult {
    std::vector<UserQuery> kept;      // subsequence of the input, unmodified text
    std::vector<UserQuery> rejected;  // annotated with rejection_reason
};

/// Order-preserving pass over the input. Rejection reasons are assigned with
/// fixed precedence: length, then keyword, then charset. A query violating
/// several rules carries the first reason only.
RuleFilterResult rule_filter(const std::vector<UserQuery>& queries, const FilterRules& rules);

// ---------------------------------------------------------------------------
// BLEU and self-BLEU diversity filtering
// ---------------------------------------------------------------------------

struct BleuOptions {
    // Zero higher-order precisions are replaced by epsilon only when the
    // unigram precision is nonzero; a candidate sharing no vocabulary with
    // the references scores exactly 0.
    double epsilon = 1e-9;
    bool smooth_zero_unigram = false;  // verification seam; never set in production
};

/// Corpus-style BLEU: modified n-gram precision clipped against all
/// references, geometric mean over n = 1..max_n with uniform weights, and
/// brevity penalty exp(1 - r/c) when the candidate is shorter than the
/// closest reference. Orders above the candidate length are dropped and the
/// weights renormalized.
double bleu(const std::vector<std::string>& candidate,
            const std::vector<std::vector<std::string>>& references, int max_n,
            const BleuOptions& options = {});

struct CurationReport {
    std::size_t input_count = 0;
    std::size_t kept_count = 0;
    std::map<RejectionReason, std::size_t> rejected_by_rule;
    double self_bleu_threshold = 0.0;
    std::uint64_t seed = 0;

    std::size_t rejected_total() const;
    bool reconciles() const { return kept_count + rejected_total() == input_count; }
};

struct SelfBleuResult {
    std::vector<UserQuery> kept;
    std::vector<UserQuery> dropped;  // annotated duplicate
    CurationReport report;
};

/// Greedy streaming pass in input order: a query is kept iff its BLEU against
/// the queries kept so far is <= threshold (or nothing is kept yet). The seed
/// is recorded in the report for provenance; the pass itself is
/// deterministic.
SelfBleuResult self_bleu_filter(const std::vector<UserQuery>& queries, double threshold,
                                int max_n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Safety relabeling
// ---------------------------------------------------------------------------

/// Verdict source for re-evaluating safety-flagged queries. Implementations
/// wrap a chat backend; tests use fixed decision tables.
class SafetyJudge {
public:
    virtual ~SafetyJudge() = default;
    /// true = query is genuinely unsafe (stays flagged). Throws on backend
    /// failure after retries.
    virtual bool is_unsafe(const UserQuery& query) = 0;
};

struct AuditNote {
    std::string query_id;
    std::string message;
};

struct RelabelResult {
    std::vector<UserQuery> queries;  // same order as input
    std::vector<AuditNote> audits;   // one note per judge failure
};

/// Re-evaluates safety_flagged queries: confirmed queries stay flagged,
/// benign ones are downgraded to general. A judge failure carries the query
/// forward unmodified with an audit note. Judge calls may run concurrently;
/// output order always matches input order.
RelabelResult relabel_safety(const std::vector<UserQuery>& queries, SafetyJudge& judge,
                             unsigned max_concurrency = 1);

// ---------------------------------------------------------------------------
// Dataset split
// ---------------------------------------------------------------------------

struct SplitResult {
    std::vector<UserQuery> sft_pool;
    std::vector<UserQuery> dpo_pool;
};

/// Disjoint exhaustive partition, stratified by safety label so both pools
/// hold flagged queries proportionally (+-1). Each pool preserves input
/// order; membership is decided by a seeded shuffle per stratum.
SplitResult split_dataset(const std::vector<UserQuery>& queries, double sft_fraction,
                          std::uint64_t seed);

}  // namespace popt::corpus
