#include "popt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace popt::corpus {

void FilterRules::validate() const {
    require(min_tokens >= 1, ErrorKind::validation, "FilterRules: min_tokens must be >= 1");
    require(min_tokens <= max_tokens, ErrorKind::validation,
            "FilterRules: min_tokens must be <= max_tokens");
    require(min_alnum_ratio >= 0.0 && min_alnum_ratio <= 1.0, ErrorKind::validation,
            "FilterRules: min_alnum_ratio must be in [0,1]");
}

std::set<std::string> load_blocklist(const std::filesystem::path& path) {
    std::set<std::string> out;
    for (const auto& line : read_lines(path)) {
        std::string token = to_lower(trim(line));
        if (!token.empty() && token[0] != '#') out.insert(token);
    }
    return out;
}

RuleFilterResult rule_filter(const std::vector<UserQuery>& queries, const FilterRules& rules) {
    rules.validate();
    RuleFilterResult result;
    for (const UserQuery& q : queries) {
        std::optional<RejectionReason> reason;

        std::size_t tokens = whitespace_token_count(q.text);
        if (tokens < static_cast<std::size_t>(rules.min_tokens) ||
            tokens > static_cast<std::size_t>(rules.max_tokens)) {
            reason = RejectionReason::length;
        }
        if (!reason) {
            for (const auto& word : word_tokens(q.text)) {
                if (rules.keyword_blocklist.count(word)) {
                    reason = RejectionReason::keyword;
                    break;
                }
            }
        }
        if (!reason && alnum_ratio(q.text) < rules.min_alnum_ratio) {
            reason = RejectionReason::charset;
        }

        if (reason) {
            UserQuery rejected = q;
            rejected.rejection_reason = reason;
            result.rejected.push_back(std::move(rejected));
        } else {
            result.kept.push_back(q);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const std::vector<std::string>& tokens, int n) {
    NgramCounts counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        std::vector<std::string> gram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i) + n);
        ++counts[gram];
    }
    return counts;
}

}  // namespace

double bleu(const std::vector<std::string>& candidate,
            const std::vector<std::vector<std::string>>& references, int max_n,
            const BleuOptions& options) {
    require(max_n >= 1, ErrorKind::validation, "bleu: max_n must be >= 1");
    require(!candidate.empty(), ErrorKind::validation, "bleu: empty candidate");
    require(!references.empty(), ErrorKind::validation, "bleu: no references");

    const std::size_t c = candidate.size();
    const int orders = std::min<int>(max_n, static_cast<int>(c));

    std::vector<double> precisions;
    precisions.reserve(static_cast<std::size_t>(orders));
    for (int n = 1; n <= orders; ++n) {
        NgramCounts cand = ngram_counts(candidate, n);
        std::size_t total = 0;
        for (const auto& [gram, count] : cand) total += count;

        NgramCounts max_ref;
        for (const auto& ref : references) {
            for (const auto& [gram, count] : ngram_counts(ref, n)) {
                auto [it, inserted] = max_ref.try_emplace(gram, count);
                if (!inserted) it->second = std::max(it->second, count);
            }
        }

        std::size_t clipped = 0;
        for (const auto& [gram, count] : cand) {
            auto it = max_ref.find(gram);
            if (it != max_ref.end()) clipped += std::min(count, it->second);
        }
        precisions.push_back(total == 0 ? 0.0
                                        : static_cast<double>(clipped) /
                                              static_cast<double>(total));
    }

    if (precisions[0] == 0.0 && !options.smooth_zero_unigram) return 0.0;
    for (double& p : precisions) {
        if (p == 0.0) p = options.epsilon;
    }

    double log_sum = 0.0;
    for (double p : precisions) log_sum += std::log(p);
    double geo_mean = std::exp(log_sum / static_cast<double>(precisions.size()));

    // Closest reference length, ties toward the shorter one.
    std::size_t r = references[0].size();
    for (const auto& ref : references) {
        auto dist = [&](std::size_t len) {
            return len > c ? len - c : c - len;
        };
        if (dist(ref.size()) < dist(r) || (dist(ref.size()) == dist(r) && ref.size() < r)) {
            r = ref.size();
        }
    }
    double bp = 1.0;
    if (c < r) {
        bp = std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
    }
    return bp * geo_mean;
}

std::size_t CurationReport::rejected_total() const {
    std::size_t total = 0;
    for (const auto& [reason, count] : rejected_by_rule) total += count;
    return total;
}

SelfBleuResult self_bleu_filter(const std::vector<UserQuery>& queries, double threshold,
                                int max_n, std::uint64_t seed) {
    require(threshold > 0.0 && threshold <= 1.0, ErrorKind::validation,
            "self_bleu_filter: threshold must be in (0,1]");
    SelfBleuResult result;
    result.report.input_count = queries.size();
    result.report.self_bleu_threshold = threshold;
    result.report.seed = seed;

    std::vector<std::vector<std::string>> kept_tokens;
    for (const UserQuery& q : queries) {
        std::vector<std::string> tokens = tokenize(q.text);
        bool keep = true;
        if (!kept_tokens.empty() && !tokens.empty()) {
            keep = bleu(tokens, kept_tokens, max_n) <= threshold;
        }
        if (keep) {
            result.kept.push_back(q);
            if (!tokens.empty()) kept_tokens.push_back(std::move(tokens));
        } else {
            UserQuery dropped = q;
            dropped.rejection_reason = RejectionReason::duplicate;
            result.dropped.push_back(std::move(dropped));
            ++result.report.rejected_by_rule[RejectionReason::duplicate];
        }
    }
    result.report.kept_count = result.kept.size();
    return result;
}

RelabelResult relabel_safety(const std::vector<UserQuery>& queries, SafetyJudge& judge,
                             unsigned max_concurrency) {
    for (const UserQuery& q : queries) {
        require(q.safety_label == SafetyLabel::safety_flagged, ErrorKind::validation,
                "relabel_safety: query " + q.id + " is not safety_flagged");
    }

    struct Item {
        UserQuery query;
        std::optional<std::string> audit;
    };
    std::vector<Item> items =
        parallel_map_indexed(queries.size(), max_concurrency, [&](std::size_t i) {
            Item item{queries[i], std::nullopt};
            try {
                if (!judge.is_unsafe(queries[i])) {
                    item.query.safety_label = SafetyLabel::general;
                }
            } catch (const PipelineError& e) {
                item.audit = std::string("judge failed, label kept: ") + e.what();
            }
            return item;
        });

    RelabelResult result;
    for (auto& item : items) {
        if (item.audit) result.audits.push_back({item.query.id, *item.audit});
        result.queries.push_back(std::move(item.query));
    }
    return result;
}

SplitResult split_dataset(const std::vector<UserQuery>& queries, double sft_fraction,
                          std::uint64_t seed) {
    require(sft_fraction > 0.0 && sft_fraction < 1.0, ErrorKind::validation,
            "split_dataset: sft_fraction must be in (0,1)");
    require(queries.size() >= 2, ErrorKind::validation,
            "split_dataset: need at least 2 queries");

    std::vector<std::size_t> strata[2];
    for (std::size_t i = 0; i < queries.size(); ++i) {
        strata[queries[i].safety_label == SafetyLabel::safety_flagged ? 1 : 0].push_back(i);
    }

    std::vector<bool> in_sft(queries.size(), false);
    for (int s = 0; s < 2; ++s) {
        auto& idx = strata[s];
        std::mt19937_64 rng(derive_seed(seed, "split.stratum", static_cast<std::uint64_t>(s)));
        std::shuffle(idx.begin(), idx.end(), rng);
        auto take = static_cast<std::size_t>(
            std::llround(sft_fraction * static_cast<double>(idx.size())));
        for (std::size_t k = 0; k < take && k < idx.size(); ++k) in_sft[idx[k]] = true;
    }

    SplitResult result;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        (in_sft[i] ? result.sft_pool : result.dpo_pool).push_back(queries[i]);
    }
    return result;
}

}  // namespace popt::corpus
