#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "popt/mock_backend.hpp"
#include "popt/records.hpp"

namespace popt::testsupport {

inline std::filesystem::path fixture_dir() {
    if (const char* env = std::getenv("POPT_FIXTURES")) return env;
    std::filesystem::path fallback = "tests/fixtures";
    if (std::filesystem::exists(fallback)) return fallback;
    throw std::runtime_error("POPT_FIXTURES not set and tests/fixtures not found");
}

inline UserQuery make_query(std::string id, std::string text,
                            SafetyLabel label = SafetyLabel::general) {
    UserQuery q;
    q.id = std::move(id);
    q.text = std::move(text);
    q.source = "test";
    q.safety_label = label;
    return q;
}

inline std::set<std::string> test_blocklist() {
    return {"gore", "blood", "torture", "massacre", "explicit", "nude", "corpse"};
}

inline gateway::MockRules test_rules() {
    gateway::MockRules rules;
    rules.blocklist = test_blocklist();
    return rules;
}

// ---------------------------------------------------------------------------
// Independent BLEU oracle: naive positional scans, shares no code with
// corpus::bleu. Follows the same pinned convention (uniform weights over
// orders up to min(max_n, |candidate|), clipped counts, epsilon smoothing of
// zero higher-order precisions when the unigram precision is nonzero, and
// brevity penalty against the closest reference length).
// ---------------------------------------------------------------------------

inline double oracle_bleu(const std::vector<std::string>& cand,
                          const std::vector<std::vector<std::string>>& refs, int max_n) {
    auto gram_eq = [](const std::vector<std::string>& a, std::size_t i,
                      const std::vector<std::string>& b, std::size_t k, int n) {
        for (int d = 0; d < n; ++d) {
            if (a[i + static_cast<std::size_t>(d)] != b[k + static_cast<std::size_t>(d)]) {
                return false;
            }
        }
        return true;
    };

    const int orders = std::min<int>(max_n, static_cast<int>(cand.size()));
    std::vector<double> precisions;
    for (int n = 1; n <= orders; ++n) {
        const std::size_t total = cand.size() - static_cast<std::size_t>(n) + 1;
        long clipped = 0;
        for (std::size_t i = 0; i < total; ++i) {
            bool first = true;
            for (std::size_t k = 0; k < i; ++k) {
                if (gram_eq(cand, i, cand, k, n)) {
                    first = false;
                    break;
                }
            }
            if (!first) continue;
            long in_cand = 0;
            for (std::size_t k = 0; k < total; ++k) {
                if (gram_eq(cand, i, cand, k, n)) ++in_cand;
            }
            long best = 0;
            for (const auto& ref : refs) {
                if (ref.size() < static_cast<std::size_t>(n)) continue;
                long count = 0;
                for (std::size_t k = 0; k + static_cast<std::size_t>(n) <= ref.size(); ++k) {
                    if (gram_eq(cand, i, ref, k, n)) ++count;
                }
                best = std::max(best, count);
            }
            clipped += std::min(in_cand, best);
        }
        precisions.push_back(static_cast<double>(clipped) / static_cast<double>(total));
    }

    if (precisions[0] == 0.0) return 0.0;
    double log_sum = 0.0;
    for (double p : precisions) log_sum += std::log(p == 0.0 ? 1e-9 : p);
    const double geo = std::exp(log_sum / static_cast<double>(precisions.size()));

    std::size_t c = cand.size();
    std::size_t r = refs.front().size();
    for (const auto& ref : refs) {
        auto dist = [&](std::size_t len) { return len > c ? len - c : c - len; };
        if (dist(ref.size()) < dist(r) || (dist(ref.size()) == dist(r) && ref.size() < r)) {
            r = ref.size();
        }
    }
    const double bp =
        c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
    return bp * geo;
}

}  // namespace popt::testsupport
