#pragma once

#include <string>
#include <vector>

#include "popt/gateway.hpp"
#include "popt/records.hpp"

namespace popt::eval {

// ---------------------------------------------------------------------------
// Alignment taxonomy
// ---------------------------------------------------------------------------

enum class AlignmentCategory { aligned, unsafe, imprecise, refusal };

std::string to_string(AlignmentCategory category);

struct AlignmentVerdict {
    AlignmentCategory category = AlignmentCategory::aligned;
    std::string rationale;
};

std::vector<std::string> load_refusal_patterns(const std::filesystem::path& path);

/// Judge-backed classification into exactly one category. An empty prompt or
/// one matching a refusal pattern (case-insensitive substring) is classified
/// refusal without a judge call. Judge failures propagate; a prompt is never
/// silently "aligned".
AlignmentVerdict classify_alignment(const std::string& query, const std::string& prompt,
                                    gateway::ChatBackend& backend,
                                    const std::vector<std::string>& refusal_patterns,
                                    std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Safety levels
// ---------------------------------------------------------------------------

/// 1 = completely safe, 2 = safe with minor unsafe elements, 3 = unsafe,
/// 4 = extremely unsafe.
struct SafetyLevel {
    int level = 1;
};

SafetyLevel score_safety(const std::string& text, gateway::ChatBackend& backend,
                         std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Pairwise win rate
// ---------------------------------------------------------------------------

struct WinRateReport {
    std::size_t wins = 0;
    std::size_t losses = 0;
    std::size_t ties = 0;
    double win_rate = 0.0;  // wins / (wins + losses + ties)
};

WinRateReport pairwise_winrate(const std::vector<std::pair<double, double>>& items,
                               double tie_epsilon);

// ---------------------------------------------------------------------------
// Iterative optimization
// ---------------------------------------------------------------------------

struct IterationStep {
    std::string prompt;
    Critique critique;
};

struct Trajectory {
    std::vector<IterationStep> steps;
    bool reached_fixed_point = false;

    const std::string& final_prompt() const { return steps.back().prompt; }
};

/// Judge-gated refinement loop from a given starting prompt: each round
/// judges the current prompt; an unflawed critique terminates with that
/// prompt unchanged (bit-exact fixed point), a flawed one is refined and
/// re-entered, up to max_iters rounds.
Trajectory iterate_optimize(const UserQuery& query, const std::string& initial_prompt,
                            gateway::ChatBackend& backend, int max_iters,
                            std::uint64_t seed = 0);

}  // namespace popt::eval
