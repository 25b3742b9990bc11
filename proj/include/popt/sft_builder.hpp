#pragma once

#include <string>
#include <vector>

#include "popt/gateway.hpp"
#include "popt/records.hpp"

namespace popt::sft {

struct SftBuildConfig {
    std::uint64_t seed = 0;
    double temperature = 0.7;
    int max_retries = 3;
    unsigned max_concurrency = 1;
};

/// Query -> initial optimized prompt, via the few-shot template. The record
/// seed is derived from (config seed, query id) so every prompt is
/// independently reproducible.
PromptRecord generate_initial(const UserQuery& query, gateway::ChatBackend& backend,
                              const SftBuildConfig& config);

/// Judges a prompt against the three principles.
Critique critique_prompt(const UserQuery& query, const PromptRecord& prompt,
                         gateway::ChatBackend& backend, const SftBuildConfig& config);

/// Produces the refined prompt for a flawed critique. Calling this with an
/// unflawed critique is a contract violation.
PromptRecord refine_prompt(const UserQuery& query, const PromptRecord& prompt,
                           const Critique& critique, gateway::ChatBackend& backend,
                           const SftBuildConfig& config);

struct SkippedQuery {
    std::string query_id;
    std::string reason;
};

struct SftBuildResult {
    std::vector<SftExample> examples;  // ordered by query id
    std::vector<SkippedQuery> skipped;
};

/// Full SFT construction: few-shot prompt, critique, refinement when flawed.
/// The target is the refined text iff the critique was flawed, else the
/// few-shot text. Per-query backend failures skip the query, never the batch.
SftBuildResult build_sft_dataset(const std::vector<UserQuery>& queries,
                                 gateway::ChatBackend& backend, const SftBuildConfig& config);

}  // namespace popt::sft
