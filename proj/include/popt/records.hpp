#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "popt/common.hpp"

namespace popt {

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

enum class SafetyLabel { general, safety_flagged };

enum class RejectionReason { keyword, charset, length, duplicate };

struct UserQuery {
    std::string id;
    std::string text;
    std::string source;
    SafetyLabel safety_label = SafetyLabel::general;
    std::optional<RejectionReason> rejection_reason;
};

std::string to_string(SafetyLabel label);
SafetyLabel safety_label_from_string(std::string_view s);
std::string to_string(RejectionReason reason);
RejectionReason rejection_reason_from_string(std::string_view s);

// ---------------------------------------------------------------------------
// Prompts and critiques
// ---------------------------------------------------------------------------

enum class PromptOrigin { fewshot, refined, sampled };

struct PromptRecord {
    std::string id;
    std::string query_id;
    std::string text;
    PromptOrigin origin = PromptOrigin::fewshot;
    double temperature = 0.0;
    std::uint64_t seed = 0;
    std::optional<std::string> parent_id;  // set iff origin == refined
};

std::string to_string(PromptOrigin origin);

struct PrincipleVerdict {
    bool pass = true;
    std::string issue;
};

/// Per-principle judge verdicts for one (query, prompt) pair. `flawed` is
/// always derived from the three verdicts, never trusted from raw text.
struct Critique {
    std::string prompt_id;
    PrincipleVerdict harmless;
    PrincipleVerdict accurate;
    PrincipleVerdict helpful;
    bool flawed = false;

    static bool derive_flawed(const Critique& c) {
        return !c.harmless.pass || !c.accurate.pass || !c.helpful.pass;
    }
};

// ---------------------------------------------------------------------------
// SFT dataset rows
// ---------------------------------------------------------------------------

enum class SftLineage { kept_original, used_refined };

std::string to_string(SftLineage lineage);
SftLineage sft_lineage_from_string(std::string_view s);

struct SftExample {
    std::string query_id;
    std::string query;
    std::string target;
    SftLineage lineage = SftLineage::kept_original;
    Critique critique;
};

// ---------------------------------------------------------------------------
// Preference pairs
// ---------------------------------------------------------------------------

enum class PairChannel { text, video };

std::string to_string(PairChannel channel);
PairChannel pair_channel_from_string(std::string_view s);

struct RewardRecord {
    std::string prompt_id;
    double score = 0.0;
    std::string scorer_id;
};

struct PreferencePair {
    std::string query_id;
    std::string query;
    std::string chosen;
    std::string rejected;
    PairChannel channel = PairChannel::text;
    std::optional<double> reward_chosen;
    std::optional<double> reward_rejected;
    std::optional<double> reward_gap;  // present iff channel == video
};

// ---------------------------------------------------------------------------
// JSON (de)serialization. One record per line, UTF-8, keys sorted by the
// json library, so identical records serialize byte-identically.
// ---------------------------------------------------------------------------

nlohmann::json to_json(const UserQuery& q);
UserQuery query_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Critique& c);
Critique critique_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SftExample& e);
SftExample sft_example_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PreferencePair& p);
PreferencePair pair_from_json(const nlohmann::json& j);

template <typename T, typename FromJson>
std::vector<T> read_jsonl(const std::filesystem::path& path, FromJson&& from_json) {
    std::vector<T> out;
    std::size_t lineno = 0;
    for (const auto& line : read_lines(path)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        require(!j.is_discarded(), ErrorKind::validation,
                path.string() + ":" + std::to_string(lineno) + ": invalid json");
        out.push_back(from_json(j));
    }
    return out;
}

template <typename T, typename ToJson>
std::string to_jsonl(const std::vector<T>& records, ToJson&& to_json_fn) {
    std::string out;
    for (const auto& r : records) {
        out += to_json_fn(r).dump();
        out += '\n';
    }
    return out;
}

std::vector<UserQuery> read_queries(const std::filesystem::path& path);
void write_queries(const std::filesystem::path& path, const std::vector<UserQuery>& qs);

std::vector<SftExample> read_sft_examples(const std::filesystem::path& path);
void write_sft_examples(const std::filesystem::path& path, const std::vector<SftExample>& es);

std::vector<PreferencePair> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& ps);

}  // namespace popt
