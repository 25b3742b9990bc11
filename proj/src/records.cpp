#include "popt/records.hpp"

namespace popt {

std::string to_string(SafetyLabel label) {
    return label == SafetyLabel::general ? "general" : "safety_flagged";
}

SafetyLabel safety_label_from_string(std::string_view s) {
    if (s == "general") return SafetyLabel::general;
    if (s == "safety_flagged") return SafetyLabel::safety_flagged;
    fail(ErrorKind::validation, "unknown safety_label: " + std::string(s));
}

std::string to_string(RejectionReason reason) {
    switch (reason) {
        case RejectionReason::keyword: return "keyword";
        case RejectionReason::charset: return "charset";
        case RejectionReason::length: return "length";
        case RejectionReason::duplicate: return "duplicate";
    }
    return "length";
}

RejectionReason rejection_reason_from_string(std::string_view s) {
    if (s == "keyword") return RejectionReason::keyword;
    if (s == "charset") return RejectionReason::charset;
    if (s == "length") return RejectionReason::length;
    if (s == "duplicate") return RejectionReason::duplicate;
    fail(ErrorKind::validation, "unknown rejection_reason: " + std::string(s));
}

std::string to_string(PromptOrigin origin) {
    switch (origin) {
        case PromptOrigin::fewshot: return "fewshot";
        case PromptOrigin::refined: return "refined";
        case PromptOrigin::sampled: return "sampled";
    }
    return "fewshot";
}

std::string to_string(SftLineage lineage) {
    return lineage == SftLineage::kept_original ? "kept_original" : "used_refined";
}

SftLineage sft_lineage_from_string(std::string_view s) {
    if (s == "kept_original") return SftLineage::kept_original;
    if (s == "used_refined") return SftLineage::used_refined;
    fail(ErrorKind::validation, "unknown lineage: " + std::string(s));
}

std::string to_string(PairChannel channel) {
    return channel == PairChannel::text ? "text" : "video";
}

PairChannel pair_channel_from_string(std::string_view s) {
    if (s == "text") return PairChannel::text;
    if (s == "video") return PairChannel::video;
    fail(ErrorKind::validation, "unknown channel: " + std::string(s));
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const UserQuery& q) {
    nlohmann::json j;
    j["id"] = q.id;
    j["text"] = q.text;
    j["source"] = q.source;
    j["safety_label"] = to_string(q.safety_label);
    if (q.rejection_reason) j["rejection_reason"] = to_string(*q.rejection_reason);
    return j;
}

static std::string get_string(const nlohmann::json& j, const char* key) {
    require(j.contains(key) && j.at(key).is_string(), ErrorKind::validation,
            std::string("record missing string field: ") + key);
    return j.at(key).get<std::string>();
}

UserQuery query_from_json(const nlohmann::json& j) {
    UserQuery q;
    q.id = get_string(j, "id");
    q.text = get_string(j, "text");
    q.source = j.value("source", std::string{});
    q.safety_label = safety_label_from_string(j.value("safety_label", "general"));
    if (j.contains("rejection_reason")) {
        q.rejection_reason =
            rejection_reason_from_string(j.at("rejection_reason").get<std::string>());
    }
    return q;
}

static nlohmann::json verdict_to_json(const PrincipleVerdict& v) {
    return nlohmann::json{{"verdict", v.pass ? "pass" : "fail"}, {"issue", v.issue}};
}

static PrincipleVerdict verdict_from_json(const nlohmann::json& j) {
    PrincipleVerdict v;
    v.pass = get_string(j, "verdict") == "pass";
    v.issue = j.value("issue", std::string{});
    return v;
}

nlohmann::json to_json(const Critique& c) {
    nlohmann::json j;
    j["prompt_id"] = c.prompt_id;
    j["harmless"] = verdict_to_json(c.harmless);
    j["accurate"] = verdict_to_json(c.accurate);
    j["helpful"] = verdict_to_json(c.helpful);
    j["flawed"] = c.flawed;
    return j;
}

Critique critique_from_json(const nlohmann::json& j) {
    Critique c;
    c.prompt_id = j.value("prompt_id", std::string{});
    c.harmless = verdict_from_json(j.at("harmless"));
    c.accurate = verdict_from_json(j.at("accurate"));
    c.helpful = verdict_from_json(j.at("helpful"));
    c.flawed = Critique::derive_flawed(c);
    return c;
}

nlohmann::json to_json(const SftExample& e) {
    nlohmann::json j;
    j["query_id"] = e.query_id;
    j["query"] = e.query;
    j["target"] = e.target;
    j["lineage"] = to_string(e.lineage);
    j["critique"] = to_json(e.critique);
    return j;
}

SftExample sft_example_from_json(const nlohmann::json& j) {
    SftExample e;
    e.query_id = get_string(j, "query_id");
    e.query = get_string(j, "query");
    e.target = get_string(j, "target");
    e.lineage = sft_lineage_from_string(get_string(j, "lineage"));
    e.critique = critique_from_json(j.at("critique"));
    return e;
}

nlohmann::json to_json(const PreferencePair& p) {
    nlohmann::json j;
    j["query_id"] = p.query_id;
    j["query"] = p.query;
    j["chosen"] = p.chosen;
    j["rejected"] = p.rejected;
    j["channel"] = to_string(p.channel);
    if (p.reward_chosen) j["reward_chosen"] = *p.reward_chosen;
    if (p.reward_rejected) j["reward_rejected"] = *p.reward_rejected;
    if (p.reward_gap) j["reward_gap"] = *p.reward_gap;
    return j;
}

PreferencePair pair_from_json(const nlohmann::json& j) {
    PreferencePair p;
    p.query_id = get_string(j, "query_id");
    p.query = get_string(j, "query");
    p.chosen = get_string(j, "chosen");
    p.rejected = get_string(j, "rejected");
    p.channel = pair_channel_from_string(get_string(j, "channel"));
    if (j.contains("reward_chosen")) p.reward_chosen = j.at("reward_chosen").get<double>();
    if (j.contains("reward_rejected")) p.reward_rejected = j.at("reward_rejected").get<double>();
    if (j.contains("reward_gap")) p.reward_gap = j.at("reward_gap").get<double>();
    return p;
}

// ---------------------------------------------------------------------------

std::vector<UserQuery> read_queries(const std::filesystem::path& path) {
    return read_jsonl<UserQuery>(path, [](const nlohmann::json& j) { return query_from_json(j); });
}

void write_queries(const std::filesystem::path& path, const std::vector<UserQuery>& qs) {
    atomic_write_file(path, to_jsonl(qs, [](const UserQuery& q) { return to_json(q); }));
}

std::vector<SftExample> read_sft_examples(const std::filesystem::path& path) {
    return read_jsonl<SftExample>(path,
                                  [](const nlohmann::json& j) { return sft_example_from_json(j); });
}

void write_sft_examples(const std::filesystem::path& path, const std::vector<SftExample>& es) {
    atomic_write_file(path, to_jsonl(es, [](const SftExample& e) { return to_json(e); }));
}

std::vector<PreferencePair> read_pairs(const std::filesystem::path& path) {
    return read_jsonl<PreferencePair>(path,
                                      [](const nlohmann::json& j) { return pair_from_json(j); });
}

void write_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& ps) {
    atomic_write_file(path, to_jsonl(ps, [](const PreferencePair& p) { return to_json(p); }));
}

}  // namespace popt
