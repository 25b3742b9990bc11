#include "popt/pipeline.hpp"

#include <chrono>
#include <ctime>

#include "popt/mock_backend.hpp"

namespace popt::pipeline {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

train::TrainConfig train_config_from_json(const nlohmann::json& j, train::TrainConfig base) {
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.epochs = j.value("epochs", base.epochs);
    base.warmup_ratio = j.value("warmup_ratio", base.warmup_ratio);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.beta = j.value("beta", base.beta);
    base.adam_beta1 = j.value("adam_beta1", base.adam_beta1);
    base.adam_beta2 = j.value("adam_beta2", base.adam_beta2);
    base.weight_decay = j.value("weight_decay", base.weight_decay);
    base.grad_clip = j.value("grad_clip", base.grad_clip);
    return base;
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
    fs::path path(p);
    if (path.is_absolute()) return path;
    return base_dir / path;
}

}  // namespace

AppConfig load_config(const fs::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
    require(!j.is_discarded(), ErrorKind::validation,
            "config: invalid json: " + path.string());
    fs::path base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");

    AppConfig config;
    config.config_hash = fnv1a64(j.dump());

    config.seed = j.value("seed", config.seed);
    config.backend = j.value("backend", config.backend);
    config.max_concurrency = j.value("max_concurrency", config.max_concurrency);
    config.verbose = j.value("verbose", config.verbose);

    if (j.contains("gateway")) {
        const auto& g = j.at("gateway");
        config.gateway_max_retries = g.value("max_retries", config.gateway_max_retries);
        if (g.contains("http")) {
            const auto& h = g.at("http");
            config.http.host = h.value("host", config.http.host);
            config.http.path = h.value("path", config.http.path);
            config.http.model = h.value("model", config.http.model);
            config.http.credential_env = h.value("credential_env", config.http.credential_env);
            config.http.timeout_seconds = h.value("timeout_seconds", config.http.timeout_seconds);
            config.http.retry.base_delay_ms =
                h.value("backoff_base_ms", config.http.retry.base_delay_ms);
            config.http.retry.factor = h.value("backoff_factor", config.http.retry.factor);
            config.http.retry.jitter = h.value("jitter", config.http.retry.jitter);
        }
    }

    if (j.contains("corpus")) {
        const auto& c = j.at("corpus");
        if (c.contains("blocklist_path")) {
            config.blocklist_path = resolve(base_dir, c.at("blocklist_path").get<std::string>());
            config.rules.keyword_blocklist = corpus::load_blocklist(config.blocklist_path);
        }
        config.rules.min_tokens = c.value("min_tokens", config.rules.min_tokens);
        config.rules.max_tokens = c.value("max_tokens", config.rules.max_tokens);
        config.rules.min_alnum_ratio = c.value("min_alnum_ratio", config.rules.min_alnum_ratio);
        config.self_bleu_threshold = c.value("self_bleu_threshold", config.self_bleu_threshold);
        config.bleu_max_n = c.value("bleu_max_n", config.bleu_max_n);
        config.sft_fraction = c.value("sft_fraction", config.sft_fraction);
    }

    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        config.sampler.k = s.value("k", config.sampler.k);
        config.sampler.temperature = s.value("temperature", config.sampler.temperature);
    }
    config.sampler.seed = config.seed;

    if (j.contains("pref")) {
        const auto& p = j.at("pref");
        config.gap_threshold = p.value("gap_threshold", config.gap_threshold);
        config.all_pairs = p.value("all_pairs", config.all_pairs);
        config.max_pairs_per_query = p.value("max_pairs_per_query", config.max_pairs_per_query);
    }

    if (j.contains("trainer")) {
        const auto& t = j.at("trainer");
        config.trainer.layout.vocab_size = t.value("vocab_size", config.trainer.layout.vocab_size);
        config.trainer.layout.embed_dim = t.value("embed_dim", config.trainer.layout.embed_dim);
        config.trainer.layout.context_window =
            t.value("context_window", config.trainer.layout.context_window);
        config.trainer.layout.hidden_dim =
            t.value("hidden_dim", config.trainer.layout.hidden_dim);
        config.trainer.max_condition_tokens =
            t.value("max_condition_tokens", config.trainer.max_condition_tokens);
        config.trainer.max_target_tokens =
            t.value("max_target_tokens", config.trainer.max_target_tokens);
        config.trainer.sft = {2e-6, 5, 0.1, 64, 0.1, 0.9, 0.999, 1e-8, 0.0, 0.0, 0};
        config.trainer.dpo = {5e-7, 1, 0.1, 16, 0.1, 0.9, 0.999, 1e-8, 0.0, 0.0, 0};
        if (t.contains("sft")) config.trainer.sft = train_config_from_json(t.at("sft"), config.trainer.sft);
        if (t.contains("dpo")) config.trainer.dpo = train_config_from_json(t.at("dpo"), config.trainer.dpo);
    }
    config.trainer.sft.seed = derive_seed(config.seed, "train.sft");
    config.trainer.dpo.seed = derive_seed(config.seed, "train.dpo");

    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        if (e.contains("refusal_patterns_path")) {
            config.refusal_patterns_path =
                resolve(base_dir, e.at("refusal_patterns_path").get<std::string>());
        }
        config.tie_epsilon = e.value("tie_epsilon", config.tie_epsilon);
        config.max_iters = e.value("max_iters", config.max_iters);
    }

    config.rules.validate();
    config.trainer.layout.validate();
    return config;
}

std::unique_ptr<gateway::ChatBackend> make_backend(const AppConfig& config) {
    if (config.backend == "mock") {
        gateway::MockRules rules;
        rules.blocklist = config.rules.keyword_blocklist;
        return std::make_unique<gateway::MockBackend>(std::move(rules));
    }
    if (config.backend == "http") {
        require(!config.http.host.empty(), ErrorKind::validation,
                "config: http backend needs gateway.http.host");
        gateway::HttpBackendConfig http = config.http;
        http.verbose = config.verbose;
        return std::make_unique<gateway::HttpBackend>(std::move(http));
    }
    fail(ErrorKind::validation, "config: unknown backend '" + config.backend + "'");
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

namespace {

std::string utc_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j;
    j["run_id"] = run_id;
    j["command"] = command;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["backend_id"] = backend_id;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["stages"] = nlohmann::json::array();
    for (const auto& stage : stages) {
        nlohmann::json s;
        s["name"] = stage.name;
        s["input_count"] = stage.input_count;
        s["output_count"] = stage.output_count;
        if (!stage.detail.is_null()) s["detail"] = stage.detail;
        j["stages"].push_back(s);
    }
    return j;
}

void RunManifest::write(const fs::path& path) const {
    atomic_write_file(path, to_json().dump(2) + "\n");
}

RunManifest begin_manifest(const std::string& command, const AppConfig& config,
                           const std::string& backend_id) {
    RunManifest manifest;
    manifest.command = command;
    manifest.seed = config.seed;
    manifest.config_hash = to_hex(config.config_hash);
    manifest.backend_id = backend_id;
    manifest.started_at = utc_now();
    manifest.run_id = to_hex(
        derive_seed(config.config_hash, "run." + command, config.seed));
    return manifest;
}

// ---------------------------------------------------------------------------
// Safety judge adapter
// ---------------------------------------------------------------------------

namespace {

class GatewaySafetyJudge : public corpus::SafetyJudge {
public:
    GatewaySafetyJudge(gateway::ChatBackend& backend, std::uint64_t seed, int max_retries)
        : backend_(backend), seed_(seed), max_retries_(max_retries) {}

    bool is_unsafe(const UserQuery& query) override {
        gateway::ChatRequest request;
        request.template_id = gateway::TemplateId::safety_judge;
        request.slots = {{"text", query.text}};
        request.temperature = 0.0;
        request.seed = derive_seed(seed_, "relabel", query.id);
        request.max_retries = max_retries_;
        int level = gateway::parse_safety_level(gateway::complete(request, backend_).content);
        return level >= 3;
    }

private:
    gateway::ChatBackend& backend_;
    std::uint64_t seed_;
    int max_retries_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

RunManifest run_curate(const AppConfig& config, const fs::path& input, const fs::path& out_dir,
                       gateway::ChatBackend& backend) {
    RunManifest manifest = begin_manifest("curate", config, backend.backend_id());
    std::vector<UserQuery> raw = read_queries(input);

    std::set<std::string> ids;
    for (const auto& q : raw) {
        require(ids.insert(q.id).second, ErrorKind::validation,
                "curate: duplicate query id: " + q.id);
    }

    // Rule filter. Safety-flagged queries are kept in the corpus on purpose
    // and re-evaluated by the judge below, so they skip the keyword rule
    // (length and charset rules still apply).
    std::vector<UserQuery> general_in, flagged_in;
    for (const auto& q : raw) {
        (q.safety_label == SafetyLabel::safety_flagged ? flagged_in : general_in).push_back(q);
    }
    corpus::FilterRules flagged_rules = config.rules;
    flagged_rules.keyword_blocklist.clear();
    corpus::RuleFilterResult ruled_general = corpus::rule_filter(general_in, config.rules);
    corpus::RuleFilterResult ruled_flagged = corpus::rule_filter(flagged_in, flagged_rules);

    std::set<std::string> kept_ids;
    std::map<std::string, UserQuery> rejected_by_id;
    for (const auto& q : ruled_general.kept) kept_ids.insert(q.id);
    for (const auto& q : ruled_flagged.kept) kept_ids.insert(q.id);
    for (const auto& q : ruled_general.rejected) rejected_by_id.emplace(q.id, q);
    for (const auto& q : ruled_flagged.rejected) rejected_by_id.emplace(q.id, q);

    corpus::RuleFilterResult ruled;  // merged back into input order
    for (const auto& q : raw) {
        if (kept_ids.count(q.id)) {
            ruled.kept.push_back(q);
        } else {
            ruled.rejected.push_back(rejected_by_id.at(q.id));
        }
    }

    corpus::SelfBleuResult diverse =
        corpus::self_bleu_filter(ruled.kept, config.self_bleu_threshold, config.bleu_max_n,
                                 derive_seed(config.seed, "curate.selfbleu"));

    // Re-evaluate flagged queries; merge verdicts back in input order.
    std::vector<UserQuery> flagged;
    for (const auto& q : diverse.kept) {
        if (q.safety_label == SafetyLabel::safety_flagged) flagged.push_back(q);
    }
    GatewaySafetyJudge judge(backend, config.seed, config.gateway_max_retries);
    corpus::RelabelResult relabeled =
        corpus::relabel_safety(flagged, judge, config.max_concurrency);

    std::vector<UserQuery> curated = diverse.kept;
    std::size_t flag_index = 0;
    std::size_t downgraded = 0;
    for (auto& q : curated) {
        if (q.safety_label != SafetyLabel::safety_flagged) continue;
        const UserQuery& verdict = relabeled.queries[flag_index++];
        if (verdict.safety_label != q.safety_label) ++downgraded;
        q.safety_label = verdict.safety_label;
    }

    corpus::SplitResult split = corpus::split_dataset(curated, config.sft_fraction, config.seed);

    // Overall curation report reconciling every input query.
    corpus::CurationReport report;
    report.input_count = raw.size();
    report.kept_count = curated.size();
    for (const auto& q : ruled.rejected) ++report.rejected_by_rule[*q.rejection_reason];
    for (const auto& [reason, count] : diverse.report.rejected_by_rule) {
        report.rejected_by_rule[reason] += count;
    }
    report.self_bleu_threshold = config.self_bleu_threshold;
    report.seed = config.seed;
    require(report.reconciles(), ErrorKind::verification,
            "curate: report counts do not reconcile");

    std::vector<UserQuery> rejected = ruled.rejected;
    rejected.insert(rejected.end(), diverse.dropped.begin(), diverse.dropped.end());

    fs::create_directories(out_dir);
    write_queries(out_dir / "sft_pool.jsonl", split.sft_pool);
    write_queries(out_dir / "dpo_pool.jsonl", split.dpo_pool);
    write_queries(out_dir / "rejected.jsonl", rejected);

    nlohmann::json report_json;
    report_json["input_count"] = report.input_count;
    report_json["kept_count"] = report.kept_count;
    report_json["self_bleu_threshold"] = report.self_bleu_threshold;
    report_json["seed"] = report.seed;
    for (const auto& [reason, count] : report.rejected_by_rule) {
        report_json["rejected_by_rule"][to_string(reason)] = count;
    }
    report_json["relabel_downgraded"] = downgraded;
    report_json["relabel_audits"] = nlohmann::json::array();
    for (const auto& audit : relabeled.audits) {
        report_json["relabel_audits"].push_back({{"query_id", audit.query_id},
                                                 {"message", audit.message}});
    }
    atomic_write_file(out_dir / "curation_report.json", report_json.dump(2) + "\n");

    manifest.stages.push_back({"rule_filter", raw.size(), ruled.kept.size(), {}});
    manifest.stages.push_back({"self_bleu_filter", ruled.kept.size(), diverse.kept.size(),
                               nlohmann::json{{"threshold", config.self_bleu_threshold}}});
    manifest.stages.push_back({"relabel_safety", flagged.size(), relabeled.queries.size(),
                               nlohmann::json{{"downgraded", downgraded}}});
    manifest.stages.push_back(
        {"split_dataset", curated.size(), split.sft_pool.size() + split.dpo_pool.size(),
         nlohmann::json{{"sft_pool", split.sft_pool.size()},
                        {"dpo_pool", split.dpo_pool.size()}}});
    manifest.finished_at = utc_now();
    manifest.write(out_dir / "curate.manifest.json");
    return manifest;
}

RunManifest run_build_sft(const AppConfig& config, const fs::path& input,
                          const fs::path& out_dir, gateway::ChatBackend& backend) {
    RunManifest manifest = begin_manifest("build-sft", config, backend.backend_id());
    std::vector<UserQuery> pool = read_queries(input);

    sft::SftBuildConfig build_config;
    build_config.seed = config.seed;
    build_config.max_retries = config.gateway_max_retries;
    build_config.max_concurrency = config.max_concurrency;

    sft::SftBuildResult result = sft::build_sft_dataset(pool, backend, build_config);

    fs::create_directories(out_dir);
    write_sft_examples(out_dir / "sft_dataset.jsonl", result.examples);

    std::size_t refined = 0;
    for (const auto& e : result.examples) {
        if (e.lineage == SftLineage::used_refined) ++refined;
    }
    nlohmann::json detail;
    detail["used_refined"] = refined;
    detail["skipped"] = nlohmann::json::array();
    for (const auto& skip : result.skipped) {
        detail["skipped"].push_back({{"query_id", skip.query_id}, {"reason", skip.reason}});
    }
    manifest.stages.push_back({"build_sft_dataset", pool.size(), result.examples.size(), detail});
    manifest.finished_at = utc_now();
    manifest.write(out_dir / "build_sft.manifest.json");
    return manifest;
}

RunManifest run_build_pref(const AppConfig& config, const fs::path& input,
                           const fs::path& out_dir, gateway::ChatBackend& backend) {
    RunManifest manifest = begin_manifest("build-pref", config, backend.backend_id());
    std::vector<UserQuery> pool = read_queries(input);

    pref::SamplerConfig sampler_config = config.sampler;
    sampler_config.seed = derive_seed(config.seed, "pref.sampling");

    pref::GatewaySampler sampler(backend, config.gateway_max_retries);
    pref::StubVideoGenerator generator;
    pref::StubVideoScorer scorer;

    struct PerQuery {
        std::vector<PreferencePair> text_pairs;
        std::vector<PreferencePair> video_pairs;
        std::size_t candidates = 0;
        std::size_t passed = 0;
        std::vector<std::string> audits;
    };
    std::vector<PerQuery> built =
        parallel_map_indexed(pool.size(), config.max_concurrency, [&](std::size_t i) {
            const UserQuery& query = pool[i];
            PerQuery out;

            pref::SampleResult sampled = pref::sample_candidates(query, sampler, sampler_config);
            out.candidates = sampled.candidates.size();
            out.audits = sampled.audits;

            pref::TextPairResult text =
                pref::build_text_pairs(query, sampled.candidates, backend,
                                       derive_seed(config.seed, "pref.text", query.id),
                                       config.gateway_max_retries);
            out.text_pairs = text.pairs;
            out.passed = text.passed.size();
            out.audits.insert(out.audits.end(), text.audits.begin(), text.audits.end());

            pref::ScoreResult scores = pref::score_prompts(query, text.passed, generator, scorer);
            out.audits.insert(out.audits.end(), scores.audits.begin(), scores.audits.end());

            // Join on prompt id; a scorer failure may have dropped a record.
            std::vector<std::pair<PromptRecord, RewardRecord>> scored;
            for (const auto& record : scores.records) {
                for (const auto& prompt : text.passed) {
                    if (prompt.id == record.prompt_id) {
                        scored.emplace_back(prompt, record);
                        break;
                    }
                }
            }
            out.video_pairs =
                pref::build_video_pairs(query, scored, config.gap_threshold, config.all_pairs);

            // Optional per-query cap, text pairs first.
            if (config.max_pairs_per_query > 0) {
                if (out.text_pairs.size() > config.max_pairs_per_query) {
                    out.text_pairs.resize(config.max_pairs_per_query);
                }
                std::size_t room = config.max_pairs_per_query - out.text_pairs.size();
                if (out.video_pairs.size() > room) out.video_pairs.resize(room);
            }
            return out;
        });

    std::vector<PreferencePair> text_pairs, video_pairs;
    std::size_t candidates = 0, passed = 0;
    nlohmann::json audits = nlohmann::json::array();
    for (const auto& b : built) {
        text_pairs.insert(text_pairs.end(), b.text_pairs.begin(), b.text_pairs.end());
        video_pairs.insert(video_pairs.end(), b.video_pairs.begin(), b.video_pairs.end());
        candidates += b.candidates;
        passed += b.passed;
        for (const auto& a : b.audits) audits.push_back(a);
    }
    std::vector<PreferencePair> merged = pref::merge_dpo(text_pairs, video_pairs);

    fs::create_directories(out_dir);
    write_pairs(out_dir / "dpo_pairs.jsonl", merged);

    nlohmann::json detail;
    detail["k"] = sampler_config.k;
    detail["temperature"] = sampler_config.temperature;
    detail["gap_threshold"] = config.gap_threshold;
    detail["sampled_candidates"] = candidates;
    detail["passed_text_check"] = passed;
    detail["text_pairs"] = text_pairs.size();
    detail["video_pairs"] = video_pairs.size();
    detail["audits"] = audits;
    manifest.stages.push_back({"build_pref_pairs", pool.size(), merged.size(), detail});
    manifest.finished_at = utc_now();
    manifest.write(out_dir / "build_pref.manifest.json");
    return manifest;
}

train::TokenSequence to_sequence(const AppConfig& config, const std::string& condition,
                                 const std::string& target) {
    train::TokenSequence seq;
    seq.vocab_size = config.trainer.layout.vocab_size;
    seq.condition_tokens =
        train::encode_text(condition, seq.vocab_size, config.trainer.max_condition_tokens);
    seq.target_tokens =
        train::encode_text(target, seq.vocab_size, config.trainer.max_target_tokens);
    return seq;
}

RunManifest run_train_sft(const AppConfig& config, const fs::path& input,
                          const fs::path& out_dir) {
    RunManifest manifest = begin_manifest("train-sft", config, "local");
    std::vector<SftExample> examples = read_sft_examples(input);

    std::vector<train::TokenSequence> dataset;
    for (const auto& e : examples) {
        train::TokenSequence seq = to_sequence(config, e.query, e.target);
        if (!seq.target_tokens.empty()) dataset.push_back(std::move(seq));
    }
    require(!dataset.empty(), ErrorKind::validation, "train-sft: no usable examples");

    train::ModelParams model = train::ModelParams::init(
        config.trainer.layout, train::ModelRole::policy, derive_seed(config.seed, "model.init"));
    train::SftTrainResult result = train::train_sft(std::move(model), dataset, config.trainer.sft);
    require(!result.diverged, ErrorKind::verification, "train-sft: training diverged");

    fs::create_directories(out_dir);
    train::save_checkpoint(out_dir / "sft_model.ckpt.json", result.model, config.seed,
                           config.trainer.sft);

    nlohmann::json detail;
    detail["steps"] = result.trace.size();
    detail["first_loss"] = result.trace.front().loss;
    detail["final_loss"] = result.trace.back().loss;
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& p : result.trace) {
        trace.push_back({{"step", p.step}, {"loss", p.loss}, {"lr", p.lr}});
    }
    atomic_write_file(out_dir / "train_sft_trace.json", trace.dump() + "\n");

    manifest.stages.push_back({"train_sft", dataset.size(), result.trace.size(), detail});
    manifest.finished_at = utc_now();
    manifest.write(out_dir / "train_sft.manifest.json");
    return manifest;
}

RunManifest run_train_dpo(const AppConfig& config, const fs::path& input,
                          const fs::path& sft_checkpoint, const fs::path& out_dir) {
    RunManifest manifest = begin_manifest("train-dpo", config, "local");
    std::vector<PreferencePair> pairs = read_pairs(input);

    std::vector<train::PreferenceExample> examples;
    for (const auto& pair : pairs) {
        train::PreferenceExample e;
        e.chosen = to_sequence(config, pair.query, pair.chosen);
        e.rejected = to_sequence(config, pair.query, pair.rejected);
        if (!e.chosen.target_tokens.empty() && !e.rejected.target_tokens.empty()) {
            examples.push_back(std::move(e));
        }
    }
    require(!examples.empty(), ErrorKind::validation, "train-dpo: no usable pairs");

    train::Checkpoint sft = train::load_checkpoint(sft_checkpoint);
    require(sft.model.layout.vocab_size == config.trainer.layout.vocab_size,
            ErrorKind::validation, "train-dpo: checkpoint vocab does not match config");
    train::ModelParams policy = sft.model;
    policy.role = train::ModelRole::policy;
    train::ModelParams reference = sft.model.as_reference();

    train::DpoTrainResult result =
        train::train_dpo(std::move(policy), reference, examples, config.trainer.dpo);
    require(!result.diverged, ErrorKind::verification, "train-dpo: training diverged");

    fs::create_directories(out_dir);
    train::save_checkpoint(out_dir / "dpo_model.ckpt.json", result.policy, config.seed,
                           config.trainer.dpo);

    nlohmann::json detail;
    detail["steps"] = result.trace.size();
    detail["positive_margin_fraction"] = result.positive_margin_fraction;
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& p : result.trace) {
        trace.push_back(
            {{"step", p.step}, {"loss", p.loss}, {"lr", p.lr}, {"margin", p.margin_mean}});
    }
    atomic_write_file(out_dir / "train_dpo_trace.json", trace.dump() + "\n");

    manifest.stages.push_back({"train_dpo", examples.size(), result.trace.size(), detail});
    manifest.finished_at = utc_now();
    manifest.write(out_dir / "train_dpo.manifest.json");
    return manifest;
}

RunManifest run_evaluate_alignment(const AppConfig& config, const fs::path& input,
                                   const fs::path& out_dir, gateway::ChatBackend& backend) {
    RunManifest manifest = begin_manifest("evaluate-alignment", config, backend.backend_id());

    struct Item {
        std::string id;
        std::string query;
        std::string prompt;
    };
    std::vector<Item> items = read_jsonl<Item>(input, [](const nlohmann::json& j) {
        Item item;
        item.id = j.value("id", std::string{});
        item.query = j.at("query").get<std::string>();
        item.prompt = j.at("prompt").get<std::string>();
        return item;
    });

    std::vector<std::string> patterns;
    if (!config.refusal_patterns_path.empty()) {
        patterns = eval::load_refusal_patterns(config.refusal_patterns_path);
    }

    std::map<std::string, std::size_t> category_counts;
    std::map<int, std::size_t> level_counts;
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const Item& item = items[i];
        eval::AlignmentVerdict verdict = eval::classify_alignment(
            item.query, item.prompt, backend, patterns,
            derive_seed(config.seed, "eval.align", static_cast<std::uint64_t>(i)));
        eval::SafetyLevel level = eval::score_safety(
            item.prompt, backend, derive_seed(config.seed, "eval.safety", static_cast<std::uint64_t>(i)));
        ++category_counts[to_string(verdict.category)];
        ++level_counts[level.level];

        nlohmann::json row;
        row["id"] = item.id;
        row["category"] = to_string(verdict.category);
        row["rationale"] = verdict.rationale;
        row["safety_level"] = level.level;
        out += row.dump() + "\n";
    }
    fs::create_directories(out_dir);
    atomic_write_file(out_dir / "alignment_verdicts.jsonl", out);

    nlohmann::json summary;
    summary["total"] = items.size();
    for (const auto& [category, count] : category_counts) {
        summary["categories"][category] = count;
        summary["percent"][category] =
            items.empty() ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(items.size());
    }
    for (const auto& [level, count] : level_counts) {
        summary["safety_levels"][std::to_string(level)] = count;
    }
    atomic_write_file(out_dir / "alignment_summary.json", summary.dump(2) + "\n");

    manifest.stages.push_back({"evaluate_alignment", items.size(), items.size(),
                               nlohmann::json{{"categories", summary["categories"]}}});
    manifest.finished_at = utc_now();
    manifest.write(out_dir / "evaluate_alignment.manifest.json");
    return manifest;
}

std::string optimize_query(const AppConfig& config, const std::string& query_text,
                           gateway::ChatBackend& backend) {
    UserQuery query{"adhoc", query_text, "cli", SafetyLabel::general, std::nullopt};
    sft::SftBuildConfig build_config;
    build_config.seed = config.seed;
    build_config.max_retries = config.gateway_max_retries;

    PromptRecord fewshot = sft::generate_initial(query, backend, build_config);
    Critique critique = sft::critique_prompt(query, fewshot, backend, build_config);
    if (!critique.flawed) return fewshot.text;
    return sft::refine_prompt(query, fewshot, critique, backend, build_config).text;
}

eval::Trajectory iterate_query(const AppConfig& config, const std::string& query_text,
                               gateway::ChatBackend& backend, int max_iters) {
    UserQuery query{"adhoc", query_text, "cli", SafetyLabel::general, std::nullopt};
    sft::SftBuildConfig build_config;
    build_config.seed = config.seed;
    build_config.max_retries = config.gateway_max_retries;
    PromptRecord fewshot = sft::generate_initial(query, backend, build_config);
    return eval::iterate_optimize(query, fewshot.text, backend, max_iters, config.seed);
}

}  // namespace popt::pipeline
