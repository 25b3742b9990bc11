#include "popt/verify.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "popt/corpus.hpp"

namespace popt::verify {

FaultKind fault_from_string(std::string_view name) {
    if (name.empty() || name == "none") return FaultKind::none;
    if (name == "dpo-sign") return FaultKind::dpo_sign;
    if (name == "bleu-smoothing") return FaultKind::bleu_smoothing;
    fail(ErrorKind::validation, "unknown fault kind: " + std::string(name));
}

namespace {

struct CheckContext {
    std::ostream& out;
    FaultKind fault;
    int failures = 0;

    void report(const std::string& name, bool ok, const std::string& note) {
        out << (ok ? "[ok]   " : "[FAIL] ") << name;
        if (!note.empty()) out << " (" << note << ")";
        out << "\n";
        if (!ok) ++failures;
    }
};

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(12) << v;
    return ss.str();
}

// The DPO loss as the implementation computes it, with the optional sign
// perturbation spliced between the margin and the softplus.
double dpo_loss_under_test(double logratio_w, double logratio_l, double beta, FaultKind fault) {
    double margin = train::dpo_margin_from_logratios(logratio_w, logratio_l, beta);
    if (fault == FaultKind::dpo_sign) margin = -margin;
    return train::dpo_loss_from_margin(margin);
}

// High-precision oracle: -ln sigma(beta * delta) in long double arithmetic.
long double dpo_loss_oracle(long double logratio_w, long double logratio_l, long double beta) {
    long double z = beta * (logratio_w - logratio_l);
    long double sig = 1.0L / (1.0L + std::exp(-z));
    return -std::log(sig);
}

void check_dpo_closed_form(CheckContext& ctx) {
    struct Case {
        double lr_w, lr_l, beta;
    };
    const Case cases[] = {
        {0.0, 0.0, 0.1},   {1.0, -1.0, 0.1},  {1.0, -1.0, 1.0},  {3.5, 1.25, 0.1},
        {-2.0, 4.0, 0.5},  {10.0, -10.0, 1.0}, {0.3, 0.2, 0.1},   {-0.75, -0.5, 2.0},
        {6.0, -8.0, 0.25}, {100.0, -100.0, 0.05},
    };
    double worst = 0.0;
    for (const Case& c : cases) {
        double got = dpo_loss_under_test(c.lr_w, c.lr_l, c.beta, ctx.fault);
        double want = static_cast<double>(dpo_loss_oracle(c.lr_w, c.lr_l, c.beta));
        worst = std::max(worst, std::abs(got - want));
    }
    ctx.report("dpo closed form vs long-double oracle", worst <= 1e-9,
               "max abs err " + fmt(worst));

    // Identity policies: the loss is ln 2 for any pair.
    train::ModelLayout layout{8, 4, 2, 6};
    train::ModelParams policy = train::ModelParams::init(layout, train::ModelRole::policy, 7);
    train::ModelParams reference = policy.as_reference();
    train::PreferenceExample pair;
    pair.chosen = {{1, 2}, {3, 4, 5}, 8};
    pair.rejected = {{1, 2}, {6, 7, 0}, 8};
    double margin = train::implicit_reward_margin(policy, reference, pair, 0.1);
    if (ctx.fault == FaultKind::dpo_sign) margin = -margin;
    double loss = train::dpo_loss_from_margin(margin);
    double ln2 = static_cast<double>(std::log(2.0L));
    ctx.report("dpo identity policies = ln 2", std::abs(loss - ln2) <= 1e-9,
               "abs err " + fmt(std::abs(loss - ln2)));
}

void check_gradients(CheckContext& ctx) {
    // Init scale 0.4 keeps every nonzero gradient entry well above the
    // central-difference noise floor at epsilon = 1e-5.
    train::ModelLayout layout{16, 6, 3, 12};
    train::ModelParams model =
        train::ModelParams::init(layout, train::ModelRole::policy, 11, 0.4);

    std::vector<train::TokenSequence> batch = {
        {{1, 2, 3}, {4, 5, 6, 7}, 16},
        {{8}, {9, 10}, 16},
        {{}, {11, 12, 13, 14, 15}, 16},
    };
    double sft_err = train::grad_check(
        [&](const train::ModelParams& m, bool g) { return train::sft_loss(m, batch, g); },
        model, 1e-5);
    ctx.report("sft gradient vs central differences", sft_err < 1e-4,
               "max rel err " + fmt(sft_err) + ", params " + std::to_string(model.param_count()));

    train::ModelParams reference =
        train::ModelParams::init(layout, train::ModelRole::reference, 13, 0.4);
    std::vector<train::PreferenceExample> pairs = {
        {{{1, 2}, {3, 4, 5}, 16}, {{1, 2}, {6, 7}, 16}},
        {{{9}, {10, 11}, 16}, {{9}, {12, 13, 14}, 16}},
    };
    double dpo_err = train::grad_check(
        [&](const train::ModelParams& m, bool g) {
            return train::dpo_loss(m, reference, pairs, 0.1, g);
        },
        model, 1e-5);
    ctx.report("dpo gradient vs central differences", dpo_err < 1e-4,
               "max rel err " + fmt(dpo_err));
}

void check_sft_sanity(CheckContext& ctx) {
    // Zero parameters give an exactly uniform next-token distribution.
    train::ModelLayout layout = memorization_layout();
    train::ModelParams uniform = train::ModelParams::zeros(layout, train::ModelRole::policy);
    std::vector<train::TokenSequence> probe = {
        {{1, 2, 3}, {4, 5, 6}, layout.vocab_size},
        {{}, {7}, layout.vocab_size},
    };
    double got = train::sft_loss(uniform, probe).value;
    double want = std::log(static_cast<double>(layout.vocab_size));
    ctx.report("uniform model loss = ln V", std::abs(got - want) <= 1e-9,
               "abs err " + fmt(std::abs(got - want)));

    auto corpus = make_memorization_corpus();
    train::ModelParams model =
        train::ModelParams::init(layout, train::ModelRole::policy, 17);
    train::SftTrainResult trained =
        train::train_sft(std::move(model), corpus, memorization_train_config());
    double final_nll = train::sft_loss(trained.model, corpus).value;
    ctx.report("sft memorization mean NLL < 0.1", !trained.diverged && final_nll < 0.1,
               "final NLL " + fmt(final_nll));
}

void check_dpo_learning(CheckContext& ctx) {
    auto pairs = make_marker_pairs();
    train::ModelLayout layout = marker_layout();
    train::ModelParams sft_model =
        train::ModelParams::init(layout, train::ModelRole::policy, 23);
    train::ModelParams reference = sft_model.as_reference();
    std::vector<double> reference_before = reference.values;

    train::DpoTrainResult result =
        train::train_dpo(sft_model, reference, pairs, marker_train_config());

    bool reference_intact = reference.values == reference_before;
    ctx.report("dpo learning: positive margin on >= 90% of pairs",
               !result.diverged && result.positive_margin_fraction >= 0.9,
               "fraction " + fmt(result.positive_margin_fraction));
    ctx.report("dpo learning: reference bit-unchanged", reference_intact, "");
}

// ---------------------------------------------------------------------------
// Curation oracle: an independent BLEU (plain nested scans, no shared code
// with corpus::bleu) replaying the greedy self-BLEU rule.
// ---------------------------------------------------------------------------

double oracle_bleu(const std::vector<std::string>& cand,
                   const std::vector<std::vector<std::string>>& refs, int max_n) {
    int orders = std::min<int>(max_n, static_cast<int>(cand.size()));
    auto same_gram = [&](const std::vector<std::string>& a, int i,
                         const std::vector<std::string>& b, int k, int n) {
        for (int d = 0; d < n; ++d) {
            if (a[static_cast<std::size_t>(i + d)] != b[static_cast<std::size_t>(k + d)]) {
                return false;
            }
        }
        return true;
    };

    std::vector<double> precisions;
    for (int n = 1; n <= orders; ++n) {
        int total = static_cast<int>(cand.size()) - n + 1;
        long clipped = 0;
        for (int i = 0; i < total; ++i) {
            // Process each distinct n-gram once, at its first occurrence.
            bool first = true;
            for (int k = 0; k < i; ++k) {
                if (same_gram(cand, i, cand, k, n)) {
                    first = false;
                    break;
                }
            }
            if (!first) continue;

            int cand_count = 0;
            for (int k = 0; k < total; ++k) {
                if (same_gram(cand, i, cand, k, n)) ++cand_count;
            }
            int best_ref = 0;
            for (const auto& ref : refs) {
                int count = 0;
                for (int k = 0; k + n <= static_cast<int>(ref.size()); ++k) {
                    if (same_gram(cand, i, ref, k, n)) ++count;
                }
                best_ref = std::max(best_ref, count);
            }
            clipped += std::min(cand_count, best_ref);
        }
        precisions.push_back(static_cast<double>(clipped) / static_cast<double>(total));
    }

    if (precisions[0] == 0.0) return 0.0;
    double log_sum = 0.0;
    for (double p : precisions) log_sum += std::log(p == 0.0 ? 1e-9 : p);
    double geo = std::exp(log_sum / static_cast<double>(precisions.size()));

    std::size_t c = cand.size();
    std::size_t r = refs[0].size();
    for (const auto& ref : refs) {
        auto dist = [&](std::size_t len) { return len > c ? len - c : c - len; };
        if (dist(ref.size()) < dist(r) || (dist(ref.size()) == dist(r) && ref.size() < r)) {
            r = ref.size();
        }
    }
    double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
    return bp * geo;
}

void check_curation(CheckContext& ctx) {
    corpus::BleuOptions options;
    options.smooth_zero_unigram = ctx.fault == FaultKind::bleu_smoothing;

    double exact = corpus::bleu({"a", "b", "c", "d"}, {{"a", "b", "c", "d"}}, 4, options);
    double disjoint = corpus::bleu({"a", "b"}, {{"c", "d"}}, 1, options);
    double partial =
        corpus::bleu({"the", "cat", "sat"}, {{"the", "cat", "ran"}}, 2, options);
    bool hand_ok = exact == 1.0 && disjoint == 0.0 &&
                   std::abs(partial - std::sqrt(1.0 / 3.0)) <= 1e-6;
    ctx.report("bleu hand-computed values", hand_ok,
               "exact " + fmt(exact) + ", disjoint " + fmt(disjoint) + ", partial " +
                   fmt(partial));

    // 20 near-duplicates + 30 distinct queries; the kept set must equal a
    // brute-force replay of the greedy rule using the independent oracle.
    std::vector<UserQuery> corpus_queries;
    for (int i = 0; i < 20; ++i) {
        UserQuery q;
        q.id = "dup" + std::to_string(i);
        q.text = "a small fluffy kitten plays with a ball of wool on the carpet";
        if (i % 4 == 1) q.text += " slowly";
        if (i % 4 == 2) q.text = "a small fluffy kitten plays with a ball of wool on the rug";
        if (i % 4 == 3) q.text += " at home";
        corpus_queries.push_back(q);
    }
    const char* subjects[] = {"tram", "glacier", "violin", "lighthouse", "bakery", "comet"};
    const char* actions[] = {"glides", "melts", "resonates", "blinks", "opens"};
    for (int i = 0; i < 30; ++i) {
        UserQuery q;
        q.id = "distinct" + std::to_string(i);
        q.text = std::string("the ") + subjects[i % 6] + " " + actions[i % 5] + " scene number " +
                 std::to_string(100 + 17 * i);
        corpus_queries.push_back(q);
    }

    const double threshold = 0.4;
    const int max_n = 4;
    corpus::SelfBleuResult got =
        corpus::self_bleu_filter(corpus_queries, threshold, max_n, 1);

    std::vector<std::string> oracle_kept;
    std::vector<std::vector<std::string>> oracle_tokens;
    for (const auto& q : corpus_queries) {
        auto tokens = tokenize(q.text);
        bool keep = oracle_tokens.empty() || tokens.empty() ||
                    oracle_bleu(tokens, oracle_tokens, max_n) <= threshold;
        if (keep) {
            oracle_kept.push_back(q.id);
            if (!tokens.empty()) oracle_tokens.push_back(tokens);
        }
    }
    std::vector<std::string> got_ids;
    for (const auto& q : got.kept) got_ids.push_back(q.id);
    bool replay_ok = got_ids == oracle_kept && got.report.reconciles();
    ctx.report("self-bleu greedy filter vs brute-force replay", replay_ok,
               "kept " + std::to_string(got_ids.size()) + "/" +
                   std::to_string(corpus_queries.size()) + ", oracle " +
                   std::to_string(oracle_kept.size()));
}

}  // namespace

int run_verify(const VerifyOptions& options, std::ostream& out) {
    CheckContext ctx{out, options.fault};
    check_dpo_closed_form(ctx);
    check_gradients(ctx);
    check_sft_sanity(ctx);
    check_dpo_learning(ctx);
    check_curation(ctx);
    out << (ctx.failures == 0 ? "verify: all checks passed\n"
                              : "verify: " + std::to_string(ctx.failures) + " check(s) failed\n");
    return ctx.failures;
}

// ---------------------------------------------------------------------------
// Desk-scale constructions
// ---------------------------------------------------------------------------

train::ModelLayout memorization_layout() { return {32, 8, 4, 48}; }

train::TrainConfig memorization_train_config() {
    train::TrainConfig config;
    config.learning_rate = 0.02;
    config.epochs = 400;
    config.warmup_ratio = 0.1;
    config.batch_size = 25;
    config.seed = 4242;
    return config;
}

std::vector<train::TokenSequence> make_memorization_corpus(std::size_t count) {
    std::vector<train::TokenSequence> corpus;
    corpus.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        train::TokenSequence seq;
        seq.vocab_size = 32;
        seq.condition_tokens = {static_cast<int>(i / 32), static_cast<int>(i % 32), 7};
        int prev = static_cast<int>(i % 32);
        for (int j = 0; j < 8; ++j) {
            int t = static_cast<int>((17 * i + 11 * static_cast<std::size_t>(j + 1) +
                                      7 * static_cast<std::size_t>(prev)) %
                                     32);
            seq.target_tokens.push_back(t);
            prev = t;
        }
        corpus.push_back(std::move(seq));
    }
    return corpus;
}

train::ModelLayout marker_layout() { return {16, 6, 3, 24}; }

train::TrainConfig marker_train_config() {
    train::TrainConfig config;
    config.learning_rate = 0.05;
    config.epochs = 30;
    config.warmup_ratio = 0.1;
    config.batch_size = 32;
    config.beta = 0.1;
    config.seed = 777;
    return config;
}

std::vector<train::PreferenceExample> make_marker_pairs(std::size_t count) {
    std::vector<train::PreferenceExample> pairs;
    pairs.reserve(count);
    const int vocab = 16;
    const int marker = vocab - 1;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<int> condition = {static_cast<int>(i % 16), static_cast<int>((i / 16) % 16)};
        std::vector<int> base;
        for (int j = 0; j < 5; ++j) {
            base.push_back(static_cast<int>((5 * (i + 1) * static_cast<std::size_t>(j + 3) + 7) %
                                            14));
        }
        train::PreferenceExample pair;
        pair.chosen.vocab_size = vocab;
        pair.chosen.condition_tokens = condition;
        pair.chosen.target_tokens = base;
        pair.chosen.target_tokens.push_back(marker);

        pair.rejected.vocab_size = vocab;
        pair.rejected.condition_tokens = condition;
        pair.rejected.target_tokens = base;
        pair.rejected.target_tokens.push_back(static_cast<int>((i * 7 + 3) % 14));
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

}  // namespace popt::verify
