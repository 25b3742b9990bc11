#include "popt/mock_backend.hpp"

#include <algorithm>

namespace popt::gateway {

std::set<std::string> MockRules::default_stopwords() {
    return {"a",  "an",  "the", "of",   "in",   "on",    "at",   "to",   "and",
            "or", "with", "for", "is",   "are",  "was",   "were", "be",   "being",
            "been", "it", "its", "this", "that", "there", "very", "really"};
}

std::vector<std::string> MockRules::required_content_words(std::string_view query) const {
    std::vector<std::string> out;
    for (const auto& w : word_tokens(query)) {
        if (stopwords.count(w) || blocklist.count(w)) continue;
        if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
    }
    return out;
}

bool MockRules::omits_content_word(std::uint64_t seed, std::string_view query) const {
    if (required_content_words(query).empty()) return false;
    return derive_seed(seed, "mock.omit", query) % 3 == 0;
}

namespace {

// Removes every occurrence of `word` as a whole word token (case-insensitive)
// and collapses the surrounding whitespace.
std::string remove_word(std::string_view text, const std::string& word) {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_word_byte(c)) {
            std::size_t start = i;
            while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
            std::string run(text.substr(start, i - start));
            if (to_lower(run) != word) out += run;
        } else {
            out.push_back(static_cast<char>(c));
            ++i;
        }
    }
    // Collapse runs of spaces left behind by removed words.
    std::string collapsed;
    for (char ch : out) {
        if (ch == ' ' && !collapsed.empty() && collapsed.back() == ' ') continue;
        collapsed.push_back(ch);
    }
    return trim(collapsed);
}

const std::vector<std::string>& openers() {
    static const std::vector<std::string> v = {
        "A cinematic rendering of", "A detailed scene of", "A vivid depiction of",
        "A carefully composed shot of", "An atmospheric sequence showing",
    };
    return v;
}

const std::vector<std::string>& style_sentences() {
    static const std::vector<std::string> v = {
        "Soft golden-hour light washes over the scene with warm, natural tones.",
        "The camera tracks slowly forward, keeping the subject centered in frame.",
        "Shallow depth of field isolates the subject against a gently blurred background.",
        "Cool ambient light and drifting haze give the frame a calm, cinematic mood.",
        "A wide establishing angle settles into a steady, unhurried push-in.",
        "Rich color grading with deep shadows lends the footage a filmic texture.",
        "Fine surface details stay crisp as gentle motion carries through the shot.",
    };
    return v;
}

}  // namespace

std::string MockRules::elaborate(std::string_view query, std::uint64_t seed) const {
    std::string core = trim(query);
    if (omits_content_word(seed, query)) {
        auto required = required_content_words(query);
        core = remove_word(core, required.back());
    }

    std::uint64_t h = derive_seed(seed, "mock.elaborate", query);
    const auto& ops = openers();
    const auto& styles = style_sentences();

    std::string prompt = ops[h % ops.size()] + " " + core + ".";
    std::size_t sentence_count = splitmix64(h) % 3;
    std::size_t style_index = splitmix64(h ^ 0xabcdef) % styles.size();
    for (std::size_t s = 0; s < sentence_count; ++s) {
        prompt += " " + styles[(style_index + s * 2) % styles.size()];
    }
    return prompt;
}

Critique MockRules::critique_of(std::string_view query, std::string_view prompt) const {
    Critique c;

    std::vector<std::string> blocked;
    for (const auto& w : word_tokens(prompt)) {
        if (blocklist.count(w) && std::find(blocked.begin(), blocked.end(), w) == blocked.end()) {
            blocked.push_back(w);
        }
    }
    if (blocked.empty()) {
        c.harmless = {true, "ok"};
    } else {
        c.harmless = {false, "contains blocked terms: " + join(blocked, ", ")};
    }

    std::vector<std::string> missing;
    for (const auto& w : required_content_words(query)) {
        if (!contains_token(prompt, w)) missing.push_back(w);
    }
    if (missing.empty()) {
        c.accurate = {true, "ok"};
    } else {
        c.accurate = {false, "missing content: " + join(missing, ", ")};
    }

    c.helpful = {true, "ok"};
    c.flawed = Critique::derive_flawed(c);
    return c;
}

std::string MockRules::refined_of(std::string_view query, std::string_view prompt) const {
    Critique c = critique_of(query, prompt);
    require(c.flawed, ErrorKind::validation, "refined_of: prompt is not flawed");

    if (!c.harmless.pass) {
        std::string cleaned(prompt);
        for (const auto& w : word_tokens(prompt)) {
            if (blocklist.count(w)) cleaned = remove_word(cleaned, w);
        }
        return cleaned;
    }

    std::vector<std::string> missing;
    for (const auto& w : required_content_words(query)) {
        if (!contains_token(prompt, w)) missing.push_back(w);
    }
    return trim(std::string(prompt)) + " The scene prominently features " +
           join(missing, " and ") + ".";
}

std::string MockRules::alignment_of(std::string_view query, std::string_view prompt) const {
    Critique c = critique_of(query, prompt);
    if (!c.harmless.pass) return "unsafe";
    if (!c.accurate.pass) return "imprecise";
    return "aligned";
}

int MockRules::safety_level_of(std::string_view text) const {
    std::size_t hits = 0;
    bool minor = false;
    for (const auto& w : word_tokens(text)) {
        if (blocklist.count(w)) ++hits;
        if (minor_unsafe.count(w)) minor = true;
    }
    if (hits >= 2) return 4;
    if (hits == 1) return 3;
    return minor ? 2 : 1;
}

ChatResponse MockBackend::complete(const ChatRequest& request) {
    std::uint64_t seed = request.seed.value_or(0);
    ChatResponse response;
    response.backend_id = backend_id();
    response.attempt_count = 1;

    switch (request.template_id) {
        case TemplateId::fewshot_optimize: {
            const std::string* query = request.find_slot("query");
            require(query != nullptr, ErrorKind::validation, "mock: missing query slot");
            response.content = "Optimized prompt:\n" + std::string(kPromptFenceOpen) + "\n" +
                               rules_.elaborate(*query, seed) + "\n" + kPromptFenceClose + "\n";
            break;
        }
        case TemplateId::critique_refine: {
            const std::string* query = request.find_slot("query");
            const std::string* prompt = request.find_slot("prompt");
            require(query && prompt, ErrorKind::validation, "mock: missing query/prompt slot");
            Critique c = rules_.critique_of(*query, *prompt);
            auto line = [](const char* name, const PrincipleVerdict& v) {
                return std::string(name) + ": " + (v.pass ? "PASS" : "FAIL") +
                       kIssueSeparator + v.issue + "\n";
            };
            response.content = line("HARMLESS", c.harmless) + line("ACCURATE", c.accurate) +
                               line("HELPFUL", c.helpful);
            if (c.flawed) {
                response.content += std::string(kPromptFenceOpen) + "\n" +
                                    rules_.refined_of(*query, *prompt) + "\n" +
                                    kPromptFenceClose + "\n";
            }
            break;
        }
        case TemplateId::alignment_judge: {
            const std::string* query = request.find_slot("query");
            const std::string* prompt = request.find_slot("prompt");
            require(query && prompt, ErrorKind::validation, "mock: missing query/prompt slot");
            std::string category = rules_.alignment_of(*query, *prompt);
            response.content = "VERDICT: " + category + "\nREASON: mock rule decision\n";
            break;
        }
        case TemplateId::safety_judge: {
            const std::string* text = request.find_slot("text");
            require(text != nullptr, ErrorKind::validation, "mock: missing text slot");
            int level = rules_.safety_level_of(*text);
            response.content =
                "LEVEL: " + std::to_string(level) + kIssueSeparator + "mock rule decision\n";
            break;
        }
    }
    return response;
}

}  // namespace popt::gateway
