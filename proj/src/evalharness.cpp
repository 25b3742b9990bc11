#include "popt/evalharness.hpp"

#include <cmath>

namespace popt::eval {

using gateway::ChatRequest;
using gateway::TemplateId;

std::string to_string(AlignmentCategory category) {
    switch (category) {
        case AlignmentCategory::aligned: return "aligned";
        case AlignmentCategory::unsafe: return "unsafe";
        case AlignmentCategory::imprecise: return "imprecise";
        case AlignmentCategory::refusal: return "refusal";
    }
    return "aligned";
}

std::vector<std::string> load_refusal_patterns(const std::filesystem::path& path) {
    std::vector<std::string> patterns;
    for (const auto& line : read_lines(path)) {
        std::string p = trim(line);
        if (!p.empty() && p[0] != '#') patterns.push_back(to_lower(p));
    }
    return patterns;
}

AlignmentVerdict classify_alignment(const std::string& query, const std::string& prompt,
                                    gateway::ChatBackend& backend,
                                    const std::vector<std::string>& refusal_patterns,
                                    std::uint64_t seed) {
    std::string trimmed = trim(prompt);
    if (trimmed.empty()) {
        return {AlignmentCategory::refusal, "empty prompt"};
    }
    std::string lowered = to_lower(trimmed);
    for (const auto& pattern : refusal_patterns) {
        if (lowered.find(pattern) != std::string::npos) {
            return {AlignmentCategory::refusal, "matches refusal pattern: " + pattern};
        }
    }

    ChatRequest request;
    request.template_id = TemplateId::alignment_judge;
    request.slots = {{"query", query}, {"prompt", prompt}};
    request.temperature = 0.0;
    request.seed = seed;

    gateway::AlignmentReply reply =
        gateway::parse_alignment(gateway::complete(request, backend).content);
    AlignmentVerdict verdict;
    verdict.rationale = reply.rationale;
    if (reply.category == "aligned") {
        verdict.category = AlignmentCategory::aligned;
    } else if (reply.category == "unsafe") {
        verdict.category = AlignmentCategory::unsafe;
    } else if (reply.category == "imprecise") {
        verdict.category = AlignmentCategory::imprecise;
    } else {
        verdict.category = AlignmentCategory::refusal;
    }
    return verdict;
}

SafetyLevel score_safety(const std::string& text, gateway::ChatBackend& backend,
                         std::uint64_t seed) {
    ChatRequest request;
    request.template_id = TemplateId::safety_judge;
    request.slots = {{"text", text}};
    request.temperature = 0.0;
    request.seed = seed;
    return {gateway::parse_safety_level(gateway::complete(request, backend).content)};
}

WinRateReport pairwise_winrate(const std::vector<std::pair<double, double>>& items,
                               double tie_epsilon) {
    WinRateReport report;
    for (const auto& [a, b] : items) {
        require(std::isfinite(a) && std::isfinite(b), ErrorKind::validation,
                "pairwise_winrate: non-finite score");
        double diff = a - b;
        if (diff > tie_epsilon) {
            ++report.wins;
        } else if (diff < -tie_epsilon) {
            ++report.losses;
        } else {
            ++report.ties;
        }
    }
    std::size_t total = report.wins + report.losses + report.ties;
    report.win_rate = total == 0 ? 0.0
                                 : static_cast<double>(report.wins) /
                                       static_cast<double>(total);
    return report;
}

Trajectory iterate_optimize(const UserQuery& query, const std::string& initial_prompt,
                            gateway::ChatBackend& backend, int max_iters, std::uint64_t seed) {
    require(max_iters >= 1, ErrorKind::validation, "iterate_optimize: max_iters must be >= 1");

    Trajectory trajectory;
    std::string current = initial_prompt;
    for (int iter = 0; iter < max_iters; ++iter) {
        ChatRequest request;
        request.template_id = TemplateId::critique_refine;
        request.slots = {{"query", query.text}, {"prompt", current}};
        request.temperature = 0.0;
        request.seed = derive_seed(seed, "iterate", static_cast<std::uint64_t>(iter));

        std::string content = gateway::complete(request, backend).content;
        Critique critique = gateway::parse_critique(content);
        critique.prompt_id = query.id + "#iter" + std::to_string(iter);
        trajectory.steps.push_back({current, critique});

        if (!critique.flawed) {
            trajectory.reached_fixed_point = true;
            break;
        }
        current = gateway::parse_refinement(content);
    }
    return trajectory;
}

}  // namespace popt::eval
