#include "popt/sft_builder.hpp"

#include <algorithm>

namespace popt::sft {

using gateway::ChatRequest;
using gateway::TemplateId;

PromptRecord generate_initial(const UserQuery& query, gateway::ChatBackend& backend,
                              const SftBuildConfig& config) {
    ChatRequest request;
    request.template_id = TemplateId::fewshot_optimize;
    request.slots = {{"query", query.text}};
    request.temperature = config.temperature;
    request.seed = derive_seed(config.seed, "sft.fewshot", query.id);
    request.max_retries = config.max_retries;

    gateway::ChatResponse response;
    try {
        response = gateway::complete(request, backend);
    } catch (const PipelineError& e) {
        fail(e.kind(), "generate_initial(" + query.id + "): " + e.what());
    }

    PromptRecord record;
    record.id = query.id + "#fewshot";
    record.query_id = query.id;
    record.text = gateway::parse_refinement(response.content);
    record.origin = PromptOrigin::fewshot;
    record.temperature = request.temperature;
    record.seed = *request.seed;
    require(!record.text.empty(), ErrorKind::parse,
            "generate_initial(" + query.id + "): empty prompt body");
    return record;
}

Critique critique_prompt(const UserQuery& query, const PromptRecord& prompt,
                         gateway::ChatBackend& backend, const SftBuildConfig& config) {
    require(prompt.query_id == query.id, ErrorKind::validation,
            "critique_prompt: prompt " + prompt.id + " does not belong to query " + query.id);

    ChatRequest request;
    request.template_id = TemplateId::critique_refine;
    request.slots = {{"query", query.text}, {"prompt", prompt.text}};
    request.temperature = 0.0;
    request.seed = derive_seed(config.seed, "sft.critique", prompt.id);
    request.max_retries = config.max_retries;

    Critique critique = gateway::parse_critique(gateway::complete(request, backend).content);
    critique.prompt_id = prompt.id;
    return critique;
}

PromptRecord refine_prompt(const UserQuery& query, const PromptRecord& prompt,
                           const Critique& critique, gateway::ChatBackend& backend,
                           const SftBuildConfig& config) {
    require(critique.flawed, ErrorKind::validation,
            "refine_prompt: critique for " + prompt.id + " is not flawed");

    ChatRequest request;
    request.template_id = TemplateId::critique_refine;
    request.slots = {{"query", query.text}, {"prompt", prompt.text}};
    request.temperature = 0.0;
    request.seed = derive_seed(config.seed, "sft.refine", prompt.id);
    request.max_retries = config.max_retries;

    PromptRecord refined;
    refined.id = prompt.id + ".refined";
    refined.query_id = query.id;
    refined.text = gateway::parse_refinement(gateway::complete(request, backend).content);
    refined.origin = PromptOrigin::refined;
    refined.temperature = request.temperature;
    refined.seed = *request.seed;
    refined.parent_id = prompt.id;
    require(!refined.text.empty(), ErrorKind::parse,
            "refine_prompt(" + prompt.id + "): empty refined body");
    return refined;
}

SftBuildResult build_sft_dataset(const std::vector<UserQuery>& queries,
                                 gateway::ChatBackend& backend, const SftBuildConfig& config) {
    struct PerQuery {
        std::optional<SftExample> example;
        std::optional<SkippedQuery> skipped;
    };

    std::vector<PerQuery> items =
        parallel_map_indexed(queries.size(), config.max_concurrency, [&](std::size_t i) {
            const UserQuery& query = queries[i];
            PerQuery out;
            try {
                PromptRecord fewshot = generate_initial(query, backend, config);
                Critique critique = critique_prompt(query, fewshot, backend, config);

                SftExample example;
                example.query_id = query.id;
                example.query = query.text;
                example.critique = critique;
                if (critique.flawed) {
                    PromptRecord refined =
                        refine_prompt(query, fewshot, critique, backend, config);
                    example.target = refined.text;
                    example.lineage = SftLineage::used_refined;
                } else {
                    example.target = fewshot.text;
                    example.lineage = SftLineage::kept_original;
                }
                out.example = std::move(example);
            } catch (const PipelineError& e) {
                out.skipped = SkippedQuery{query.id, e.what()};
            }
            return out;
        });

    SftBuildResult result;
    for (auto& item : items) {
        if (item.example) result.examples.push_back(std::move(*item.example));
        if (item.skipped) result.skipped.push_back(std::move(*item.skipped));
    }
    std::sort(result.examples.begin(), result.examples.end(),
              [](const SftExample& a, const SftExample& b) { return a.query_id < b.query_id; });
    return result;
}

}  // namespace popt::sft
